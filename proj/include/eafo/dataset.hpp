// Labeled datasets and client partitioning.

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "eafo/errors.hpp"
#include "eafo/rng.hpp"

namespace eafo {

// Flat row-major feature matrix plus integer class labels. Features are kept
// as float to halve memory on image datasets; all gradient math is double.
struct Dataset {
  std::vector<float> features;  // size() == n * feature_dim
  std::vector<int> labels;      // size() == n
  int feature_dim = 0;
  int num_classes = 0;

  std::size_t size() const { return labels.size(); }

  std::span<const float> row(std::size_t i) const {
    return {features.data() + i * static_cast<std::size_t>(feature_dim),
            static_cast<std::size_t>(feature_dim)};
  }

  void validate() const {
    if (feature_dim <= 0 || num_classes <= 0)
      throw config_error("dataset: feature_dim and num_classes must be positive");
    if (features.size() != labels.size() * static_cast<std::size_t>(feature_dim))
      throw config_error("dataset: feature matrix size does not match label count");
    for (int y : labels)
      if (y < 0 || y >= num_classes)
        throw config_error("dataset: label " + std::to_string(y) + " out of range");
  }
};

// One client's slice of the training data. Indices point into the parent
// dataset; weight_p is the client's aggregation weight (sums to 1 over all
// clients, proportional to shard size).
struct ClientShard {
  int client_id = 0;
  std::vector<std::size_t> indices;
  double weight_p = 0.0;
};

struct PartitionScheme {
  enum class Kind { IID, NonIID };
  Kind kind = Kind::IID;
  int shards_per_client = 2;  // NonIID only: label-pure shards per client
};

namespace detail {

// Splits each label run into label-pure contiguous shards so a client holding
// s shards sees at most s distinct labels. Shard counts per label are
// proportional to label frequency (largest remainder), at least 1 per label,
// at most the label's example count.
inline std::vector<std::vector<std::size_t>> label_pure_shards(const Dataset& data,
                                                               int total_shards) {
  const std::size_t n = data.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return data.labels[a] < data.labels[b];
  });

  // Label runs in sorted order.
  struct Run {
    std::size_t begin, count;
  };
  std::vector<Run> runs;
  std::size_t pos = 0;
  while (pos < n) {
    std::size_t end = pos;
    while (end < n && data.labels[order[end]] == data.labels[order[pos]]) ++end;
    runs.push_back({pos, end - pos});
    pos = end;
  }

  const int num_runs = static_cast<int>(runs.size());
  if (total_shards < num_runs)
    throw config_error("partition: need at least one shard per present label (" +
                       std::to_string(num_runs) + " labels, " +
                       std::to_string(total_shards) + " shards)");
  if (static_cast<std::size_t>(total_shards) > n)
    throw config_error("partition: more shards than examples");

  // Proportional allocation with largest-remainder rounding.
  std::vector<int> alloc(num_runs, 1);
  int assigned = num_runs;
  std::vector<std::pair<double, int>> frac;
  for (int r = 0; r < num_runs; ++r) {
    const double share =
        static_cast<double>(total_shards) * static_cast<double>(runs[r].count) / static_cast<double>(n);
    const int extra = std::max(0, static_cast<int>(share) - 1);
    alloc[r] += extra;
    assigned += extra;
    frac.push_back({share - static_cast<double>(static_cast<int>(share)), r});
  }
  std::sort(frac.begin(), frac.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (std::size_t i = 0; assigned < total_shards; i = (i + 1) % frac.size()) {
    const int r = frac[i].second;
    if (static_cast<std::size_t>(alloc[r]) < runs[r].count) {
      ++alloc[r];
      ++assigned;
    }
  }
  // Over-allocation can only come from rounding on tiny labels: cap and
  // re-donate to labels with spare capacity.
  int overflow = 0;
  for (int r = 0; r < num_runs; ++r) {
    if (static_cast<std::size_t>(alloc[r]) > runs[r].count) {
      overflow += alloc[r] - static_cast<int>(runs[r].count);
      alloc[r] = static_cast<int>(runs[r].count);
    }
  }
  for (int r = 0; overflow > 0 && r < num_runs; ++r) {
    while (overflow > 0 && static_cast<std::size_t>(alloc[r]) < runs[r].count) {
      ++alloc[r];
      --overflow;
    }
  }
  if (overflow > 0) throw config_error("partition: shard allocation infeasible");

  std::vector<std::vector<std::size_t>> shards;
  shards.reserve(total_shards);
  for (int r = 0; r < num_runs; ++r) {
    const std::size_t cnt = runs[r].count;
    const int parts = alloc[r];
    std::size_t off = 0;
    for (int p = 0; p < parts; ++p) {
      const std::size_t len = cnt / parts + (static_cast<std::size_t>(p) < cnt % parts ? 1 : 0);
      std::vector<std::size_t> shard;
      shard.reserve(len);
      for (std::size_t j = 0; j < len; ++j) shard.push_back(order[runs[r].begin + off + j]);
      off += len;
      shards.push_back(std::move(shard));
    }
  }
  return shards;
}

inline void shuffle_indices(std::vector<std::size_t>& v, RngStream& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

}  // namespace detail

// Splits a dataset across clients. IID draws a uniform random disjoint split;
// NonIID hands each client `shards_per_client` label-pure shards from the
// label-sorted order. weight_p is proportional to shard size.
inline std::vector<ClientShard> partition(const Dataset& data, int num_clients,
                                          const PartitionScheme& scheme, RngStream& rng) {
  if (num_clients < 1) throw config_error("partition: num_clients must be >= 1");
  const std::size_t n = data.size();
  if (n < static_cast<std::size_t>(num_clients))
    throw config_error("partition: fewer examples than clients");

  std::vector<ClientShard> shards(num_clients);
  if (scheme.kind == PartitionScheme::Kind::IID) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    detail::shuffle_indices(order, rng);
    std::size_t off = 0;
    for (int c = 0; c < num_clients; ++c) {
      const std::size_t len =
          n / num_clients + (static_cast<std::size_t>(c) < n % num_clients ? 1 : 0);
      shards[c].client_id = c;
      shards[c].indices.assign(order.begin() + off, order.begin() + off + len);
      off += len;
    }
  } else {
    if (scheme.shards_per_client < 1)
      throw config_error("partition: shards_per_client must be >= 1");
    const int total = num_clients * scheme.shards_per_client;
    auto pieces = detail::label_pure_shards(data, total);
    std::vector<std::size_t> deal(pieces.size());
    std::iota(deal.begin(), deal.end(), std::size_t{0});
    detail::shuffle_indices(deal, rng);
    for (int c = 0; c < num_clients; ++c) {
      shards[c].client_id = c;
      for (int s = 0; s < scheme.shards_per_client; ++s) {
        const auto& piece = pieces[deal[c * scheme.shards_per_client + s]];
        shards[c].indices.insert(shards[c].indices.end(), piece.begin(), piece.end());
      }
    }
  }

  for (auto& s : shards) {
    if (s.indices.empty()) throw config_error("partition: produced an empty shard");
    s.weight_p = static_cast<double>(s.indices.size()) / static_cast<double>(n);
  }
  return shards;
}

}  // namespace eafo
