// Deterministic random streams for the simulator.
//
// Every stochastic component (mini-batch sampling, Bernoulli atom sampling,
// weight init, data generation, partitioning) owns its own stream, derived
// from the experiment seed plus structural tags (purpose, round, client).
// All distributions are hand-rolled on top of the raw 64-bit output so runs
// are reproducible independent of the standard library implementation.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>

namespace eafo {

// splitmix64 finalizer (Steele et al.).
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  return mix64(state);
}

// Folds a tag into a seed; chained to derive independent stream seeds.
inline std::uint64_t seed_combine(std::uint64_t seed, std::uint64_t tag) {
  return mix64(seed ^ (0x9e3779b97f4a7c15ULL * (tag + 0x632be59bd9b4e019ULL)));
}

enum class StreamPurpose : std::uint64_t {
  Batch = 1,        // mini-batch index draws
  Compress = 2,     // Bernoulli keep/drop draws
  ModelInit = 3,    // weight initialization
  Partition = 4,    // shard shuffling
  DataGen = 5,      // synthetic dataset generation
  ControlLoss = 6,  // initial-loss anchor batches
};

class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() { return splitmix64_next(state_); }

  // Uniform double in [0, 1).
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). Modulo bias is negligible for n far below 2^64.
  std::size_t below(std::size_t n) {
    return static_cast<std::size_t>(next_u64() % static_cast<std::uint64_t>(n));
  }

  // Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal via the polar Box-Muller transform.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform01() - 1.0;
      v = 2.0 * uniform01() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
  }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Stream for (seed, purpose) plus optional round/client coordinates.
inline RngStream make_stream(std::uint64_t seed, StreamPurpose purpose,
                             std::uint64_t round = 0, std::uint64_t client = 0) {
  std::uint64_t s = seed_combine(seed, static_cast<std::uint64_t>(purpose));
  s = seed_combine(s, round);
  s = seed_combine(s, client);
  return RngStream(s);
}

}  // namespace eafo
