// Small differentiable classifiers and the per-client SGD primitives.
//
// Supported architectures: multinomial logistic regression and an MLP with
// tanh hidden layers, both trained with mean cross-entropy. Parameters live
// in one flat vector (layer weights row-major, then biases) so the rest of
// the pipeline can treat an update as a plain vector.

#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "eafo/dataset.hpp"
#include "eafo/errors.hpp"
#include "eafo/rng.hpp"

namespace eafo {

using ParamVector = std::vector<double>;

inline bool all_finite(const ParamVector& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

struct ModelSpec {
  enum class Arch { LogisticRegression, Mlp };
  Arch arch = Arch::LogisticRegression;
  std::vector<int> hidden;  // Mlp only; layer widths

  // in -> hidden... -> out
  std::vector<int> layer_sizes(int feature_dim, int num_classes) const {
    std::vector<int> sizes{feature_dim};
    if (arch == Arch::Mlp)
      for (int h : hidden) sizes.push_back(h);
    sizes.push_back(num_classes);
    return sizes;
  }

  std::size_t param_count(int feature_dim, int num_classes) const {
    const auto sizes = layer_sizes(feature_dim, num_classes);
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l)
      n += static_cast<std::size_t>(sizes[l]) * sizes[l + 1] + sizes[l + 1];
    return n;
  }
};

struct Model {
  ModelSpec spec;
  int feature_dim = 0;
  int num_classes = 0;
  ParamVector params;

  std::size_t dim() const { return params.size(); }
};

// Zero-initialized logistic regression; Xavier-initialized MLP.
inline Model make_model(const ModelSpec& spec, int feature_dim, int num_classes,
                        RngStream& rng) {
  if (feature_dim <= 0 || num_classes < 2)
    throw config_error("model: need feature_dim > 0 and num_classes >= 2");
  for (int h : spec.hidden)
    if (h <= 0) throw config_error("model: hidden layer widths must be positive");
  Model m;
  m.spec = spec;
  m.feature_dim = feature_dim;
  m.num_classes = num_classes;
  m.params.assign(spec.param_count(feature_dim, num_classes), 0.0);
  if (spec.arch == ModelSpec::Arch::Mlp) {
    const auto sizes = spec.layer_sizes(feature_dim, num_classes);
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      const std::size_t fan_in = sizes[l], fan_out = sizes[l + 1];
      const double scale = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
      for (std::size_t i = 0; i < fan_in * fan_out; ++i) m.params[off + i] = scale * rng.gaussian();
      off += fan_in * fan_out + fan_out;  // biases stay zero
    }
  }
  return m;
}

namespace detail {

// Forward pass for one example; returns per-class probabilities via a
// numerically stable softmax. Hidden activations are appended to `acts`
// when a gradient pass will follow.
inline void forward_example(const ParamVector& w, std::span<const float> x,
                            const std::vector<int>& sizes,
                            std::vector<std::vector<double>>* acts,
                            std::vector<double>& probs) {
  std::vector<double> cur(x.begin(), x.end());
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const std::size_t in = sizes[l], out = sizes[l + 1];
    std::vector<double> next(out);
    for (std::size_t j = 0; j < out; ++j) {
      const double* row = w.data() + off + j * in;
      double z = w[off + in * out + j];  // bias
      for (std::size_t i = 0; i < in; ++i) z += row[i] * cur[i];
      next[j] = z;
    }
    off += in * out + out;
    const bool last = (l + 2 == sizes.size());
    if (!last)
      for (double& v : next) v = std::tanh(v);
    if (acts) acts->push_back(cur);
    cur = std::move(next);
  }
  // softmax
  double zmax = cur[0];
  for (double z : cur) zmax = std::max(zmax, z);
  double denom = 0.0;
  probs.resize(cur.size());
  for (std::size_t j = 0; j < cur.size(); ++j) {
    probs[j] = std::exp(cur[j] - zmax);
    denom += probs[j];
  }
  for (double& p : probs) p /= denom;
  if (acts) acts->push_back(cur);  // post-tanh hidden states + logits slot reused below
}

}  // namespace detail

// Mean cross-entropy and its exact gradient over a batch of dataset rows.
inline std::pair<double, ParamVector> loss_and_gradient(const Model& model,
                                                        const Dataset& data,
                                                        std::span<const std::size_t> batch) {
  if (batch.empty()) throw config_error("loss_and_gradient: empty batch");
  if (data.feature_dim != model.feature_dim || data.num_classes != model.num_classes)
    throw config_error("loss_and_gradient: dataset/model dimension mismatch");

  const auto sizes = model.spec.layer_sizes(model.feature_dim, model.num_classes);
  const std::size_t num_layers = sizes.size() - 1;
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  double loss = 0.0;
  ParamVector grad(model.params.size(), 0.0);
  std::vector<double> probs;
  std::vector<std::vector<double>> acts;  // inputs of each layer, then logits

  // layer offsets into the flat parameter vector
  std::vector<std::size_t> offs(num_layers);
  {
    std::size_t off = 0;
    for (std::size_t l = 0; l < num_layers; ++l) {
      offs[l] = off;
      off += static_cast<std::size_t>(sizes[l]) * sizes[l + 1] + sizes[l + 1];
    }
  }

  for (std::size_t bi = 0; bi < batch.size(); ++bi) {
    const std::size_t idx = batch[bi];
    const int y = data.labels[idx];
    acts.clear();
    detail::forward_example(model.params, data.row(idx), sizes, &acts, probs);

    // stable -log p[y] from the logits
    const auto& logits = acts.back();
    double zmax = logits[0];
    for (double z : logits) zmax = std::max(zmax, z);
    double lse = 0.0;
    for (double z : logits) lse += std::exp(z - zmax);
    loss += (std::log(lse) + zmax - logits[y]) * inv_b;

    // delta at the output = (softmax - onehot)/B, then walk layers backwards
    std::vector<double> delta(probs);
    delta[y] -= 1.0;
    for (double& d : delta) d *= inv_b;

    for (std::size_t l = num_layers; l-- > 0;) {
      const std::size_t in = sizes[l], out = sizes[l + 1];
      const auto& input = acts[l];
      double* gw = grad.data() + offs[l];
      double* gb = gw + in * out;
      std::vector<double> prev_delta;
      if (l > 0) prev_delta.assign(in, 0.0);
      for (std::size_t j = 0; j < out; ++j) {
        const double dj = delta[j];
        gb[j] += dj;
        double* grow = gw + j * in;
        const double* wrow = model.params.data() + offs[l] + j * in;
        for (std::size_t i = 0; i < in; ++i) {
          grow[i] += dj * input[i];
          if (l > 0) prev_delta[i] += dj * wrow[i];
        }
      }
      if (l > 0) {
        // input of layer l is tanh(z); d tanh = 1 - tanh^2
        for (std::size_t i = 0; i < in; ++i) prev_delta[i] *= 1.0 - input[i] * input[i];
        delta = std::move(prev_delta);
      }
    }
  }
  return {loss, std::move(grad)};
}

// Forward-only loss + top-1 accuracy over an index range.
inline std::pair<double, double> evaluate_model(const Model& model, const Dataset& data,
                                                std::span<const std::size_t> idxs) {
  if (idxs.empty()) throw config_error("evaluate_model: empty evaluation set");
  const auto sizes = model.spec.layer_sizes(model.feature_dim, model.num_classes);
  std::vector<double> probs;
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t idx : idxs) {
    detail::forward_example(model.params, data.row(idx), sizes, nullptr, probs);
    const int y = data.labels[idx];
    loss += -std::log(std::max(probs[y], 1e-300));
    std::size_t best = 0;
    for (std::size_t j = 1; j < probs.size(); ++j)
      if (probs[j] > probs[best]) best = j;
    correct += (static_cast<int>(best) == y) ? 1 : 0;
  }
  const double n = static_cast<double>(idxs.size());
  return {loss / n, static_cast<double>(correct) / n};
}

// Runs `steps` local SGD steps from w_start on the shard, sampling each
// mini-batch with replacement from the client's own stream. Returns the sum
// of the per-step gradients (the client's uplink payload before compression)
// and the last mini-batch loss.
struct LocalUpdateResult {
  ParamVector aggregated_update;
  double final_loss = 0.0;
};

inline LocalUpdateResult local_update_run(const Model& model, const ParamVector& w_start,
                                          const Dataset& data, const ClientShard& shard,
                                          int steps, double eta, int batch_size,
                                          RngStream& rng) {
  if (steps < 1) throw config_error("local_update_run: steps must be >= 1");
  if (eta < 0.0) throw config_error("local_update_run: negative learning rate");
  if (batch_size < 1) throw config_error("local_update_run: batch_size must be >= 1");
  if (shard.indices.empty()) throw config_error("local_update_run: empty shard");
  if (w_start.size() != model.params.size())
    throw config_error("local_update_run: weight dimension mismatch");

  Model local = model;
  local.params = w_start;
  ParamVector agg(w_start.size(), 0.0);
  std::vector<std::size_t> batch(static_cast<std::size_t>(batch_size));
  double last_loss = 0.0;
  for (int i = 0; i < steps; ++i) {
    for (auto& b : batch) b = shard.indices[rng.below(shard.indices.size())];
    auto [loss, grad] = loss_and_gradient(local, data, batch);
    last_loss = loss;
    for (std::size_t k = 0; k < agg.size(); ++k) {
      agg[k] += grad[k];
      local.params[k] -= eta * grad[k];
    }
  }
  return {std::move(agg), last_loss};
}

// Global descent step on the aggregated update.
inline ParamVector apply_global_step(const ParamVector& w, const ParamVector& aggregated,
                                     double eta) {
  if (w.size() != aggregated.size())
    throw config_error("apply_global_step: dimension mismatch");
  ParamVector out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = w[i] - eta * aggregated[i];
  return out;
}

}  // namespace eafo
