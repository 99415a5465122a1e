// Round loop: schedule (I_t, eps_t), run local SGD on every client, compress
// and aggregate the updates, apply the global step, and charge simulated
// download/compute/upload time. Baseline strategies run through the same
// loop so differences are attributable to the (I_t, eps_t) policy alone.

#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <utility>
#include <vector>

#include "eafo/compressor.hpp"
#include "eafo/controller.hpp"
#include "eafo/dataset.hpp"
#include "eafo/errors.hpp"
#include "eafo/model.hpp"
#include "eafo/rng.hpp"
#include "eafo/strategy.hpp"
#include "eafo/time_model.hpp"

namespace eafo {

struct RoundMetrics {
  int round = 0;
  double global_loss = 0.0;    // weighted client-reported final mini-batch losses
  double eval_loss = 0.0;      // held-out cross-entropy
  double eval_accuracy = 0.0;  // held-out top-1
  int I_t = 1;
  double eps_t = 0.0;          // 0 = dense (no compression)
  double raw_I = 0.0;          // controller raws; equal to the realized values
  double raw_eps = 0.0;        //   for fixed strategies
  double t_download_s = 0.0;   // slowest device, per component
  double t_compute_s = 0.0;
  double t_upload_s = 0.0;
  double t_round_s = 0.0;      // max over devices of (download+compute+upload)
  double cumulative_time_s = 0.0;
  std::uint64_t bytes_up = 0;
  std::uint64_t bytes_down = 0;
  double delta1_hat = 0.0;     // client-mean variance constants of this round
  double delta2_hat = 0.0;
  double L_hat = 0.0;          // secant smoothness estimate
  double drop_factor_var = 1.0;  // magnitudes of the ratio factors the
  double drop_factor_lr = 1.0;   //   decoupled schedule discards
};

struct SimSettings {
  std::uint64_t seed = 1;
  int num_clients = 32;
  ModelSpec model;
  double lr = 0.01;
  int batch_size = 32;
  int rounds = 200;            // round cap (>= 0)
  double time_budget_s = 0.0;  // <= 0: no simulated-time cap
  PartitionScheme partition;
  StrategyConfig strategy;
  ControllerState controller;  // clamps and initial values; anchor filled at start
  TimeModel time_model;

  void validate() const {
    if (num_clients < 1) throw config_error("settings: num_clients must be >= 1");
    if (!(lr > 0.0)) throw config_error("settings: lr must be positive");
    if (batch_size < 1) throw config_error("settings: batch_size must be >= 1");
    if (rounds < 0) throw config_error("settings: rounds must be >= 0");
    strategy.validate();
    time_model.validate(num_clients);
  }
};

class Simulation {
 public:
  Simulation(SimSettings settings, Dataset train, Dataset eval)
      : s_(std::move(settings)), train_(std::move(train)), eval_(std::move(eval)) {
    s_.validate();
    train_.validate();
    eval_.validate();
    if (eval_.size() == 0) throw config_error("simulation: empty evaluation set");

    auto part_rng = make_stream(s_.seed, StreamPurpose::Partition);
    shards_ = partition(train_, s_.num_clients, s_.partition, part_rng);

    auto init_rng = make_stream(s_.seed, StreamPurpose::ModelInit);
    model_ = make_model(s_.model, train_.feature_dim, train_.num_classes, init_rng);

    eval_indices_.resize(eval_.size());
    std::iota(eval_indices_.begin(), eval_indices_.end(), std::size_t{0});

    ctrl_ = s_.controller;
    ctrl_.F_w0 = anchor_loss();
    ctrl_.last_F = ctrl_.F_w0;
    ctrl_.validate();
  }

  bool done() const {
    if (round_ >= s_.rounds) return true;
    return s_.time_budget_s > 0.0 && cumulative_time_ >= s_.time_budget_s;
  }

  const ParamVector& weights() const { return model_.params; }
  const Model& model() const { return model_; }
  const std::vector<ClientShard>& shards() const { return shards_; }
  double initial_control_loss() const { return ctrl_.F_w0; }
  double cumulative_time() const { return cumulative_time_; }
  int rounds_run() const { return round_; }

  RoundMetrics step() {
    if (done()) throw std::logic_error("simulation: step() after completion");
    RoundMetrics m;
    m.round = round_;

    const double F_ctrl = ctrl_.last_F;
    decide(F_ctrl, m);

    const std::size_t dim = model_.dim();
    const bool compress = s_.strategy.compresses();
    ParamVector agg_sum(dim, 0.0);
    std::vector<std::uint64_t> uplink_bits(s_.num_clients, 0);
    double weighted_loss = 0.0;
    double d1_sum = 0.0, d2_sum = 0.0;

    for (int n = 0; n < s_.num_clients; ++n) {
      auto batch_rng = make_stream(s_.seed, StreamPurpose::Batch, round_, n);
      auto local = local_update_run(model_, model_.params, train_, shards_[n], m.I_t,
                                    s_.lr, s_.batch_size, batch_rng);
      weighted_loss += shards_[n].weight_p * local.final_loss;

      if (compress) {
        const auto decomp = decompose(local.aggregated_update);
        const auto dt = delta_terms(decomp);
        d1_sum += dt.delta1;
        d2_sum += dt.delta2;
        if (decomp.atom_count() > 0) {
          const auto plan = optimal_probabilities(decomp, m.eps_t);
          auto comp_rng = make_stream(s_.seed, StreamPurpose::Compress, round_, n);
          const auto cu = sample_estimator(decomp, plan, comp_rng);
          uplink_bits[n] =
              static_cast<std::uint64_t>(cu.kept_count()) * s_.time_model.bits_per_atom;
          for (std::size_t k = 0; k < cu.indices.size(); ++k)
            agg_sum[cu.indices[k]] += cu.values[k];
        }
      } else {
        uplink_bits[n] = static_cast<std::uint64_t>(dim) * s_.time_model.bits_per_param;
        for (std::size_t k = 0; k < dim; ++k) agg_sum[k] += local.aggregated_update[k];
      }
    }

    ParamVector agg(dim);
    const double inv_n = 1.0 / static_cast<double>(s_.num_clients);
    for (std::size_t k = 0; k < dim; ++k) agg[k] = agg_sum[k] * inv_n;

    model_.params = apply_global_step(model_.params, agg, s_.lr);
    if (!all_finite(model_.params))
      throw std::runtime_error("simulation: model diverged (non-finite weights)");

    m.global_loss = weighted_loss;
    if (compress) {
      m.delta1_hat = d1_sum * inv_n;
      m.delta2_hat = d2_sum * inv_n;
    }
    update_estimates(m, agg);

    const auto delays = simulate_round_time(m.I_t, uplink_bits, dim, s_.time_model);
    for (const auto& d : delays.per_device) {
      m.t_download_s = std::max(m.t_download_s, d.download_s);
      m.t_compute_s = std::max(m.t_compute_s, d.compute_s);
      m.t_upload_s = std::max(m.t_upload_s, d.upload_s);
    }
    m.t_round_s = delays.round_s;
    cumulative_time_ += m.t_round_s;
    m.cumulative_time_s = cumulative_time_;

    std::uint64_t bits_up = 0;
    for (auto b : uplink_bits) bits_up += b;
    m.bytes_up = bits_up / 8;
    m.bytes_down = static_cast<std::uint64_t>(s_.num_clients) * dim *
                   s_.time_model.bits_per_param / 8;

    const auto ev = evaluate_model(model_, eval_, eval_indices_);
    m.eval_loss = ev.first;
    m.eval_accuracy = ev.second;

    ctrl_.last_F = m.global_loss;
    prev_I_ = m.I_t;
    prev_eps_ = m.eps_t;
    prev_agg_ = std::move(agg);
    ++round_;
    return m;
  }

 private:
  // Weighted client losses at the initial weights, one mini-batch per client.
  // Anchors the controller without shipping data to the server.
  double anchor_loss() {
    double f0 = 0.0;
    std::vector<std::size_t> batch(static_cast<std::size_t>(s_.batch_size));
    for (int n = 0; n < s_.num_clients; ++n) {
      auto rng = make_stream(s_.seed, StreamPurpose::ControlLoss, 0, n);
      for (auto& b : batch) b = shards_[n].indices[rng.below(shards_[n].indices.size())];
      f0 += shards_[n].weight_p * evaluate_model(model_, train_, batch).first;
    }
    return f0;
  }

  void decide(double F_ctrl, RoundMetrics& m) {
    using Kind = StrategyConfig::Kind;
    switch (s_.strategy.kind) {
      case Kind::Eafo: {
        ScheduleDecision d;
        if (s_.strategy.controller == StrategyConfig::ControllerMode::Stationary &&
            round_ >= 2 && L_hat_ > 0.0) {
          BoundParams est;
          est.L = L_hat_;
          est.eta = s_.lr;
          est.T = s_.time_budget_s > 0.0 ? s_.time_budget_s : 1.0;
          est.delta1 = last_delta1_;
          est.delta2 = last_delta2_;
          est.N = static_cast<double>(s_.num_clients);
          est.alpha = s_.time_model.bits_per_atom / s_.time_model.uplink_bps;
          est.gamma = est.alpha;
          d = stationary_schedule(ctrl_, F_ctrl, prev_eps_, est);
        } else {
          d = schedule(ctrl_, F_ctrl);
        }
        m.I_t = d.I_t;
        m.eps_t = d.eps_t;
        m.raw_I = d.raw_I;
        m.raw_eps = d.raw_eps;
        break;
      }
      case Kind::AdaptiveIOnly: {
        const auto d = schedule(ctrl_, F_ctrl);
        m.I_t = d.I_t;
        m.eps_t = 0.0;
        m.raw_I = d.raw_I;
        m.raw_eps = 0.0;
        break;
      }
      case Kind::FixedBoth:
        m.I_t = static_cast<int>(std::floor(s_.strategy.fixed_I + 0.5));
        m.eps_t = s_.strategy.compresses() ? s_.strategy.fixed_eps : 0.0;
        m.raw_I = s_.strategy.fixed_I;
        m.raw_eps = m.eps_t;
        break;
      case Kind::FixedEpsOnly:
        m.I_t = 1;
        m.eps_t = s_.strategy.fixed_eps;
        m.raw_I = 1.0;
        m.raw_eps = m.eps_t;
        break;
      case Kind::FedAvgPlain:
        m.I_t = static_cast<int>(std::floor(s_.strategy.fixed_I + 0.5));
        m.eps_t = 0.0;
        m.raw_I = s_.strategy.fixed_I;
        m.raw_eps = 0.0;
        break;
    }
  }

  // Secant smoothness estimate and the two ratio factors the decoupled
  // cube-root law drops relative to the full stationary equations.
  void update_estimates(RoundMetrics& m, const ParamVector& agg) {
    if (round_ >= 1 && !prev_agg_.empty()) {
      double num = 0.0, den = 0.0;
      for (std::size_t k = 0; k < agg.size(); ++k) {
        const double dg = agg[k] - prev_agg_[k];
        num += dg * dg;
        den += prev_agg_[k] * prev_agg_[k];
      }
      den = s_.lr * std::sqrt(den);  // |w_t - w_{t-1}| = lr * |agg_{t-1}|
      if (den > 0.0) L_hat_ = std::sqrt(num) / den;
    }
    m.L_hat = L_hat_;
    if (round_ >= 1 && m.eps_t > 0.0 && prev_eps_ > 0.0) {
      const double a = m.delta1_hat + m.delta2_hat * prev_eps_;
      const double b = m.delta1_hat + m.delta2_hat * m.eps_t;
      if (a > 0.0 && b > 0.0) m.drop_factor_var = std::sqrt(a / b);
      const double u = 1.0 - s_.lr * L_hat_ * (m.I_t - 1.0);
      const double v = 1.0 - s_.lr * L_hat_ * (prev_I_ - 1.0);
      if (u > 0.0 && v > 0.0) m.drop_factor_lr = std::sqrt(u / v);
    }
    last_delta1_ = m.delta1_hat;
    last_delta2_ = m.delta2_hat;
  }

  SimSettings s_;
  Dataset train_;
  Dataset eval_;
  std::vector<ClientShard> shards_;
  Model model_;
  std::vector<std::size_t> eval_indices_;
  ControllerState ctrl_;
  int round_ = 0;
  double cumulative_time_ = 0.0;
  int prev_I_ = 0;
  double prev_eps_ = 0.0;
  double last_delta1_ = 0.0;
  double last_delta2_ = 0.0;
  double L_hat_ = 0.0;
  ParamVector prev_agg_;
};

// Held-out evaluation of a model over a whole dataset.
inline std::pair<double, double> evaluate(const Model& model, const Dataset& eval_set) {
  std::vector<std::size_t> idxs(eval_set.size());
  std::iota(idxs.begin(), idxs.end(), std::size_t{0});
  return evaluate_model(model, eval_set, idxs);
}

struct RoundSink {
  virtual ~RoundSink() = default;
  virtual void on_round(const RoundMetrics& m) = 0;
};

inline std::vector<RoundMetrics> run_experiment(SimSettings settings, Dataset train,
                                                Dataset eval, RoundSink* sink = nullptr) {
  Simulation sim(std::move(settings), std::move(train), std::move(eval));
  std::vector<RoundMetrics> out;
  while (!sim.done()) {
    out.push_back(sim.step());
    if (sink) sink->on_round(out.back());
  }
  return out;
}

}  // namespace eafo
