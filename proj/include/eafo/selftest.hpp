// Built-in property checks runnable from the CLI. Each check validates an
// implementation against an independent reference computation: exhaustive
// enumeration of keep/drop outcomes for the estimator moments, a lattice
// search for the sampling-plan optimality, finite differences for gradients
// and bound derivatives.

#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "eafo/bound.hpp"
#include "eafo/compressor.hpp"
#include "eafo/controller.hpp"
#include "eafo/model.hpp"
#include "eafo/rng.hpp"
#include "eafo/synthetic.hpp"

namespace eafo::selftest {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

namespace detail {

// Exact moments of the sampled estimator by enumerating all 2^K outcomes.
struct Moments {
  ParamVector mean;
  double variance = 0.0;  // E || reconstructed - original ||^2
};

inline Moments enumerate_moments(const AtomicDecomposition& d, const SamplingPlan& plan) {
  const std::size_t K = d.atom_count();
  const ParamVector original = reconstruct(d);
  Moments m;
  m.mean.assign(d.dim, 0.0);
  for (std::uint64_t mask = 0; mask < (1ULL << K); ++mask) {
    double prob = 1.0;
    ParamVector rec(d.dim, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      if (mask & (1ULL << k)) {
        prob *= plan.probs[k];
        rec[d.indices[k]] += d.weights[k] * d.signs[k] / plan.probs[k];
      } else {
        prob *= 1.0 - plan.probs[k];
      }
    }
    double sq = 0.0;
    for (std::int32_t i = 0; i < d.dim; ++i) {
      m.mean[i] += prob * rec[i];
      const double diff = rec[i] - original[i];
      sq += diff * diff;
    }
    m.variance += prob * sq;
  }
  return m;
}

inline AtomicDecomposition random_decomposition(RngStream& rng, int max_atoms) {
  const int K = 1 + static_cast<int>(rng.below(max_atoms));
  ParamVector v(K + static_cast<std::size_t>(rng.below(4)), 0.0);
  for (int k = 0; k < K; ++k) v[k] = (rng.uniform01() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.05, 3.0);
  return decompose(v);
}

// Minimum of sum d_k^2/p_k over the 0.01 lattice with sum p_k = eps
// (an integer), each p_k in {0.01, ..., 1}. Exhaustive over the lattice via
// dynamic programming on budget units.
inline double lattice_min_cost(const std::vector<double>& d, int eps) {
  const int K = static_cast<int>(d.size());
  const int units = eps * 100;
  const double inf = 1e300;
  std::vector<double> dp(units + 1, inf);
  dp[0] = 0.0;
  for (int k = 0; k < K; ++k) {
    std::vector<double> next(units + 1, inf);
    for (int b = 0; b <= units; ++b) {
      if (dp[b] >= inf) continue;
      for (int u = 1; u <= 100 && b + u <= units; ++u) {
        const double cost = dp[b] + d[k] * d[k] * 100.0 / static_cast<double>(u);
        if (cost < next[b + u]) next[b + u] = cost;
      }
    }
    dp = std::move(next);
  }
  return dp[units];
}

}  // namespace detail

inline std::vector<CheckResult> run_all(std::uint64_t seed) {
  std::vector<CheckResult> results;
  auto rng = RngStream(seed_combine(seed, 0xe5f7));

  {  // estimator mean and variance against exhaustive enumeration
    CheckResult r{"estimator_enumeration", true, ""};
    double worst_mean = 0.0, worst_var = 0.0;
    for (int trial = 0; trial < 40; ++trial) {
      const auto d = detail::random_decomposition(rng, 10);
      const int K = static_cast<int>(d.atom_count());
      const double eps = 1.0 + rng.below(K);
      const auto plan = optimal_probabilities(d, eps);
      const auto mom = detail::enumerate_moments(d, plan);
      const auto orig = reconstruct(d);
      for (std::int32_t i = 0; i < d.dim; ++i)
        worst_mean = std::max(worst_mean, std::abs(mom.mean[i] - orig[i]));
      worst_var = std::max(worst_var, std::abs(mom.variance - variance_closed_form(d, plan)));
    }
    r.pass = worst_mean < 1e-10 && worst_var < 1e-10;
    std::ostringstream os;
    os << "max mean error " << worst_mean << ", max variance error " << worst_var;
    r.detail = os.str();
    results.push_back(r);
  }

  {  // closed-form plan beats every lattice plan (up to lattice resolution)
    CheckResult r{"plan_optimality_lattice", true, ""};
    double worst = -1e300;
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> d(2 + rng.below(4));
      for (auto& x : d) x = rng.uniform(0.1, 2.0);
      ParamVector v(d.size());
      for (std::size_t i = 0; i < d.size(); ++i) v[i] = d[i];
      const auto decomp = decompose(v);
      const int eps = 1 + static_cast<int>(rng.below(d.size()));
      if (!is_balanced(decomp, eps)) continue;
      const auto plan = optimal_probabilities(decomp, eps);
      const double closed = variance_closed_form(decomp, plan);
      double sq = 0.0;
      for (double x : d) sq += x * x;
      const double lattice = detail::lattice_min_cost(d, eps) - sq;
      worst = std::max(worst, closed - lattice);
    }
    r.pass = worst < 1e-8;
    r.detail = "max closed-form excess over lattice minimum: " + std::to_string(worst);
    results.push_back(r);
  }

  {  // variance decomposition identity for balanced profiles
    CheckResult r{"variance_decomposition", true, ""};
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
      const auto d = detail::random_decomposition(rng, 12);
      const double eps = rng.uniform(0.5, static_cast<double>(d.atom_count()));
      if (!is_balanced(d, eps)) continue;
      const auto t = delta_terms(d);
      const double direct = variance_closed_form(d, optimal_probabilities(d, eps));
      worst = std::max(worst, std::abs(direct - (t.delta1 / eps + t.delta2)));
    }
    r.pass = worst < 1e-10;
    r.detail = "max identity gap " + std::to_string(worst);
    results.push_back(r);
  }

  {  // analytic model gradients against central finite differences
    CheckResult r{"gradient_finite_difference", true, ""};
    SyntheticSpec spec;
    spec.num_examples = 24;
    spec.num_classes = 3;
    spec.feature_dim = 5;
    spec.cluster_spread = 1.0;
    const auto data = generate_synthetic(spec, seed ^ 0x51u);
    double worst = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
      ModelSpec ms;
      ms.arch = ModelSpec::Arch::Mlp;
      ms.hidden = {4};
      auto init = RngStream(seed_combine(seed, trial + 77));
      Model model = make_model(ms, spec.feature_dim, spec.num_classes, init);
      for (auto& w : model.params) w += 0.3 * init.gaussian();
      std::vector<std::size_t> batch{0, 3, 7, 11};
      const auto [loss, grad] = loss_and_gradient(model, data, batch);
      (void)loss;
      const double h = 1e-5;
      double max_abs = 0.0, max_diff = 0.0;
      for (std::size_t i = 0; i < model.params.size(); ++i) {
        Model pert = model;
        pert.params[i] += h;
        const double up = loss_and_gradient(pert, data, batch).first;
        pert.params[i] -= 2 * h;
        const double dn = loss_and_gradient(pert, data, batch).first;
        const double fd = (up - dn) / (2 * h);
        max_abs = std::max({max_abs, std::abs(fd), std::abs(grad[i])});
        max_diff = std::max(max_diff, std::abs(fd - grad[i]));
      }
      worst = std::max(worst, max_diff / std::max(max_abs, 1e-12));
    }
    r.pass = worst < 1e-5;
    r.detail = "max relative gradient error " + std::to_string(worst);
    results.push_back(r);
  }

  {  // bound partial derivatives against central finite differences
    CheckResult r{"bound_partials", true, ""};
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      BoundParams p;
      p.L = rng.uniform(0.05, 2.0);
      p.eta = rng.uniform(1e-4, 0.05);
      p.T = rng.uniform(10.0, 5000.0);
      p.T_comp = rng.uniform(0.0, 1.0);
      p.gamma = rng.uniform(1e-4, 0.5);
      p.delta1 = rng.uniform(0.01, 5.0);
      p.delta2 = -rng.uniform(0.0, 0.2);
      p.N = 1.0 + rng.below(64);
      const double F = rng.uniform(0.2, 4.0);
      const double I = rng.uniform(1.5, 40.0);
      const double eps = rng.uniform(0.5, 16.0);
      const auto [dI, dEps] = bound_joint_partials(F, I, eps, p);
      const double hI = 1e-5 * I, hE = 1e-5 * eps;
      const double fdI = (bound_joint(F, I + hI, eps, p).value -
                          bound_joint(F, I - hI, eps, p).value) / (2 * hI);
      const double fdE = (bound_joint(F, I, eps + hE, p).value -
                          bound_joint(F, I, eps - hE, p).value) / (2 * hE);
      worst = std::max(worst, std::abs(fdI - dI) / std::max({std::abs(dI), std::abs(fdI), 1e-9}));
      worst = std::max(worst, std::abs(fdE - dEps) / std::max({std::abs(dEps), std::abs(fdE), 1e-9}));
    }
    r.pass = worst < 1e-6;
    r.detail = "max relative partial error " + std::to_string(worst);
    results.push_back(r);
  }

  {  // closed-form curvature matrix against numeric second differences;
     // the published matrix and the bound agree whenever alpha == gamma, so a
     // gap here would mean the two drifted apart
    CheckResult r{"hessian_consistency", true, ""};
    double worst = 0.0;
    for (int trial = 0; trial < 40; ++trial) {
      BoundParams p;
      p.L = rng.uniform(0.05, 2.0);
      p.eta = rng.uniform(1e-4, 0.05);
      p.T = rng.uniform(10.0, 5000.0);
      p.T_comp = rng.uniform(0.0, 1.0);
      p.gamma = rng.uniform(1e-4, 0.5);
      p.delta1 = rng.uniform(0.01, 5.0);
      p.delta2 = -rng.uniform(0.0, 0.2);
      p.N = 1.0 + rng.below(64);
      p.alpha = p.gamma;
      const double F = rng.uniform(0.2, 4.0);
      const double I = rng.uniform(2.0, 30.0);
      const double eps = rng.uniform(1.0, 12.0);
      const auto h = hessian(I, eps, F, p);
      const double hI = 1e-3 * I, hE = 1e-3 * eps;
      auto f = [&](double i, double e) { return bound_joint(F, i, e, p).value; };
      const double v = std::abs(f(I, eps));
      const double n00 = (f(I + hI, eps) - 2.0 * f(I, eps) + f(I - hI, eps)) / (hI * hI);
      const double n11 = (f(I, eps + hE) - 2.0 * f(I, eps) + f(I, eps - hE)) / (hE * hE);
      const double n01 = (f(I + hI, eps + hE) - f(I + hI, eps - hE) - f(I - hI, eps + hE) +
                          f(I - hI, eps - hE)) /
                         (4.0 * hI * hE);
      auto gap = [&](double numeric, double closed, double step2) {
        const double floor = 64.0 * 2.2e-16 * v / step2;
        return std::max(0.0, std::abs(numeric - closed) - floor) /
               std::max(std::abs(closed), 1e-12);
      };
      worst = std::max({worst, gap(n00, h[0][0], hI * hI), gap(n11, h[1][1], hE * hE),
                        gap(n01, h[0][1], hI * hE)});
    }
    r.pass = worst < 1e-4;
    r.detail = "max relative curvature gap " + std::to_string(worst);
    results.push_back(r);
  }

  {  // schedule raws keep the product I0 * eps0 invariant
    CheckResult r{"schedule_product_invariant", true, ""};
    ControllerState st;
    st.I0 = 30.0;
    st.eps0 = 4.0;
    st.F_w0 = 2.0;
    st.I_max = 1000;
    st.eps_max = 1e9;
    st.eps_min = 1e-9;
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
      const double F = rng.uniform(1e-4, 50.0);
      const auto d = schedule(st, F);
      worst = std::max(worst, std::abs(d.raw_I * d.raw_eps - st.I0 * st.eps0) /
                                  (st.I0 * st.eps0));
    }
    r.pass = worst < 1e-12;
    r.detail = "max relative product drift " + std::to_string(worst);
    results.push_back(r);
  }

  return results;
}

}  // namespace eafo::selftest
