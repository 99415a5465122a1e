// Sparsifying compressor for client updates.
//
// An update vector is decomposed into signed unit coordinate atoms with
// non-negative weights. Each atom is kept independently with a probability
// chosen to minimize the estimator variance under an expected-count budget
// eps; kept atoms are rescaled by 1/p so the reconstruction is unbiased.
// The variance of the estimator has the closed form
//   sum_k d_k^2 (1/p_k - 1)
// which, under the optimal probabilities for a balanced weight profile,
// collapses to delta1/eps + delta2 with delta1 = (sum_k d_k)^2 and
// delta2 = -sum_k d_k^2.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "eafo/errors.hpp"
#include "eafo/model.hpp"
#include "eafo/rng.hpp"

namespace eafo {

// Entrywise atomic decomposition: one atom per nonzero coordinate, sign
// folded into the atom so every weight is positive.
struct AtomicDecomposition {
  std::vector<double> weights;   // d_k > 0
  std::vector<std::int8_t> signs;    // +-1
  std::vector<std::int32_t> indices; // coordinate of each atom
  std::int32_t dim = 0;

  std::size_t atom_count() const { return weights.size(); }

  double l1_norm() const {
    double s = 0.0;
    for (double d : weights) s += d;
    return s;
  }
};

struct SamplingPlan {
  std::vector<double> probs;  // aligned with the decomposition's atoms, in (0,1]
  double budget_eps = 0.0;
};

// Sampled atoms with the unbiasedness rescale already applied
// (value = sign * d / p).
struct CompressedUpdate {
  std::vector<std::int32_t> indices;
  std::vector<double> values;
  std::int32_t dim = 0;
  double budget_eps = 0.0;

  std::size_t kept_count() const { return indices.size(); }
};

// Variance decomposition constants of one update: variance under the optimal
// balanced plan equals delta1/eps + delta2.
struct DeltaTerms {
  double delta1 = 0.0;  // (l1 norm of d)^2, >= 0
  double delta2 = 0.0;  // -sum d_k^2, <= 0
};

inline AtomicDecomposition decompose(const ParamVector& update) {
  AtomicDecomposition d;
  d.dim = static_cast<std::int32_t>(update.size());
  for (std::size_t i = 0; i < update.size(); ++i) {
    const double v = update[i];
    if (v == 0.0) continue;  // zero coordinates carry no atom
    d.weights.push_back(std::abs(v));
    d.signs.push_back(v > 0.0 ? 1 : -1);
    d.indices.push_back(static_cast<std::int32_t>(i));
  }
  return d;
}

inline ParamVector reconstruct(const AtomicDecomposition& d) {
  ParamVector out(static_cast<std::size_t>(d.dim), 0.0);
  for (std::size_t k = 0; k < d.atom_count(); ++k)
    out[d.indices[k]] = d.weights[k] * static_cast<double>(d.signs[k]);
  return out;
}

inline ParamVector reconstruct(const CompressedUpdate& u) {
  ParamVector out(static_cast<std::size_t>(u.dim), 0.0);
  for (std::size_t k = 0; k < u.indices.size(); ++k) out[u.indices[k]] += u.values[k];
  return out;
}

// Variance-minimizing keep probabilities under the constraint
// sum_k p_k = eps, 0 < p_k <= 1. For a balanced profile the minimizer is
// p_k = d_k * eps / |d|_1; unbalanced atoms are clamped to 1 by iterative
// water-filling and the remaining budget is redistributed.
inline SamplingPlan optimal_probabilities(const AtomicDecomposition& decomp, double eps) {
  if (!(eps > 0.0)) throw std::domain_error("optimal_probabilities: eps must be positive");
  const std::size_t K = decomp.atom_count();
  SamplingPlan plan;
  plan.budget_eps = eps;
  plan.probs.assign(K, 0.0);
  if (K == 0) return plan;

  std::vector<std::size_t> active(K);
  for (std::size_t k = 0; k < K; ++k) active[k] = k;
  double budget = eps;

  while (!active.empty()) {
    if (budget >= static_cast<double>(active.size())) {
      for (std::size_t k : active) plan.probs[k] = 1.0;
      break;
    }
    double mass = 0.0;
    for (std::size_t k : active) mass += decomp.weights[k];
    // Clamp every atom whose closed-form probability would exceed 1 under
    // the current budget, then redistribute what is left.
    std::vector<std::size_t> next;
    next.reserve(active.size());
    for (std::size_t k : active) {
      if (decomp.weights[k] * budget > mass)
        plan.probs[k] = 1.0;
      else
        next.push_back(k);
    }
    if (next.size() == active.size()) {
      for (std::size_t k : next) plan.probs[k] = decomp.weights[k] * budget / mass;
      break;
    }
    budget -= static_cast<double>(active.size() - next.size());
    active = std::move(next);
  }
  return plan;
}

// Independent Bernoulli keep/drop per atom; kept atoms are rescaled by 1/p.
inline CompressedUpdate sample_estimator(const AtomicDecomposition& decomp,
                                         const SamplingPlan& plan, RngStream& rng) {
  if (plan.probs.size() != decomp.atom_count())
    throw config_error("sample_estimator: plan does not match decomposition");
  CompressedUpdate out;
  out.dim = decomp.dim;
  out.budget_eps = plan.budget_eps;
  for (std::size_t k = 0; k < decomp.atom_count(); ++k) {
    const double p = plan.probs[k];
    if (rng.uniform01() < p) {
      out.indices.push_back(decomp.indices[k]);
      out.values.push_back(decomp.weights[k] * static_cast<double>(decomp.signs[k]) / p);
    }
  }
  return out;
}

// Exact estimator variance E||reconstructed - original||^2.
inline double variance_closed_form(const AtomicDecomposition& decomp,
                                   const SamplingPlan& plan) {
  if (plan.probs.size() != decomp.atom_count())
    throw config_error("variance_closed_form: plan does not match decomposition");
  double var = 0.0;
  for (std::size_t k = 0; k < decomp.atom_count(); ++k) {
    const double p = plan.probs[k];
    if (!(p > 0.0)) throw std::domain_error("variance_closed_form: probability must be > 0");
    const double d = decomp.weights[k];
    var += d * d * (1.0 / p - 1.0);
  }
  return var;
}

inline DeltaTerms delta_terms(const AtomicDecomposition& decomp) {
  DeltaTerms t;
  const double l1 = decomp.l1_norm();
  t.delta1 = l1 * l1;
  double sq = 0.0;
  for (double d : decomp.weights) sq += d * d;
  t.delta2 = -sq;
  return t;
}

// True when no atom violates d_k * eps <= |d|_1, i.e. the closed-form
// probabilities all land in (0,1].
inline bool is_balanced(const AtomicDecomposition& decomp, double eps) {
  const double l1 = decomp.l1_norm();
  for (double d : decomp.weights)
    if (d * eps > l1) return false;
  return true;
}

// Server-side mean of reconstructed client updates.
inline ParamVector aggregate_compressed(const std::vector<CompressedUpdate>& updates,
                                        int num_clients) {
  if (updates.empty()) throw config_error("aggregate_compressed: no updates");
  if (num_clients < 1) throw config_error("aggregate_compressed: num_clients must be >= 1");
  const std::int32_t dim = updates.front().dim;
  for (const auto& u : updates)
    if (u.dim != dim) throw config_error("aggregate_compressed: dimension mismatch");
  ParamVector sum(static_cast<std::size_t>(dim), 0.0);
  for (const auto& u : updates)
    for (std::size_t k = 0; k < u.indices.size(); ++k) sum[u.indices[k]] += u.values[k];
  const double inv_n = 1.0 / static_cast<double>(num_clients);
  for (double& x : sum) x *= inv_n;
  return sum;
}

}  // namespace eafo
