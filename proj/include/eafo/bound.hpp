// Error upper bound for time-budgeted federated training with local update
// count I and compression budget eps, plus the machinery built on it: the
// analytic gradient, the printed Hessian with its convexity conditions, and
// the stationary-point formulas used by the stationary controller mode.
//
// The bound has three terms:
//   optimization: 2 (F - F_inf) / (eta T) * (T_comp + comm / I)
//   noise:        eta L V / N
//   drift:        eta^2 L^2 V (I - 1)
// where comm = gamma * eps and V = delta1 / eps + delta2 when compression is
// active, and comm / V are caller-supplied constants otherwise.

#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace eafo {

struct BoundParams {
  double L = 1.0;        // smoothness constant
  double eta = 0.01;     // learning rate
  double T = 1.0;        // total time budget
  double T_comp = 0.0;   // per-round computation time
  double gamma = 0.0;    // communication time per transmitted atom; in the
                         // no-compression bound it holds the whole per-round
                         // communication time
  double delta1 = 0.0;   // aggregate first variance constant, >= 0
  double delta2 = 0.0;   // aggregate second variance constant (sign free)
  double lambda = 0.0;   // gradient-proportional variance coefficient;
                         // carried for diagnostics only, absent from the bound
  double N = 1.0;        // client count
  double F_inf = 0.0;    // loss infimum
  double alpha = 0.0;    // coefficient used by the Hessian / stationary
                         // formulas; conventionally equal to gamma
};

struct BoundValue {
  double value = 0.0;
  double opt_term = 0.0;
  double noise_term = 0.0;
  double drift_term = 0.0;
};

// Learning-rate admissibility: eta*L + eta^2*L^2*I*(I-1) <= 1.
inline bool lr_condition_holds(double I, const BoundParams& p) {
  const double el = p.eta * p.L;
  return el + el * el * I * (I - 1.0) <= 1.0;
}

namespace detail {
inline BoundValue assemble_bound(double F_wt, double I, double comm, double variance,
                                 const BoundParams& p) {
  BoundValue b;
  b.opt_term = 2.0 * (F_wt - p.F_inf) / (p.eta * p.T) * (p.T_comp + comm / I);
  b.noise_term = p.eta * p.L * variance / p.N;
  b.drift_term = p.eta * p.eta * p.L * p.L * variance * (I - 1.0);
  b.value = b.opt_term + b.noise_term + b.drift_term;
  return b;
}
}  // namespace detail

// Bound without compression: the caller supplies the per-round communication
// time in p.gamma and the flat variance constant in p.delta2 (p.delta1 = 0).
inline BoundValue bound_no_compression(double F_wt, double I, const BoundParams& p) {
  if (I < 1.0) throw std::domain_error("bound_no_compression: I must be >= 1");
  return detail::assemble_bound(F_wt, I, p.gamma, p.delta2, p);
}

// Joint bound with compression budget eps.
inline BoundValue bound_joint(double F_wt, double I, double eps, const BoundParams& p) {
  if (I < 1.0) throw std::domain_error("bound_joint: I must be >= 1");
  if (!(eps > 0.0)) throw std::domain_error("bound_joint: eps must be positive");
  return detail::assemble_bound(F_wt, I, p.gamma * eps, p.delta1 / eps + p.delta2, p);
}

// Analytic partial derivatives of the joint bound.
inline std::pair<double, double> bound_joint_partials(double F_wt, double I, double eps,
                                                      const BoundParams& p) {
  if (I < 1.0) throw std::domain_error("bound_joint_partials: I must be >= 1");
  if (!(eps > 0.0)) throw std::domain_error("bound_joint_partials: eps must be positive");
  const double X = 2.0 * (F_wt - p.F_inf) / (p.eta * p.T);
  const double Z = p.eta * p.L / p.N;
  const double P = p.eta * p.eta * p.L * p.L;
  const double V = p.delta1 / eps + p.delta2;
  const double dI = -X * p.gamma * eps / (I * I) + P * V;
  const double dEps = X * p.gamma / I - (Z + P * (I - 1.0)) * p.delta1 / (eps * eps);
  return {dI, dEps};
}

// The 2x2 curvature matrix of the joint bound, in the published closed form
// (alpha in place of gamma in the mixed entries; the two coincide when
// alpha == gamma).
inline std::array<std::array<double, 2>, 2> hessian(double I, double eps, double F_w0,
                                                    const BoundParams& p) {
  const double X = 2.0 * (F_w0 - p.F_inf) / (p.eta * p.T);
  const double Z = p.eta * p.L / p.N;
  const double P = p.eta * p.eta * p.L * p.L;
  const double off = -X * p.alpha / (I * I) - P * p.delta1 / (eps * eps);
  std::array<std::array<double, 2>, 2> h{};
  h[0][0] = 2.0 * X * p.alpha * eps / (I * I * I);
  h[0][1] = off;
  h[1][0] = off;
  h[1][1] = 2.0 * Z * p.delta1 / (eps * eps * eps) +
            2.0 * P * (I - 1.0) * p.delta1 / (eps * eps * eps);
  return h;
}

// Convexity conditions: I >= 2 and 2 eta^2 L T delta1 I >= alpha N eps^2
// (F(w0) - F_inf), plus a non-negative Hessian determinant up to numerical
// slack. The small-learning-rate condition is implicit in the parameters.
struct ConvexityCheck {
  bool holds = false;
  double det = 0.0;
};

inline ConvexityCheck check_convexity_conditions(double I, double eps, double F_w0,
                                                 const BoundParams& p) {
  ConvexityCheck c;
  const auto h = hessian(I, eps, F_w0, p);
  c.det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
  const bool cond_i = I >= 2.0;
  const bool cond_iv = 2.0 * p.eta * p.eta * p.L * p.T * p.delta1 * I >=
                       p.alpha * p.N * eps * eps * (F_w0 - p.F_inf);
  c.holds = cond_i && cond_iv && c.det >= -1e-9;
  return c;
}

// Stationary local-update count for a fixed eps:
//   I* = sqrt(2 alpha (F - F_inf) eps^2 / (eta^3 L^2 (delta1 + delta2 eps)))
inline double stationary_I(double eps, double F_wt, const BoundParams& p) {
  if (!(eps > 0.0)) throw std::domain_error("stationary_I: eps must be positive");
  if (!(F_wt > p.F_inf)) throw std::domain_error("stationary_I: need F_wt > F_inf");
  const double denom = p.eta * p.eta * p.eta * p.L * p.L * (p.delta1 + p.delta2 * eps);
  if (!(p.delta1 + p.delta2 * eps > 0.0))
    throw std::domain_error("stationary_I: delta1 + delta2*eps must be positive");
  return std::sqrt(2.0 * p.alpha * (F_wt - p.F_inf) * eps * eps / denom);
}

// Stationary compression budget for a fixed I:
//   eps* = sqrt(delta1 eta^2 L T (1 - eta L (I-1)) I / (2 alpha (F - F_inf)))
inline double stationary_eps(double I, double F_wt, const BoundParams& p) {
  if (I < 1.0) throw std::domain_error("stationary_eps: I must be >= 1");
  if (!(F_wt > p.F_inf)) throw std::domain_error("stationary_eps: need F_wt > F_inf");
  const double damp = 1.0 - p.eta * p.L * (I - 1.0);
  if (!(damp > 0.0))
    throw std::domain_error("stationary_eps: eta*L*(I-1) must be below 1");
  return std::sqrt(p.delta1 * p.eta * p.eta * p.L * p.T * damp * I /
                   (2.0 * p.alpha * (F_wt - p.F_inf)));
}

}  // namespace eafo
