// Adaptive schedule for (I_t, eps_t).
//
// The default law re-anchors on the initial loss: as the global loss falls,
// the local-update count shrinks and the compression budget grows, both with
// cube-root sensitivity, so their raw product is invariant:
//   raw_I   = (F / F0)^(1/3) * I0
//   raw_eps = (F0 / F)^(1/3) * eps0
// I is rounded half-up and both values are clamped to configured ranges;
// the raw pair is reported for diagnostics.

#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "eafo/bound.hpp"

namespace eafo {

// std::cbrt is not correctly rounded on every libm; one Newton step repairs
// the last ulp so exact cube ratios (an eightfold loss change) map to exactly
// halved/doubled raw values.
inline double cube_root(double a) {
  if (a == 0.0 || !std::isfinite(a)) return std::cbrt(a);
  double y = std::cbrt(a);
  const double y2 = y * y;
  if (y2 != 0.0 && std::isfinite(y2)) y -= (y * y2 - a) / (3.0 * y2);
  return y;
}

struct ControllerState {
  double I0 = 30.0;
  double eps0 = 4.0;
  double F_w0 = 1.0;  // anchor loss, > 0
  int I_min = 1;
  int I_max = 30;
  double eps_min = 4.0;
  double eps_max = 8.0;
  double last_F = 0.0;  // most recent global loss fed to the controller

  void validate() const {
    if (I_min < 1 || I_min > I_max)
      throw std::domain_error("controller: need 1 <= I_min <= I_max");
    if (!(eps_min > 0.0) || eps_min > eps_max)
      throw std::domain_error("controller: need 0 < eps_min <= eps_max");
    if (!(F_w0 > 0.0)) throw std::domain_error("controller: anchor loss must be positive");
    if (!(I0 > 0.0) || !(eps0 > 0.0))
      throw std::domain_error("controller: initial I0/eps0 must be positive");
  }
};

struct ScheduleDecision {
  int I_t = 1;
  double eps_t = 0.0;
  double raw_I = 0.0;    // before rounding/clamping
  double raw_eps = 0.0;
};

inline ScheduleDecision schedule(ControllerState& state, double F_wt) {
  if (!(F_wt > 0.0)) throw std::domain_error("schedule: loss must be positive");
  ScheduleDecision d;
  d.raw_I = cube_root(F_wt / state.F_w0) * state.I0;
  d.raw_eps = cube_root(state.F_w0 / F_wt) * state.eps0;
  const double rounded = std::floor(d.raw_I + 0.5);  // round half up
  d.I_t = static_cast<int>(std::clamp(rounded, static_cast<double>(state.I_min),
                                      static_cast<double>(state.I_max)));
  d.eps_t = std::clamp(d.raw_eps, state.eps_min, state.eps_max);
  state.last_F = F_wt;
  return d;
}

// Chained form of the same law, stepping from one loss value to the next.
// A chain of ratio_steps from the anchor telescopes to schedule()'s raws.
inline std::pair<double, double> ratio_step(double F_prev, double F_next, double I_prev,
                                            double eps_prev) {
  if (!(F_prev > 0.0) || !(F_next > 0.0))
    throw std::domain_error("ratio_step: losses must be positive");
  const double i_next = I_prev * cube_root(F_next / F_prev);
  const double eps_next = eps_prev * cube_root(F_prev / F_next);
  return {i_next, eps_next};
}

// Alternative mode: jointly solve the stationary-point equations of the
// error bound using online estimates of (L, delta1, delta2). Falls back to
// the cube-root raws when the estimates put the bound outside its domain.
inline ScheduleDecision stationary_schedule(ControllerState& state, double F_wt,
                                            double prev_eps, const BoundParams& est) {
  if (!(F_wt > 0.0)) throw std::domain_error("stationary_schedule: loss must be positive");
  ScheduleDecision d = schedule(state, F_wt);  // raws double as the fallback
  try {
    double eps = std::clamp(prev_eps, state.eps_min, state.eps_max);
    double I = stationary_I(eps, F_wt, est);
    // one damped refinement pass keeps the pair self-consistent
    for (int it = 0; it < 8; ++it) {
      const double I_cl = std::clamp(I, static_cast<double>(state.I_min),
                                     static_cast<double>(state.I_max));
      const double eps_new = stationary_eps(I_cl, F_wt, est);
      eps = 0.5 * (eps + std::clamp(eps_new, state.eps_min, state.eps_max));
      I = stationary_I(eps, F_wt, est);
    }
    d.raw_I = I;
    d.raw_eps = eps;
    const double rounded = std::floor(I + 0.5);
    d.I_t = static_cast<int>(std::clamp(rounded, static_cast<double>(state.I_min),
                                        static_cast<double>(state.I_max)));
    d.eps_t = std::clamp(eps, state.eps_min, state.eps_max);
  } catch (const std::domain_error&) {
    // degenerate estimates (delta1 + delta2*eps <= 0 or eta*L*(I-1) >= 1)
  }
  return d;
}

}  // namespace eafo
