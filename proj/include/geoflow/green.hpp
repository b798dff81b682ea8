#pragma once

// Stable and unstable Green solutions as T -> infinity limits, rank-one
// classification, Lyapunov exponents and the Jacobi growth sandwich.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <vector>

#include "geoflow/errors.hpp"
#include "geoflow/geodesic.hpp"
#include "geoflow/jacobi_riccati.hpp"

namespace geoflow {

struct GreenOptions {
  double tol = 1e-8;
  double T_max = 40.0;
  double T_start = 1.0;
  StepPolicy step;
  RiccatiOptions riccati;
};

/// Approximant history for one side (stable along the given orbit).
struct GreenSequence {
  double value = 0.0;
  bool converged = false;
  double T_used = 0.0;
  std::vector<double> T;
  /// j(T) = 0 approximants (increase to the limit).
  std::vector<double> lower;
  /// j'(T) = 0 approximants (decrease to the limit).
  std::vector<double> upper;
  /// Both sequences monotone in T.
  bool monotone = true;
  /// Final bracket width upper - lower, an error bound for `value`.
  double bracket = std::numeric_limits<double>::infinity();
};

/// Frames are (j(0), j'(0)) initial data of the Green solutions.
struct GreenFrame {
  double j = 1.0;
  double jp = 0.0;
};

struct GreenData {
  UnitTangentVector theta;
  double u_s = 0.0;
  double u_u = 0.0;
  double gap = 0.0;
  bool converged = false;
  double T_used = 0.0;
  GreenFrame frame_s;
  GreenFrame frame_u;
  GreenSequence stable;
  GreenSequence unstable;  // computed along the reversed orbit; values are -u
};

namespace detail {

inline std::vector<double> doubling_schedule(double T_start, double T_cap) {
  std::vector<double> out;
  for (double T = T_start; T < T_cap * (1 - 1e-12); T *= 2.0) out.push_back(T);
  out.push_back(T_cap);
  return out;
}

/// Stable Green value at t = 0 along `traj` (which must reach T_cap).
inline GreenSequence stable_sequence(const GeodesicTrajectory& traj, double T_cap,
                                     const GreenOptions& opts) {
  GreenSequence seq;
  for (double T : doubling_schedule(opts.T_start, T_cap)) {
    const double lo = green_approximant(traj, T, opts.riccati);
    const double up = neumann_approximant(traj, T, opts.riccati);
    if (!seq.T.empty()) {
      if (lo < seq.lower.back() - 1e-12 || up > seq.upper.back() + 1e-12) seq.monotone = false;
    }
    seq.T.push_back(T);
    seq.lower.push_back(lo);
    seq.upper.push_back(up);
    seq.value = up;
    seq.T_used = T;
    seq.bracket = up - lo;
    if (seq.bracket < opts.tol) {
      seq.converged = true;
      return seq;
    }
  }
  // The doubling test is applied to the last pair only: along a stretch
  // with K = 0 the upper approximants stay put for small T.
  const std::size_t n = seq.upper.size();
  seq.converged = n >= 2 && std::abs(seq.upper[n - 1] - seq.upper[n - 2]) < opts.tol;
  return seq;
}

}  // namespace detail

/// u^s(0) = lim u_T(0) along theta and u^u(0) = -u^s(0) of the reversed vector.
///
/// T runs through T_start, 2 T_start, ... and finally T_max. Convergence is
/// declared as soon as the two-sided bracket is narrower than tol, or when
/// the upper approximant moves by less than tol over the final doubling.
/// The reported value is the upper approximant.
///
/// `traj` is the orbit of theta (theta at t = 0), normally over [-T_max, T_max].
inline GreenData green_limit(const GeodesicTrajectory& traj, const GreenOptions& opts = {}) {
  if (!(opts.tol > 0.0) || !(opts.T_max > 0.0) || !(opts.T_start > 0.0))
    throw DomainError("green_limit needs positive tol, T_start and T_max");
  const UnitTangentVector& theta = traj.theta0();
  const double fwd = std::min(opts.T_max, traj.t_max());
  const double bwd = std::min(opts.T_max, -traj.t_min());
  if (!(fwd >= opts.T_start) || !(bwd >= opts.T_start))
    throw IntegrationError("orbit leaves the padded window before T_start");

  GreenData g{.theta = theta};
  g.stable = detail::stable_sequence(traj, fwd, opts);
  g.unstable = detail::stable_sequence(traj.reversed(), bwd, opts);
  g.u_s = g.stable.value;
  g.u_u = -g.unstable.value;
  g.gap = g.u_u - g.u_s;
  g.converged = g.stable.converged && g.unstable.converged;
  g.T_used = std::max(g.stable.T_used, g.unstable.T_used);
  g.frame_s = {1.0, g.u_s};
  g.frame_u = {1.0, g.u_u};
  return g;
}

inline GreenData green_limit(const MetricChart& chart, const UnitTangentVector& theta,
                             const GreenOptions& opts = {}) {
  return green_limit(integrate_geodesic(chart, theta, {-opts.T_max, opts.T_max}, opts.step), opts);
}

inline GreenData green_frame(const MetricChart& chart, const UnitTangentVector& theta,
                             const GreenOptions& opts = {}) {
  return green_limit(chart, theta, opts);
}

enum class RankKind { rank_one, degenerate, unresolved };

inline const char* to_string(RankKind k) {
  switch (k) {
    case RankKind::rank_one: return "RankOne";
    case RankKind::degenerate: return "Degenerate";
    case RankKind::unresolved: return "Unresolved";
  }
  return "?";
}

struct RankClass {
  RankKind kind = RankKind::unresolved;
  double gap = 0.0;
  double threshold = 0.0;
};

inline RankClass classify_rank_one(const GreenData& g, double threshold = 1e-4) {
  RankClass c{RankKind::unresolved, g.gap, threshold};
  if (g.gap > threshold) c.kind = RankKind::rank_one;
  else if (g.converged) c.kind = RankKind::degenerate;
  return c;
}

struct LyapunovEstimate {
  double value = 0.0;
  /// (1/T) log j_u(T) for the Jacobi solution with j(0) = 1, j'(0) = u^u(0).
  double jacobi_value = 0.0;
  double T = 0.0;
  double u_u0 = 0.0;
};

/// (1/T) int_0^T u^u(phi_t theta) dt from the forward Riccati solution that
/// starts on the unstable Green value (forward integration is attracting).
///
/// This form reuses an orbit of theta covering [0, T] and its Green data.
inline LyapunovEstimate lyapunov_exponent(const GeodesicTrajectory& traj, const GreenData& g, double T,
                                          const GreenOptions& opts = {}) {
  if (!(T > 0.0)) throw DomainError("Lyapunov horizon must be positive");
  if (!g.converged) throw PreconditionError("Green data did not converge; exponent undefined");
  if (!traj.covers(0.0, T)) throw IntegrationError("orbit leaves the padded window before T");

  auto rhs = [&traj](double t, const ode::State<2>& y, ode::State<2>& dy) {
    dy[0] = -y[0] * y[0] - traj.curvature_at_time(t);
    dy[1] = y[0];
  };
  ode::StepControl ctl;
  ctl.rtol = ctl.atol = opts.riccati.tol;
  ode::StepStats st;
  ode::State<2> y{g.u_u, 0.0};
  double h = 0.01;
  ode::integrate<2>(rhs, y, 0.0, T, h, ctl, st, [&](double, ode::State<2>& s) {
    if (std::abs(s[0]) > opts.riccati.u_cap)
      throw DiagnosticsError("unstable Riccati solution blew up");
    return true;
  });

  LyapunovEstimate out;
  out.T = T;
  out.u_u0 = g.u_u;
  out.value = y[1] / T;
  const auto js = integrate_jacobi(traj, 1.0, g.u_u, JacobiOptions{0.0, TimeSpan{0.0, T}, 1e-12});
  out.jacobi_value = std::log(js.j.back()) / T;
  return out;
}

inline LyapunovEstimate lyapunov_exponent(const MetricChart& chart, const UnitTangentVector& theta,
                                          double T, const GreenOptions& opts = {}) {
  if (!(T > 0.0)) throw DomainError("Lyapunov horizon must be positive");
  const GreenData g = green_limit(chart, theta, opts);
  if (!g.converged) throw PreconditionError("Green data did not converge; exponent undefined");
  const auto traj = integrate_geodesic(chart, theta, {0.0, T}, opts.step);
  if (traj.truncated()) throw IntegrationError("orbit leaves the padded window before T");
  return lyapunov_exponent(traj, g, T, opts);
}

/// Stable Green solution along [lo, hi] of `traj`: the j'(T) = 0 approximant
/// started at T = hi + T_extra and run backwards.
inline RiccatiSolution stable_solution(const GeodesicTrajectory& traj, double lo, double hi,
                                       double T_extra, const RiccatiOptions& opts = {}) {
  auto sol = integrate_riccati(traj, 0.0, hi + T_extra, lo, opts);
  if (!sol.blowups.empty()) throw ConjugatePointError("focal point along the stable construction");
  RiccatiSolution out;
  for (std::size_t i = 0; i < sol.size(); ++i) {
    if (sol.t[i] > hi) break;
    out.t.push_back(sol.t[i]);
    out.value.push_back(sol.value[i]);
    out.inverted.push_back(sol.inverted[i]);
  }
  return out;
}

/// Unstable Green solution along [0, T], integrated forward from u^u(0).
inline RiccatiSolution unstable_solution(const GeodesicTrajectory& traj, double u_u0, double T,
                                         const RiccatiOptions& opts = {}) {
  auto sol = integrate_riccati(traj, u_u0, 0.0, T, opts);
  if (!sol.blowups.empty()) throw ConjugatePointError("unstable Green solution blew up");
  return sol;
}

enum class GreenSide { stable, unstable };

struct SandwichReport {
  bool holds = true;
  double max_ratio = 0.0;
  double bound = 0.0;
};

/// sqrt(j^2 + j'^2) <= sqrt(1 + kappa^2) j along [0, T] for the selected
/// Green solution, i.e. sqrt(1 + u^2) <= sqrt(1 + kappa^2).
inline SandwichReport sandwich_check(const MetricChart& chart, const UnitTangentVector& theta,
                                     GreenSide which, double T, const GreenOptions& opts = {}) {
  if (!(T > 0.0)) throw DomainError("sandwich horizon must be positive");
  const GreenData g = green_limit(chart, theta, opts);
  if (!g.converged) throw PreconditionError("Green data did not converge");
  RiccatiSolution sol;
  if (which == GreenSide::stable) {
    const auto traj = integrate_geodesic(chart, theta, {0.0, T + opts.T_max}, opts.step);
    if (traj.truncated()) throw IntegrationError("orbit leaves the padded window");
    sol = stable_solution(traj, 0.0, T, opts.T_max, opts.riccati);
  } else {
    const auto traj = integrate_geodesic(chart, theta, {0.0, T}, opts.step);
    if (traj.truncated()) throw IntegrationError("orbit leaves the padded window");
    sol = unstable_solution(traj, g.u_u, T, opts.riccati);
  }
  SandwichReport rep;
  rep.bound = std::sqrt(1.0 + chart.kappa() * chart.kappa());
  for (std::size_t i = 0; i < sol.size(); ++i) {
    const double u = sol.u(i);
    rep.max_ratio = std::max(rep.max_ratio, std::sqrt(1.0 + u * u));
  }
  rep.holds = rep.max_ratio <= rep.bound + 1e-9;
  return rep;
}

}  // namespace geoflow
