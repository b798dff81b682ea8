#pragma once

// Scalar Jacobi equation j'' + K j = 0 and Riccati equation u' + u^2 + K = 0
// along a sampled geodesic, Green approximants, the coth envelope and the
// decaying conjugate solution.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <vector>

#include "geoflow/errors.hpp"
#include "geoflow/fit.hpp"
#include "geoflow/geodesic.hpp"
#include "geoflow/ode.hpp"

namespace geoflow {

namespace detail {

/// Sample times of `traj` strictly between a and b, then b; ordered from a towards b.
inline std::vector<double> targets_between(const GeodesicTrajectory& traj, double a, double b) {
  std::vector<double> out;
  for (double t : traj.times())
    if ((t > std::min(a, b)) && (t < std::max(a, b))) out.push_back(t);
  if (b < a) std::reverse(out.begin(), out.end());
  out.push_back(b);
  return out;
}

inline void require_covers(const GeodesicTrajectory& traj, double a, double b) {
  if (!traj.covers(a, b)) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "trajectory [%.6g, %.6g] does not cover [%.6g, %.6g]",
                  traj.t_min(), traj.t_max(), std::min(a, b), std::max(a, b));
    throw DomainError(buf);
  }
}

}  // namespace detail

struct ScalarJacobiSolution {
  std::vector<double> t;
  std::vector<double> j;
  std::vector<double> jp;
  std::vector<double> K;

  /// j and j' at time s, quintic Hermite using j'' = -K j at the samples.
  std::pair<double, double> at(double s) const {
    auto it = std::upper_bound(t.begin(), t.end(), s);
    std::size_t i = it == t.begin() ? 0 : static_cast<std::size_t>(it - t.begin()) - 1;
    i = std::min(i, t.size() - 2);
    const double h = t[i + 1] - t[i];
    const double x = (s - t[i]) / h;
    if (x < -1e-9 || x > 1 + 1e-9) throw DomainError("time outside Jacobi solution span");
    const double x2 = x * x, x3 = x2 * x, x4 = x3 * x, x5 = x4 * x;
    const double a0 = j[i], a1 = jp[i], a2 = -K[i] * j[i];
    const double b0 = j[i + 1], b1 = jp[i + 1], b2 = -K[i + 1] * j[i + 1];
    const double h2 = h * h;
    const double val = (1 - 10 * x3 + 15 * x4 - 6 * x5) * a0 + h * (x - 6 * x3 + 8 * x4 - 3 * x5) * a1 +
                       h2 * (0.5 * x2 - 1.5 * x3 + 1.5 * x4 - 0.5 * x5) * a2 +
                       (10 * x3 - 15 * x4 + 6 * x5) * b0 + h * (-4 * x3 + 7 * x4 - 3 * x5) * b1 +
                       h2 * (0.5 * x3 - x4 + 0.5 * x5) * b2;
    const double der = ((-30 * x2 + 60 * x3 - 30 * x4) * a0 +
                        h * (1 - 18 * x2 + 32 * x3 - 15 * x4) * a1 +
                        h2 * (x - 4.5 * x2 + 6 * x3 - 2.5 * x4) * a2 +
                        (30 * x2 - 60 * x3 + 30 * x4) * b0 + h * (-12 * x2 + 28 * x3 - 15 * x4) * b1 +
                        h2 * (1.5 * x2 - 4 * x3 + 2.5 * x4) * b2) /
                       h;
    return {val, der};
  }
};

struct JacobiOptions {
  /// Time at which (j0, j'0) is prescribed.
  double t0 = 0.0;
  /// Output span; defaults to the whole trajectory.
  std::optional<TimeSpan> span;
  double tol = 1e-12;
};

/// Solves j'' + K(gamma(t)) j = 0 with j(t0) = j0, j'(t0) = jp0.
inline ScalarJacobiSolution integrate_jacobi(const GeodesicTrajectory& traj, double j0, double jp0,
                                             const JacobiOptions& opts = {}) {
  const TimeSpan span = opts.span.value_or(TimeSpan{traj.t_min(), traj.t_max()});
  detail::require_covers(traj, span.lo, span.hi);
  if (!(opts.t0 >= span.lo && opts.t0 <= span.hi))
    throw DomainError("Jacobi initial time outside the requested span");
  auto rhs = [&traj](double t, const ode::State<2>& y, ode::State<2>& dy) {
    dy[0] = y[1];
    dy[1] = -traj.curvature_at_time(t) * y[0];
  };
  ode::StepControl ctl;
  ctl.rtol = ctl.atol = opts.tol;
  ode::StepStats st;

  auto sweep = [&](double to, std::vector<double>& ts, std::vector<ode::State<2>>& ys) {
    if (to == opts.t0) return;
    ode::State<2> y{j0, jp0};
    double t = opts.t0, h = 0.01;
    for (double target : detail::targets_between(traj, opts.t0, to)) {
      ode::integrate<2>(rhs, y, t, target, h, ctl, st);
      t = target;
      ts.push_back(t);
      ys.push_back(y);
    }
  };
  std::vector<double> tb, tf;
  std::vector<ode::State<2>> yb, yf;
  sweep(span.lo, tb, yb);
  sweep(span.hi, tf, yf);

  ScalarJacobiSolution out;
  for (std::size_t i = tb.size(); i-- > 0;) {
    out.t.push_back(tb[i]);
    out.j.push_back(yb[i][0]);
    out.jp.push_back(yb[i][1]);
  }
  out.t.push_back(opts.t0);
  out.j.push_back(j0);
  out.jp.push_back(jp0);
  for (std::size_t i = 0; i < tf.size(); ++i) {
    out.t.push_back(tf[i]);
    out.j.push_back(yf[i][0]);
    out.jp.push_back(yf[i][1]);
  }
  out.K.reserve(out.t.size());
  for (double t : out.t) out.K.push_back(traj.curvature_at_time(t));
  return out;
}

/// Riccati samples in projective form: `value` holds u, or v = 1/u where
/// `inverted` is set. Samples are in increasing time.
struct RiccatiSolution {
  std::vector<double> t;
  std::vector<double> value;
  std::vector<char> inverted;
  /// Times where u passes through infinity.
  std::vector<double> blowups;
  std::size_t switches = 0;

  std::size_t size() const { return t.size(); }
  double u(std::size_t i) const {
    if (!inverted[i]) return value[i];
    return value[i] == 0.0 ? std::numeric_limits<double>::infinity() : 1.0 / value[i];
  }

  /// Plain u-samples, e.g. for synthetic checks.
  static RiccatiSolution from_values(std::vector<double> t, std::vector<double> u) {
    RiccatiSolution s;
    s.inverted.assign(u.size(), 0);
    s.t = std::move(t);
    s.value = std::move(u);
    return s;
  }
};

struct RiccatiOptions {
  double u_cap = 1e6;
  double tol = 1e-12;
  std::size_t max_switches = 10000;
};

/// Integrates u' = -u^2 - K from (t_from, u0) to t_to (either direction).
/// u0 may be +-infinity. Above u_cap the solver continues with v = 1/u,
/// v' = 1 + K v^2, and returns to u once |v| >= 1; zeros of v are recorded
/// as blow-up times.
inline RiccatiSolution integrate_riccati(const GeodesicTrajectory& traj, double u0, double t_from,
                                         double t_to, const RiccatiOptions& opts = {}) {
  detail::require_covers(traj, t_from, t_to);
  RiccatiSolution out;
  bool inv = !std::isfinite(u0) || std::abs(u0) > opts.u_cap;
  double y = inv ? (std::isfinite(u0) ? 1.0 / u0 : 0.0) : u0;
  std::vector<double> ts{t_from}, vs{y};
  std::vector<char> flags{static_cast<char>(inv)};

  auto Kt = [&traj](double t) { return traj.curvature_at_time(t); };
  auto rhs = [&](double t, const ode::State<1>& s, ode::State<1>& ds) {
    const double k = Kt(t);
    ds[0] = inv ? 1.0 + k * s[0] * s[0] : -s[0] * s[0] - k;
  };
  ode::StepControl ctl;
  ctl.rtol = ctl.atol = opts.tol;
  ode::StepStats st;
  double t = t_from, h = 0.01;

  // Zero of v between two accepted steps, from the cubic Hermite interpolant.
  auto blowup_time = [&](double ta, double va, double tb, double vb) {
    const double da = 1.0 + Kt(ta) * va * va, db = 1.0 + Kt(tb) * vb * vb;
    const double hh = tb - ta;
    auto p = [&](double x) {
      const double x2 = x * x, x3 = x2 * x;
      return (2 * x3 - 3 * x2 + 1) * va + (x3 - 2 * x2 + x) * hh * da + (-2 * x3 + 3 * x2) * vb +
             (x3 - x2) * hh * db;
    };
    double lo = 0.0, hi = 1.0;
    const bool neg_lo = va < 0.0;
    for (int k = 0; k < 80; ++k) {
      const double mid = 0.5 * (lo + hi);
      if ((p(mid) < 0.0) == neg_lo) lo = mid;
      else hi = mid;
    }
    return ta + 0.5 * (lo + hi) * hh;
  };

  for (double target : detail::targets_between(traj, t_from, t_to)) {
    while (t != target) {
      ode::State<1> s{y};
      double tp = t, vp = y;
      bool want_switch = false;
      auto post = [&](double tn, ode::State<1>& sn) {
        if (inv) {
          if (vp != 0.0 && vp * sn[0] < 0.0) out.blowups.push_back(blowup_time(tp, vp, tn, sn[0]));
          if (std::abs(sn[0]) >= 1.0) want_switch = true;
        } else if (std::abs(sn[0]) > opts.u_cap) {
          want_switch = true;
        }
        tp = tn;
        vp = sn[0];
        return !want_switch;
      };
      t = ode::integrate<1>(rhs, s, t, target, h, ctl, st, post);
      y = s[0];
      if (want_switch) {
        y = 1.0 / y;
        inv = !inv;
        if (++out.switches > opts.max_switches)
          throw DiagnosticsError("Riccati integration exceeded the chart-switch budget");
      }
    }
    ts.push_back(t);
    vs.push_back(y);
    flags.push_back(static_cast<char>(inv));
  }

  if (t_to < t_from) {
    std::reverse(ts.begin(), ts.end());
    std::reverse(vs.begin(), vs.end());
    std::reverse(flags.begin(), flags.end());
    std::reverse(out.blowups.begin(), out.blowups.end());
  }
  out.t = std::move(ts);
  out.value = std::move(vs);
  out.inverted = std::move(flags);
  return out;
}

namespace detail {

inline double riccati_value_at_start(const RiccatiSolution& sol, double t0) {
  for (std::size_t i = 0; i < sol.size(); ++i)
    if (sol.t[i] == t0) return sol.u(i);
  throw DomainError("Riccati solution has no sample at the requested time");
}

}  // namespace detail

/// u_T(0) = j'(0)/j(0) for the Jacobi solution with j(T) = 0, j'(T) = -1,
/// i.e. the backward Riccati solution from u(T) = -infinity.
inline double green_approximant(const GeodesicTrajectory& traj, double T,
                                const RiccatiOptions& opts = {}) {
  if (!(T > 0.0)) throw DomainError("green_approximant needs T > 0");
  const auto sol = integrate_riccati(traj, -std::numeric_limits<double>::infinity(), T, 0.0, opts);
  if (!sol.blowups.empty()) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "Jacobi field vanishing at T=%.6g vanishes again at t=%.6g", T,
                  sol.blowups.front());
    throw ConjugatePointError(buf);
  }
  return detail::riccati_value_at_start(sol, 0.0);
}

/// The companion approximant with j'(T) = 0 (u(T) = 0). Under K <= 0 it
/// bounds the stable value from above while green_approximant bounds it
/// from below.
inline double neumann_approximant(const GeodesicTrajectory& traj, double T,
                                  const RiccatiOptions& opts = {}) {
  if (!(T > 0.0)) throw DomainError("neumann_approximant needs T > 0");
  const auto sol = integrate_riccati(traj, 0.0, T, 0.0, opts);
  if (!sol.blowups.empty()) throw ConjugatePointError("focal point inside (0, T)");
  return detail::riccati_value_at_start(sol, 0.0);
}

struct EnvelopeReport {
  bool holds = true;
  /// Smallest distance to the envelope; negative when violated. Measured in
  /// the projective chart each sample is stored in.
  double margin = std::numeric_limits<double>::infinity();
  double worst_t = 0.0;
};

/// Checks -k coth(k(b-t)) <= u(t) <= k coth(k(t-a)) on the samples inside
/// (a, b). Infinite ends give the global bound |u| <= k.
inline EnvelopeReport riccati_bound_check(const RiccatiSolution& sol, double kappa, double a,
                                          double b, double slack = 1e-6) {
  EnvelopeReport rep;
  const double inf = std::numeric_limits<double>::infinity();
  // Reciprocals of the bounds stay finite near the ends of the interval.
  auto recip_upper = [&](double t) {  // 1 / (k coth(k (t - a)))
    if (!std::isfinite(a)) return kappa > 0.0 ? 1.0 / kappa : inf;
    return kappa > 0.0 ? std::tanh(kappa * (t - a)) / kappa : t - a;
  };
  auto recip_lower = [&](double t) {  // 1 / (-k coth(k (b - t)))
    if (!std::isfinite(b)) return kappa > 0.0 ? -1.0 / kappa : -inf;
    return kappa > 0.0 ? -std::tanh(kappa * (b - t)) / kappa : -(b - t);
  };
  for (std::size_t i = 0; i < sol.size(); ++i) {
    const double t = sol.t[i];
    if (!(t > a) || !(t < b)) continue;
    double m;
    if (sol.inverted[i]) {
      const double v = sol.value[i];
      m = v >= 0.0 ? v - recip_upper(t) : recip_lower(t) - v;
    } else {
      const double u = sol.value[i];
      const double ru = recip_upper(t), rl = recip_lower(t);
      const double upper = ru == 0.0 ? inf : 1.0 / ru;
      const double lower = rl == 0.0 ? -inf : 1.0 / rl;
      m = std::min(upper - u, u - lower);
    }
    if (m < rep.margin) {
      rep.margin = m;
      rep.worst_t = t;
    }
  }
  rep.holds = !(rep.margin < -slack);
  return rep;
}

enum class TailPolicy { geometric, none };

struct DecayOptions {
  TailPolicy tail = TailPolicy::geometric;
  /// Smallest growth rate of log j accepted as exponential growth.
  double min_growth = 0.1;
};

struct DecayingSolution {
  std::vector<double> t;
  std::vector<double> w;
  double decay_slope = 0.0;
  double growth_rate = 0.0;
};

/// w(t) = j(t) (int_t^T j^-2 + tail) on the span [a, T] of `jsol`; the slope
/// of log w over the middle half of the span estimates minus the exponent.
inline DecayingSolution conjugate_decaying_solution(const ScalarJacobiSolution& jsol,
                                                    const DecayOptions& opts = {}) {
  const std::size_t n = jsol.t.size();
  if (n < 8) throw DomainError("Jacobi solution has too few samples");
  for (double v : jsol.j)
    if (!(v > 0.0)) throw DomainError("j must be positive on the whole span");
  const double a = jsol.t.front(), T = jsol.t.back(), L = T - a;

  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < n; ++i)
    if (jsol.t[i] >= a + 0.5 * L) {
      xs.push_back(jsol.t[i]);
      ys.push_back(std::log(jsol.j[i]));
    }
  const double growth = least_squares_slope(xs, ys);
  if (!(growth > opts.min_growth)) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "measured growth rate %.4g of j is not exponential", growth);
    throw PreconditionError(buf);
  }

  DecayingSolution out;
  out.growth_rate = growth;
  out.t = jsol.t;
  out.w.assign(n, 0.0);
  const double jT = jsol.j.back();
  const double tail = opts.tail == TailPolicy::geometric ? 1.0 / (jT * jT * 2.0 * growth) : 0.0;
  auto f = [&](std::size_t i) { return 1.0 / (jsol.j[i] * jsol.j[i]); };
  auto df = [&](std::size_t i) { return -2.0 * jsol.jp[i] / (jsol.j[i] * jsol.j[i] * jsol.j[i]); };
  double integral = 0.0;
  out.w[n - 1] = jT * tail;
  for (std::size_t i = n - 1; i-- > 0;) {
    const double h = jsol.t[i + 1] - jsol.t[i];
    integral += 0.5 * h * (f(i) + f(i + 1)) + h * h / 12.0 * (df(i) - df(i + 1));
    out.w[i] = jsol.j[i] * (integral + tail);
  }

  xs.clear();
  ys.clear();
  for (std::size_t i = 0; i < n; ++i)
    if (jsol.t[i] >= a + 0.25 * L && jsol.t[i] <= a + 0.75 * L) {
      xs.push_back(jsol.t[i]);
      ys.push_back(std::log(out.w[i]));
    }
  out.decay_slope = least_squares_slope(xs, ys);
  return out;
}

}  // namespace geoflow
