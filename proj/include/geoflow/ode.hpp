#pragma once

// Embedded Dormand-Prince 5(4) integrator with adaptive step size.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>

#include "geoflow/errors.hpp"

namespace geoflow::ode {

template <std::size_t N>
using State = std::array<double, N>;

struct StepControl {
  double rtol = 1e-10;
  double atol = 1e-10;
  double h_init = 1e-2;
  double h_max = std::numeric_limits<double>::infinity();
  double h_min = 1e-13;
  std::size_t max_steps = 5'000'000;
};

struct StepStats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  double h_smallest = std::numeric_limits<double>::infinity();
};

namespace detail {

inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                        a53 = 64448.0 / 6561, a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                        a64 = 49.0 / 176, a65 = -5103.0 / 18656;
inline constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                        b5 = -2187.0 / 6784, b6 = 11.0 / 84;
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                        e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

}  // namespace detail

/// One trial step of size h. Writes the fifth-order solution to `out` and
/// returns the scaled RMS error estimate (<= 1 means acceptable).
template <std::size_t N, class Rhs>
double dopri_trial(Rhs& rhs, double t, const State<N>& y, double h, const StepControl& ctl,
                   State<N>& out) {
  using namespace detail;
  State<N> k1, k2, k3, k4, k5, k6, k7, tmp;
  rhs(t, y, k1);
  for (std::size_t i = 0; i < N; ++i) tmp[i] = y[i] + h * a21 * k1[i];
  rhs(t + c2 * h, tmp, k2);
  for (std::size_t i = 0; i < N; ++i) tmp[i] = y[i] + h * (a31 * k1[i] + a32 * k2[i]);
  rhs(t + c3 * h, tmp, k3);
  for (std::size_t i = 0; i < N; ++i)
    tmp[i] = y[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
  rhs(t + c4 * h, tmp, k4);
  for (std::size_t i = 0; i < N; ++i)
    tmp[i] = y[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
  rhs(t + c5 * h, tmp, k5);
  for (std::size_t i = 0; i < N; ++i)
    tmp[i] = y[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
  rhs(t + h, tmp, k6);
  for (std::size_t i = 0; i < N; ++i)
    out[i] = y[i] + h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
  rhs(t + h, out, k7);

  double acc = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    if (!std::isfinite(out[i])) return std::numeric_limits<double>::infinity();
    const double err =
        h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
    const double scale = ctl.atol + ctl.rtol * std::max(std::abs(y[i]), std::abs(out[i]));
    acc += (err / scale) * (err / scale);
  }
  const double norm = std::sqrt(acc / static_cast<double>(N));
  return std::isfinite(norm) ? norm : std::numeric_limits<double>::infinity();
}

/// Integrates dy/dt = rhs(t, y, dydt) from t0 to t1 (either direction).
///
/// After every accepted step `post(t, y)` runs; it may modify `y` in place
/// (renormalization, chart changes) and returns false to stop early. `h` is
/// the suggested step magnitude on entry and the last step magnitude on exit,
/// so consecutive calls can continue with a warm step size. Returns the time
/// actually reached.
template <std::size_t N, class Rhs, class Post>
double integrate(Rhs&& rhs, State<N>& y, double t0, double t1, double& h,
                 const StepControl& ctl, StepStats& stats, Post&& post) {
  if (t0 == t1) return t0;
  const double dir = t1 > t0 ? 1.0 : -1.0;
  double t = t0;
  double step = std::abs(h) > 0.0 ? std::abs(h) : ctl.h_init;
  step = std::clamp(step, ctl.h_min, ctl.h_max);
  State<N> trial;
  std::size_t budget = 0;
  while (dir * (t1 - t) > 0.0) {
    if (++budget > ctl.max_steps) throw IntegrationError("integrator step budget exhausted");
    double hs = step;
    bool last = false;
    if (hs >= dir * (t1 - t)) {
      hs = dir * (t1 - t);
      last = true;
    }
    const double err = dopri_trial<N>(rhs, t, y, dir * hs, ctl, trial);
    if (err <= 1.0) {
      t = last ? t1 : t + dir * hs;
      y = trial;
      ++stats.accepted;
      stats.h_smallest = std::min(stats.h_smallest, hs);
      const double grow = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
      if (!last) step = std::min(ctl.h_max, hs * grow);
      if (!post(t, y)) {
        h = step;
        return t;
      }
    } else {
      ++stats.rejected;
      const double shrink =
          std::isfinite(err) ? std::max(0.2, 0.9 * std::pow(err, -0.2)) : 0.1;
      step = hs * shrink;
      if (step < ctl.h_min) throw IntegrationError("integrator step size underflow");
    }
  }
  h = step;
  return t;
}

template <std::size_t N, class Rhs>
double integrate(Rhs&& rhs, State<N>& y, double t0, double t1, double& h,
                 const StepControl& ctl, StepStats& stats) {
  return integrate<N>(std::forward<Rhs>(rhs), y, t0, t1, h, ctl, stats,
                      [](double, State<N>&) { return true; });
}

}  // namespace geoflow::ode
