#pragma once

// Unit-speed geodesics on a metric chart, geodesic distances and the
// quasi-geodesic test.

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <utility>
#include <vector>

#include "geoflow/errors.hpp"
#include "geoflow/metric.hpp"
#include "geoflow/ode.hpp"

namespace geoflow {

using State4 = ode::State<4>;

inline constexpr double kPi = 3.14159265358979323846;

/// theta = (p, v) with |v|_g = 1 at p.
class UnitTangentVector {
 public:
  /// Placeholder ((0,0), (1,0)); unit only where gxx(0,0) = 1.
  UnitTangentVector() = default;

  UnitTangentVector(const MetricChart& chart, ChartPoint base, ChartVector dir)
      : base_(base), dir_(dir) {
    const double n = metric_norm(chart, base, dir);
    if (!(n > 0.0) || !std::isfinite(n)) throw DomainError("direction has zero or invalid norm");
    if (std::abs(n - 1.0) > 1e-9) dir_ = (1.0 / n) * dir;
  }

  static UnitTangentVector from_angle(const MetricChart& chart, ChartPoint base, double angle) {
    return UnitTangentVector(chart, base, from_frame_angle(chart, base, angle));
  }

  static UnitTangentVector from_state(const MetricChart& chart, const State4& z) {
    return UnitTangentVector(chart, {z[0], z[1]}, {z[2], z[3]});
  }

  ChartPoint base() const { return base_; }
  ChartVector dir() const { return dir_; }
  State4 state() const { return {base_.x, base_.y, dir_.x, dir_.y}; }

  /// (p, -v).
  UnitTangentVector reversed() const {
    UnitTangentVector r = *this;
    r.dir_ = -dir_;
    return r;
  }

 private:
  ChartPoint base_;
  ChartVector dir_{1.0, 0.0};
};

struct TimeSpan {
  double lo = 0.0;
  double hi = 0.0;
};

struct StepPolicy {
  double local_tol = 1e-10;
  double sample_dt = 0.05;
  double h_max = 0.5;
  /// Margin added to the chart window; negative means max(|lo|, |hi|).
  double pad = -1.0;
};

struct TrajectoryStats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  double h_smallest = std::numeric_limits<double>::infinity();
  /// Largest |‖v‖_g - 1| seen before per-step renormalization.
  double max_speed_drift = 0.0;
};

inline void geodesic_rhs(const MetricChart& chart, const State4& z, State4& dz) {
  const auto G = chart.christoffel({z[0], z[1]});
  const double vx = z[2], vy = z[3];
  dz[0] = vx;
  dz[1] = vy;
  dz[2] = -(G.x_xx * vx * vx + 2.0 * G.x_xy * vx * vy + G.x_yy * vy * vy);
  dz[3] = -(G.y_xx * vx * vx + 2.0 * G.y_xy * vx * vy + G.y_yy * vy * vy);
}

inline ChartVector geodesic_acceleration(const MetricChart& chart, const State4& z) {
  State4 dz;
  geodesic_rhs(chart, z, dz);
  return {dz[2], dz[3]};
}

/// Sampled unit-speed geodesic. Positions between samples are recovered by
/// quintic Hermite interpolation from position, velocity and the geodesic
/// acceleration, so curvature along the orbit can be queried at any time.
class GeodesicTrajectory {
 public:
  GeodesicTrajectory(MetricChart chart, UnitTangentVector theta0, std::vector<double> t,
                     std::vector<State4> z, TrajectoryStats stats, bool truncated)
      : chart_(std::move(chart)),
        theta0_(theta0),
        t_(std::move(t)),
        z_(std::move(z)),
        stats_(stats),
        truncated_(truncated) {
    if (t_.size() != z_.size() || t_.empty())
      throw ValidationError("trajectory needs matching, nonempty samples");
    acc_.reserve(z_.size());
    K_.reserve(z_.size());
    for (const auto& s : z_) {
      acc_.push_back(geodesic_acceleration(chart_, s));
      K_.push_back(chart_.curvature({s[0], s[1]}));
    }
  }

  const MetricChart& chart() const { return chart_; }
  const UnitTangentVector& theta0() const { return theta0_; }
  const std::vector<double>& times() const { return t_; }
  const std::vector<State4>& states() const { return z_; }
  const std::vector<double>& curvature() const { return K_; }
  const TrajectoryStats& stats() const { return stats_; }
  bool truncated() const { return truncated_; }
  std::size_t size() const { return t_.size(); }
  double t_min() const { return t_.front(); }
  double t_max() const { return t_.back(); }

  bool covers(double a, double b) const {
    const double eps = 1e-12 * (1.0 + std::max(std::abs(a), std::abs(b)));
    return std::min(a, b) >= t_min() - eps && std::max(a, b) <= t_max() + eps;
  }

  State4 state_at(double t) const {
    if (t_.size() == 1) return z_.front();
    const std::size_t i = interval(t);
    const double t0 = t_[i], h = t_[i + 1] - t0;
    const double s = std::clamp((t - t0) / h, 0.0, 1.0);
    const double s2 = s * s, s3 = s2 * s, s4 = s3 * s, s5 = s4 * s;
    const double H0 = 1 - 10 * s3 + 15 * s4 - 6 * s5;
    const double H1 = s - 6 * s3 + 8 * s4 - 3 * s5;
    const double H2 = 0.5 * s2 - 1.5 * s3 + 1.5 * s4 - 0.5 * s5;
    const double H3 = 10 * s3 - 15 * s4 + 6 * s5;
    const double H4 = -4 * s3 + 7 * s4 - 3 * s5;
    const double H5 = 0.5 * s3 - s4 + 0.5 * s5;
    const double D0 = -30 * s2 + 60 * s3 - 30 * s4;
    const double D1 = 1 - 18 * s2 + 32 * s3 - 15 * s4;
    const double D2 = s - 4.5 * s2 + 6 * s3 - 2.5 * s4;
    const double D3 = 30 * s2 - 60 * s3 + 30 * s4;
    const double D4 = -12 * s2 + 28 * s3 - 15 * s4;
    const double D5 = 1.5 * s2 - 4 * s3 + 2.5 * s4;
    const auto& a = z_[i];
    const auto& b = z_[i + 1];
    const auto& aa = acc_[i];
    const auto& ba = acc_[i + 1];
    const double h2 = h * h;
    State4 out;
    out[0] = H0 * a[0] + h * H1 * a[2] + h2 * H2 * aa.x + H3 * b[0] + h * H4 * b[2] + h2 * H5 * ba.x;
    out[1] = H0 * a[1] + h * H1 * a[3] + h2 * H2 * aa.y + H3 * b[1] + h * H4 * b[3] + h2 * H5 * ba.y;
    out[2] = (D0 * a[0] + h * D1 * a[2] + h2 * D2 * aa.x + D3 * b[0] + h * D4 * b[2] +
              h2 * D5 * ba.x) / h;
    out[3] = (D0 * a[1] + h * D1 * a[3] + h2 * D2 * aa.y + D3 * b[1] + h * D4 * b[3] +
              h2 * D5 * ba.y) / h;
    return out;
  }

  ChartPoint point_at(double t) const {
    const auto z = state_at(t);
    return {z[0], z[1]};
  }

  UnitTangentVector vector_at(double t) const {
    return UnitTangentVector::from_state(chart_, state_at(t));
  }

  /// K(gamma(t)) evaluated exactly at the interpolated position.
  double curvature_at_time(double t) const { return chart_.curvature(point_at(t)); }

  /// The same orbit traversed backwards: t -> -t, v -> -v.
  GeodesicTrajectory reversed() const {
    std::vector<double> t(t_.size());
    std::vector<State4> z(z_.size());
    for (std::size_t i = 0; i < t_.size(); ++i) {
      const std::size_t k = t_.size() - 1 - i;
      t[i] = -t_[k];
      z[i] = {z_[k][0], z_[k][1], -z_[k][2], -z_[k][3]};
    }
    return GeodesicTrajectory(chart_, theta0_.reversed(), std::move(t), std::move(z), stats_,
                              truncated_);
  }

 private:
  std::size_t interval(double t) const {
    const double eps = 1e-9 * (1.0 + std::abs(t));
    if (t < t_min() - eps || t > t_max() + eps) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "time %.6g outside trajectory span [%.6g, %.6g]", t, t_min(),
                    t_max());
      throw DomainError(buf);
    }
    auto it = std::upper_bound(t_.begin(), t_.end(), t);
    std::size_t i = it == t_.begin() ? 0 : static_cast<std::size_t>(it - t_.begin()) - 1;
    return std::min(i, t_.size() - 2);
  }

  MetricChart chart_;
  UnitTangentVector theta0_;
  std::vector<double> t_;
  std::vector<State4> z_;
  std::vector<ChartVector> acc_;
  std::vector<double> K_;
  TrajectoryStats stats_;
  bool truncated_ = false;
};

namespace detail {

struct Pass {
  std::vector<double> t;
  std::vector<State4> z;
  bool truncated = false;
};

inline Pass run_pass(const MetricChart& chart, State4 z, const std::vector<double>& targets,
                     const StepPolicy& policy, double pad, TrajectoryStats& stats) {
  Pass out;
  ode::StepControl ctl;
  ctl.rtol = ctl.atol = policy.local_tol;
  ctl.h_max = policy.h_max;
  ode::StepStats st;
  double h = std::min(0.05, policy.h_max);
  double t = 0.0;
  bool left = false;
  auto rhs = [&chart](double, const State4& y, State4& dy) { geodesic_rhs(chart, y, dy); };
  auto post = [&](double, State4& y) {
    const double n = metric_norm(chart, {y[0], y[1]}, {y[2], y[3]});
    stats.max_speed_drift = std::max(stats.max_speed_drift, std::abs(n - 1.0));
    y[2] /= n;
    y[3] /= n;
    if (!chart.window().contains({y[0], y[1]}, pad)) {
      left = true;
      return false;
    }
    return true;
  };
  for (double target : targets) {
    const double reached = ode::integrate<4>(rhs, z, t, target, h, ctl, st, post);
    if (left || reached != target) {
      out.truncated = true;
      break;
    }
    t = target;
    out.t.push_back(target);
    out.z.push_back(z);
  }
  stats.accepted += st.accepted;
  stats.rejected += st.rejected;
  stats.h_smallest = std::min(stats.h_smallest, st.h_smallest);
  return out;
}

}  // namespace detail

/// Integrates the geodesic through theta0 (at t = 0) over `span`, sampling
/// on the grid k * sample_dt plus the span endpoints.
///
/// A trajectory that leaves the padded window is returned partially with
/// `truncated()` set; step-size underflow raises IntegrationError.
inline GeodesicTrajectory integrate_geodesic(const MetricChart& chart,
                                             const UnitTangentVector& theta0, TimeSpan span,
                                             const StepPolicy& policy = {}) {
  if (!(span.hi > span.lo) || !std::isfinite(span.lo) || !std::isfinite(span.hi))
    throw DomainError("time span must be finite with lo < hi");
  const double pad = policy.pad >= 0.0 ? policy.pad : std::max(std::abs(span.lo), std::abs(span.hi));
  const double dt = policy.sample_dt;
  std::vector<double> grid;
  grid.push_back(span.lo);
  for (long k = static_cast<long>(std::ceil(span.lo / dt)); k * dt < span.hi; ++k) {
    const double t = static_cast<double>(k) * dt;
    if (t > span.lo + 1e-12 * dt) grid.push_back(t);
  }
  grid.push_back(span.hi);

  std::vector<double> forward, backward;
  bool has_zero = false;
  for (double t : grid) {
    if (t > 0.0) forward.push_back(t);
    else if (t < 0.0) backward.push_back(t);
    else has_zero = true;
  }
  std::reverse(backward.begin(), backward.end());

  TrajectoryStats stats;
  const State4 z0 = theta0.state();
  auto fw = detail::run_pass(chart, z0, forward, policy, pad, stats);
  auto bw = detail::run_pass(chart, z0, backward, policy, pad, stats);
  // Samples on one side of t = 0 are only meaningful if that side was reached.
  const bool truncated = fw.truncated || bw.truncated;

  std::vector<double> t;
  std::vector<State4> z;
  for (std::size_t i = bw.t.size(); i-- > 0;) {
    t.push_back(bw.t[i]);
    z.push_back(bw.z[i]);
  }
  if (has_zero) {
    t.push_back(0.0);
    z.push_back(z0);
  }
  for (std::size_t i = 0; i < fw.t.size(); ++i) {
    t.push_back(fw.t[i]);
    z.push_back(fw.z[i]);
  }
  if (t.empty()) throw IntegrationError("geodesic left the padded window before the first sample");
  return GeodesicTrajectory(chart, theta0, std::move(t), std::move(z), stats, truncated);
}

/// phi_t(theta). Throws IntegrationError when the orbit leaves the padded window.
inline UnitTangentVector flow(const MetricChart& chart, const UnitTangentVector& theta, double t,
                              const StepPolicy& policy = {}) {
  if (t == 0.0) return theta;
  StepPolicy p = policy;
  p.sample_dt = std::abs(t);
  auto traj = integrate_geodesic(chart, theta, {std::min(0.0, t), std::max(0.0, t)}, p);
  if (traj.truncated()) throw IntegrationError("orbit left the padded window");
  return UnitTangentVector::from_state(chart, t > 0.0 ? traj.states().back() : traj.states().front());
}

// ---------------------------------------------------------------------------
// Affinely parametrized geodesics with their linearization (for shooting).

struct AffineFlow {
  State4 end;
  std::array<double, 16> jac;  // row-major d(end)/d(start)
};

inline AffineFlow propagate_affine(const MetricChart& chart, const State4& z0, double duration,
                                   double tol) {
  ode::State<20> s{};
  for (int i = 0; i < 4; ++i) s[i] = z0[i];
  for (int i = 0; i < 4; ++i) s[4 + 5 * i] = 1.0;
  auto rhs = [&chart](double, const ode::State<20>& y, ode::State<20>& dy) {
    const double vx = y[2], vy = y[3];
    const auto jet = chart.christoffel_jet({y[0], y[1]});
    const auto& G = jet.value;
    const auto quad = [&](const Christoffel& c, bool xrow) {
      return xrow ? c.x_xx * vx * vx + 2.0 * c.x_xy * vx * vy + c.x_yy * vy * vy
                  : c.y_xx * vx * vx + 2.0 * c.y_xy * vx * vy + c.y_yy * vy * vy;
    };
    dy[0] = vx;
    dy[1] = vy;
    dy[2] = -quad(G, true);
    dy[3] = -quad(G, false);
    double A[4][4] = {{0, 0, 1, 0},
                      {0, 0, 0, 1},
                      {-quad(jet.d_dx, true), -quad(jet.d_dy, true),
                       -2.0 * (G.x_xx * vx + G.x_xy * vy), -2.0 * (G.x_xy * vx + G.x_yy * vy)},
                      {-quad(jet.d_dx, false), -quad(jet.d_dy, false),
                       -2.0 * (G.y_xx * vx + G.y_xy * vy), -2.0 * (G.y_xy * vx + G.y_yy * vy)}};
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        double acc = 0.0;
        for (int k = 0; k < 4; ++k) acc += A[i][k] * y[4 + 4 * k + j];
        dy[4 + 4 * i + j] = acc;
      }
  };
  ode::StepControl ctl;
  ctl.rtol = ctl.atol = tol;
  ode::StepStats st;
  double h = std::abs(duration) * 0.05;
  ode::integrate<20>(rhs, s, 0.0, duration, h, ctl, st);
  AffineFlow out;
  for (int i = 0; i < 4; ++i) out.end[i] = s[i];
  for (int i = 0; i < 16; ++i) out.jac[i] = s[4 + i];
  return out;
}

struct BvpOptions {
  /// Bound on the endpoint and continuity residuals, in g-norm.
  double tol = 1e-9;
  int max_iter = 40;
  /// Target arclength per shooting segment (divided by max(1, kappa)).
  double segment_length = 1.0;
  double integ_tol = 1e-12;
  int max_segments = 1024;
};

struct BvpResult {
  double distance = 0.0;
  /// Unit (in g) initial direction at p and arrival direction at q.
  ChartVector start_dir;
  ChartVector arrival_dir;
  int iterations = 0;
  int segments = 1;
  double residual = 0.0;
};

namespace detail {

/// Multiple shooting for x'' + Gamma(x', x') = 0 on s in [0, 1] with
/// x(0) = p, x(1) = q. Unknowns are the states at N equally spaced nodes.
class Shooting {
 public:
  Shooting(const MetricChart& chart, ChartPoint p, ChartPoint q, int n, double integ_tol)
      : chart_(chart), p_(p), q_(q), n_(n), integ_tol_(integ_tol) {}

  void set_target(ChartPoint q) { q_ = q; }
  int size() const { return 4 * n_; }

  Eigen::VectorXd straight_guess() const {
    Eigen::VectorXd X(size());
    const ChartVector d = q_ - p_;
    for (int i = 0; i < n_; ++i) {
      const double s = static_cast<double>(i) / n_;
      X.segment<4>(4 * i) << p_.x + s * d.x, p_.y + s * d.y, d.x, d.y;
    }
    return X;
  }

  /// Returns false if a segment could not be integrated.
  bool evaluate(const Eigen::VectorXd& X, Eigen::VectorXd& F, std::vector<AffineFlow>& flows) const {
    F.resize(size());
    flows.resize(n_);
    const double ds = 1.0 / n_;
    try {
      for (int i = 0; i < n_; ++i) {
        State4 z{X[4 * i], X[4 * i + 1], X[4 * i + 2], X[4 * i + 3]};
        flows[i] = propagate_affine(chart_, z, ds, integ_tol_);
      }
    } catch (const Error&) {
      return false;
    }
    F[0] = X[0] - p_.x;
    F[1] = X[1] - p_.y;
    for (int i = 0; i + 1 < n_; ++i)
      for (int k = 0; k < 4; ++k) F[2 + 4 * i + k] = flows[i].end[k] - X[4 * (i + 1) + k];
    F[size() - 2] = flows[n_ - 1].end[0] - q_.x;
    F[size() - 1] = flows[n_ - 1].end[1] - q_.y;
    for (int i = 0; i < F.size(); ++i)
      if (!std::isfinite(F[i])) return false;
    return true;
  }

  /// Largest residual measured in g-norm; velocity gaps are relative to the speed.
  double residual(const Eigen::VectorXd& X, const std::vector<AffineFlow>& flows) const {
    double r = metric_norm(chart_, q_, {flows[n_ - 1].end[0] - q_.x, flows[n_ - 1].end[1] - q_.y});
    r = std::max(r, metric_norm(chart_, p_, {X[0] - p_.x, X[1] - p_.y}));
    const double speed = std::max(1.0, metric_norm(chart_, p_, {X[2], X[3]}));
    for (int i = 0; i + 1 < n_; ++i) {
      const ChartPoint at{X[4 * (i + 1)], X[4 * (i + 1) + 1]};
      const auto& e = flows[i].end;
      r = std::max(r, metric_norm(chart_, at, {e[0] - at.x, e[1] - at.y}));
      r = std::max(r, metric_norm(chart_, at, {e[2] - X[4 * (i + 1) + 2], e[3] - X[4 * (i + 1) + 3]}) / speed);
    }
    return r;
  }

  bool newton_step(const Eigen::VectorXd& F, const std::vector<AffineFlow>& flows,
                   Eigen::VectorXd& delta) const {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(20 * n_ + 4));
    trip.emplace_back(0, 0, 1.0);
    trip.emplace_back(1, 1, 1.0);
    for (int i = 0; i + 1 < n_; ++i) {
      const int row = 2 + 4 * i;
      for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) trip.emplace_back(row + r, 4 * i + c, flows[i].jac[4 * r + c]);
        trip.emplace_back(row + r, 4 * (i + 1) + r, -1.0);
      }
    }
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 4; ++c)
        trip.emplace_back(size() - 2 + r, 4 * (n_ - 1) + c, flows[n_ - 1].jac[4 * r + c]);
    Eigen::SparseMatrix<double> J(size(), size());
    J.setFromTriplets(trip.begin(), trip.end());
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
    lu.compute(J);
    if (lu.info() != Eigen::Success) return false;
    delta = lu.solve(-F);
    if (lu.info() != Eigen::Success) return false;
    for (int i = 0; i < delta.size(); ++i)
      if (!std::isfinite(delta[i])) return false;
    return true;
  }

  /// Damped Newton from X; returns the final residual and leaves the iterate in X.
  double solve(Eigen::VectorXd& X, double tol, int max_iter, int& iterations,
               std::vector<AffineFlow>& flows) const {
    Eigen::VectorXd F, delta, Xt, Ft;
    std::vector<AffineFlow> ftrial;
    if (!evaluate(X, F, flows)) return std::numeric_limits<double>::infinity();
    double res = residual(X, flows);
    for (iterations = 0; iterations < max_iter && res > tol; ++iterations) {
      if (!newton_step(F, flows, delta)) break;
      const double merit = F.norm();
      bool accepted = false;
      for (double alpha = 1.0; alpha >= 1.0 / 1024; alpha *= 0.5) {
        Xt = X + alpha * delta;
        if (!evaluate(Xt, Ft, ftrial)) continue;
        if (Ft.norm() < (1.0 - 1e-4 * alpha) * merit || Ft.norm() < 1e-14) {
          X.swap(Xt);
          F.swap(Ft);
          flows.swap(ftrial);
          accepted = true;
          break;
        }
      }
      if (!accepted) break;
      res = residual(X, flows);
    }
    return res;
  }

 private:
  const MetricChart& chart_;
  ChartPoint p_, q_;
  int n_;
  double integ_tol_;
};

/// Length of the straight chart segment p -> q, in g (midpoint rule).
inline double chart_segment_length(const MetricChart& chart, ChartPoint p, ChartPoint q) {
  constexpr int n = 32;
  const ChartVector d = q - p;
  double L = 0.0;
  for (int i = 0; i < n; ++i) {
    const double s = (i + 0.5) / n;
    L += metric_norm(chart, p + s * d, d) / n;
  }
  return L;
}

}  // namespace detail

/// Optional initial guess for distance_bvp: the unit direction at p and
/// the length of the connecting geodesic.
struct BvpGuess {
  ChartVector dir;
  double length = 0.0;
};

/// Geodesic distance between p and q and the unit direction at p of the
/// connecting geodesic.
///
/// Solved by multiple shooting with Newton iterations on the node states;
/// when plain Newton stalls the target is approached by continuation from p.
/// Geodesics are unique in the shipped families, so the first converged
/// solution is the minimizer.
inline BvpResult distance_bvp(const MetricChart& chart, ChartPoint p, ChartPoint q,
                              const BvpOptions& opts = {}, const BvpGuess* guess = nullptr) {
  BvpResult out;
  const double L0 = detail::chart_segment_length(chart, p, q);
  if (L0 < 1e-14) {
    const auto m = chart.metric(p);
    out.start_dir = {1.0 / std::sqrt(m.gxx), 0.0};
    out.arrival_dir = out.start_dir;
    return out;
  }
  const double seg = opts.segment_length / std::max(1.0, chart.kappa());
  const double L_est = guess && guess->length > 0.0 ? std::min(guess->length, L0) : L0;
  const int n = std::clamp(static_cast<int>(std::ceil(L_est / seg)), 1, opts.max_segments);
  detail::Shooting shoot(chart, p, q, n, opts.integ_tol);
  Eigen::VectorXd X = shoot.straight_guess();
  if (guess && guess->length > 0.0) {
    // Nodes along the geodesic fired from p in the guessed direction.
    try {
      const double L = guess->length;
      StepPolicy sp;
      sp.sample_dt = L / n;
      sp.pad = 1e300;
      const auto g = integrate_geodesic(chart, UnitTangentVector(chart, p, guess->dir), {0.0, L}, sp);
      if (!g.truncated()) {
        for (int i = 0; i < n; ++i) {
          const auto z = g.state_at(L * i / n);
          X.segment<4>(4 * i) << z[0], z[1], L * z[2], L * z[3];
        }
      }
    } catch (const Error&) {
      X = shoot.straight_guess();
    }
  }
  std::vector<AffineFlow> flows;
  int it = 0;
  double res = shoot.solve(X, opts.tol, opts.max_iter, it, flows);
  out.iterations = it;
  if (!(res <= opts.tol) && guess) {
    X = shoot.straight_guess();
    res = shoot.solve(X, opts.tol, opts.max_iter, it, flows);
    out.iterations += it;
  }
  if (!(res <= opts.tol)) {
    // Continuation: walk the target from p towards q.
    constexpr int stages = 8;
    const ChartVector d = q - p;
    X = detail::Shooting(chart, p, p + (1.0 / stages) * d, n, opts.integ_tol).straight_guess();
    for (int k = 1; k <= stages; ++k) {
      shoot.set_target(p + (static_cast<double>(k) / stages) * d);
      res = shoot.solve(X, opts.tol, opts.max_iter, it, flows);
      out.iterations += it;
      if (!(res <= opts.tol)) break;
    }
  }
  if (!(res <= opts.tol)) {
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "geodesic shooting from (%.6g, %.6g) to (%.6g, %.6g) did not converge", p.x,
                  p.y, q.x, q.y);
    throw ConvergenceError(buf, res);
  }
  double speed = 0.0;
  for (int i = 0; i < n; ++i)
    speed += metric_norm(chart, {X[4 * i], X[4 * i + 1]}, {X[4 * i + 2], X[4 * i + 3]});
  speed /= n;
  out.distance = speed;
  const ChartVector v0{X[2], X[3]};
  out.start_dir = (1.0 / metric_norm(chart, p, v0)) * v0;
  const auto& e = flows[n - 1].end;
  const ChartVector v1{e[2], e[3]};
  out.arrival_dir = (1.0 / metric_norm(chart, q, v1)) * v1;
  out.residual = res;
  out.segments = n;
  return out;
}

enum class SasakiMode {
  geodesic,  // base term from distance_bvp
  local,     // base term from the metric at the chart midpoint (small separations)
};

/// sqrt(d_g(p_a, p_b)^2 + angle^2), the angle taken between the frame angles
/// of the two directions in the g-orthonormal frames at their own base points.
inline double sasaki_distance(const MetricChart& chart, const UnitTangentVector& a,
                              const UnitTangentVector& b, SasakiMode mode = SasakiMode::geodesic,
                              const BvpOptions& opts = {}) {
  const double ang = wrap_angle(frame_angle(chart, b.base(), b.dir()) -
                                frame_angle(chart, a.base(), a.dir()));
  const ChartVector d = b.base() - a.base();
  double base = 0.0;
  if (d.x != 0.0 || d.y != 0.0) {
    base = mode == SasakiMode::local
               ? metric_norm(chart, midpoint(a.base(), b.base()), d)
               : distance_bvp(chart, a.base(), b.base(), opts).distance;
  }
  return std::sqrt(base * base + ang * ang);
}

/// Local surrogate on raw states; used in inner loops over many pairs.
inline double sasaki_local(const MetricChart& chart, const State4& a, const State4& b) {
  const ChartPoint pa{a[0], a[1]}, pb{b[0], b[1]};
  const double ang =
      wrap_angle(frame_angle(chart, pb, {b[2], b[3]}) - frame_angle(chart, pa, {a[2], a[3]}));
  const double base = metric_norm(chart, midpoint(pa, pb), pb - pa);
  return std::sqrt(base * base + ang * ang);
}

struct QuasiGeodesicReport {
  bool holds = true;
  /// Arclength positions of the worst pair along the curve.
  double worst_s = 0.0;
  double worst_t = 0.0;
  std::size_t worst_i = 0;
  std::size_t worst_j = 0;
  /// max over pairs of (length - B) / distance.
  double worst_ratio = 0.0;
};

/// Tests length(c[s,t]) <= A d(c(s), c(t)) + B over all sampled pairs.
inline QuasiGeodesicReport quasi_geodesic_check(const MetricChart& chart,
                                                const std::vector<ChartPoint>& curve, double A,
                                                double B, const BvpOptions& opts = {}) {
  if (A < 1.0 || B < 0.0) throw PreconditionError("quasi-geodesic constants need A >= 1, B >= 0");
  QuasiGeodesicReport rep;
  const std::size_t n = curve.size();
  if (n < 2) return rep;
  std::vector<double> arc(n, 0.0);
  for (std::size_t i = 1; i < n; ++i)
    arc[i] = arc[i - 1] + distance_bvp(chart, curve[i - 1], curve[i], opts).distance;
  if (!std::isfinite(arc.back())) throw PreconditionError("curve is not rectifiable");
  rep.worst_ratio = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double len = arc[j] - arc[i];
      const double d = distance_bvp(chart, curve[i], curve[j], opts).distance;
      if (len > A * d + B + 1e-9 * (1.0 + len)) rep.holds = false;
      if (d > 1e-12) {
        const double ratio = (len - B) / d;
        if (ratio > rep.worst_ratio) {
          rep.worst_ratio = ratio;
          rep.worst_i = i;
          rep.worst_j = j;
          rep.worst_s = arc[i];
          rep.worst_t = arc[j];
        }
      }
    }
  }
  return rep;
}

}  // namespace geoflow
