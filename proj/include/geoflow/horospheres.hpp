#pragma once

// Busemann functions, horocycle traces, strips I = H^+ ∩ H^- and
// bi-asymptotic distance profiles.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <vector>

#include "geoflow/errors.hpp"
#include "geoflow/geodesic.hpp"

namespace geoflow {

enum class BusemannSign { plus, minus };

inline const char* to_string(BusemannSign s) { return s == BusemannSign::plus ? "+" : "-"; }

struct BusemannOptions {
  /// Accept once the extrapolated value moves by less than tol between levels.
  double tol = 1e-5;
  double T_start = 1.0;
  double T_max = 64.0;
  /// Richardson columns in 1/T (1 means raw truncations).
  int columns = 4;
  double monotone_slack = 1e-8;
  BvpOptions bvp;
  StepPolicy step;
};

struct BusemannEstimate {
  UnitTangentVector theta;
  ChartPoint point;
  BusemannSign sign = BusemannSign::plus;
  double value = 0.0;
  double T_used = 0.0;
  /// Raw b_{T/2} - b_T at the last level.
  double decrement_last = 0.0;
  /// Change of the extrapolated value at the last level.
  double error_estimate = std::numeric_limits<double>::infinity();
  bool converged = false;
  /// Raw truncations d(x, gamma(T)) - T were nonincreasing in T.
  bool monotone = true;
  std::vector<double> T;
  std::vector<double> raw;
  /// Unit gradient of b at the point (chart components).
  ChartVector gradient;
};

/// b^+_theta(x) = lim d(x, gamma_theta(t)) - t and b^-_theta = b^+_{-theta}.
///
/// Truncations b_T are computed for T = T_start, 2 T_start, ... and
/// extrapolated in 1/T (Richardson): in flat directions b_T - b decays
/// only like 1/T, in negative curvature exponentially. The gradient is
/// minus the unit direction at x of the geodesic towards gamma(T),
/// extrapolated the same way.
class BusemannField {
 public:
  BusemannField(const MetricChart& chart, const UnitTangentVector& theta, BusemannSign sign,
                BusemannOptions opts = {})
      : chart_(chart),
        theta_(theta),
        sign_(sign),
        opts_(opts),
        ray_(make_ray(chart, theta, sign, opts)) {}

  const UnitTangentVector& theta() const { return theta_; }
  BusemannSign sign() const { return sign_; }
  const GeodesicTrajectory& ray() const { return ray_; }
  const BusemannOptions& options() const { return opts_; }
  double T_cap() const { return std::min(opts_.T_max, ray_.t_max()); }

  /// `hint`, when given, is a guess for grad b at x and seeds the first
  /// connecting geodesic.
  BusemannEstimate evaluate(ChartPoint x, const ChartVector* hint = nullptr) const {
    BusemannEstimate e{.theta = theta_, .point = x, .sign = sign_};
    std::vector<double> Ts;
    for (double T = opts_.T_start; T <= T_cap() * (1 + 1e-12); T *= 2.0) Ts.push_back(T);
    if (Ts.size() < 2) throw IntegrationError("Busemann ray too short for two truncation levels");
    const int cols = std::max(1, opts_.columns);
    // Tables hold q_T = (d_T^2 - T^2) / 2T = b_T + b_T^2 / 2T, which has the
    // same limit as b_T and is affine in 1/T wherever the geometry is flat.
    // Gradients use grad q_T = (d_T / T) u_T with u_T the unit direction away
    // from the ray point, in chart components.
    std::vector<std::vector<double>> Rv, Rx, Ry;
    std::optional<BvpGuess> guess;
    if (hint) {
      const double n = metric_norm(chart_, x, *hint);
      if (n > 0.0) guess = BvpGuess{(-1.0 / n) * *hint, 0.0};
    }
    for (std::size_t k = 0; k < Ts.size(); ++k) {
      const double T = Ts[k];
      const ChartPoint target = ray_.point_at(T);
      if (guess && k == 0 && hint) guess->length = detail::chart_segment_length(chart_, x, target);
      const auto r = distance_bvp(chart_, x, target, opts_.bvp, guess ? &*guess : nullptr);
      const double bT = r.distance - T;
      const double qT = bT + bT * bT / (2.0 * T);
      const ChartVector G = (-r.distance / T) * r.start_dir;
      if (!e.raw.empty()) {
        e.decrement_last = e.raw.back() - bT;
        if (bT > e.raw.back() + opts_.monotone_slack * (1.0 + T)) e.monotone = false;
      }
      if (k + 1 < Ts.size()) guess = BvpGuess{r.start_dir, r.distance + (Ts[k + 1] - T)};
      e.T.push_back(T);
      e.raw.push_back(bT);
      Rv.push_back({qT});
      Rx.push_back({G.x});
      Ry.push_back({G.y});
      const int m_top = std::min<int>(static_cast<int>(k), cols - 1);
      for (int m = 1; m <= m_top; ++m) {
        const double f = std::pow(2.0, m) - 1.0;
        Rv[k].push_back(Rv[k][m - 1] + (Rv[k][m - 1] - Rv[k - 1][m - 1]) / f);
        Rx[k].push_back(Rx[k][m - 1] + (Rx[k][m - 1] - Rx[k - 1][m - 1]) / f);
        Ry[k].push_back(Ry[k][m - 1] + (Ry[k][m - 1] - Ry[k - 1][m - 1]) / f);
      }
      e.T_used = T;
      if (k == 0) {
        e.value = bT;
        e.gradient = -1.0 * r.start_dir;
        continue;
      }
      // Column with the smallest change between this level and the previous one.
      int best = 0;
      double best_err = std::numeric_limits<double>::infinity();
      const int avail = static_cast<int>(std::min(Rv[k - 1].size(), Rv[k].size()));
      for (int m = 0; m < avail; ++m) {
        const double err = std::abs(Rv[k][m] - Rv[k - 1][m]);
        if (err < best_err) {
          best_err = err;
          best = m;
        }
      }
      // The raw truncations compete too: in negative curvature they settle
      // exponentially fast, while q_T still carries its b^2 / 2T term.
      const double raw_err = std::abs(e.raw[k] - e.raw[k - 1]);
      if (raw_err < best_err) {
        e.value = bT;
        e.error_estimate = raw_err;
        e.gradient = -1.0 * r.start_dir;
        best_err = raw_err;
      } else {
        e.value = Rv[k][best];
        e.error_estimate = best_err;
        const ChartVector g{Rx[k][best], Ry[k][best]};
        const double gn = metric_norm(chart_, x, g);
        e.gradient = gn > 0.0 ? (1.0 / gn) * g : -1.0 * r.start_dir;
      }
      // The first pair of levels can agree by accident; wait for a third.
      if (k >= 2 && best_err < opts_.tol) {
        e.converged = true;
        break;
      }
    }
    return e;
  }

  double value(ChartPoint x) const { return evaluate(x).value; }

 private:
  static GeodesicTrajectory make_ray(const MetricChart& chart, const UnitTangentVector& theta,
                                     BusemannSign sign, const BusemannOptions& opts) {
    const UnitTangentVector dir = sign == BusemannSign::plus ? theta : theta.reversed();
    auto ray = integrate_geodesic(chart, dir, {0.0, opts.T_max}, opts.step);
    return ray;
  }

  MetricChart chart_;
  UnitTangentVector theta_;
  BusemannSign sign_;
  BusemannOptions opts_;
  GeodesicTrajectory ray_;
};

inline BusemannEstimate busemann(const MetricChart& chart, const UnitTangentVector& theta,
                                 ChartPoint x, BusemannSign sign, const BusemannOptions& opts = {}) {
  return BusemannField(chart, theta, sign, opts).evaluate(x);
}

struct TraceOptions {
  double trace_tol = 1e-6;
  int max_corrector = 12;
  /// Also evaluate the opposite Busemann function at every traced point.
  bool other_sign = false;
  /// With other_sign: a side stops after `stop_after` consecutive samples
  /// with |b_other| above this level.
  double stop_other_above = std::numeric_limits<double>::infinity();
  int stop_after = 2;
  BusemannOptions busemann;
};

struct HorocycleTrace {
  UnitTangentVector theta;
  BusemannSign sign = BusemannSign::plus;
  /// Signed arclength, increasing; 0 at base(theta).
  std::vector<double> s;
  std::vector<ChartPoint> points;
  /// Leaf vectors (q, -grad b^+) or (q, +grad b^-), unit in g.
  std::vector<ChartVector> normals;
  std::vector<double> b_plus;
  std::vector<double> b_minus;
  std::size_t base_index = 0;
  /// Set when a side stopped early (corrector failure or window exit).
  bool truncated = false;
  double nominal_step = 0.0;
};

namespace detail {

struct TraceSide {
  std::vector<double> s;
  std::vector<ChartPoint> p;
  std::vector<ChartVector> n;
  std::vector<double> b_own, b_other;
  bool truncated = false;
};

}  // namespace detail

/// Predictor-corrector tracing of {b^sign_theta = 0} through base(theta),
/// `halflength` of arclength to each side with the given step.
inline HorocycleTrace trace_horocycle(const MetricChart& chart, const UnitTangentVector& theta,
                                      BusemannSign sign, double halflength, double step,
                                      const TraceOptions& opts = {}) {
  if (!(halflength > 0.0) || !(step > 0.0)) throw DomainError("trace needs positive halflength and step");
  const BusemannField field(chart, theta, sign, opts.busemann);
  std::optional<BusemannField> other;
  if (opts.other_sign)
    other.emplace(chart, theta, sign == BusemannSign::plus ? BusemannSign::minus : BusemannSign::plus,
                  opts.busemann);
  const double nsign = sign == BusemannSign::plus ? -1.0 : 1.0;

  auto correct = [&](ChartPoint q, ChartVector& normal, double& b) {
    ChartVector hint = nsign * normal;
    for (int it = 0; it < opts.max_corrector; ++it) {
      const auto e = field.evaluate(q, &hint);
      hint = e.gradient;
      b = e.value;
      normal = nsign * e.gradient;
      if (std::abs(b) <= opts.trace_tol) return std::optional<ChartPoint>(q);
      q = q - b * e.gradient;
      if (!chart.window().contains(q)) return std::optional<ChartPoint>();
    }
    return std::optional<ChartPoint>();
  };

  auto march = [&](double dir) {
    detail::TraceSide side;
    ChartPoint prev = theta.base();
    ChartPoint cur = theta.base();
    ChartVector normal = theta.dir();
    double s = 0.0;
    int outside = 0;
    const int n_steps = static_cast<int>(std::ceil(halflength / step - 1e-9));
    for (int k = 0; k < n_steps; ++k) {
      ChartPoint guess;
      if (k == 0) {
        guess = cur + step * dir * rotate_quarter(chart, cur, normal);
      } else {
        const ChartVector d = cur - prev;
        const double len = metric_norm(chart, midpoint(cur, prev), d);
        guess = cur + (step / len) * d;
      }
      ChartVector nn = normal;
      double b = 0.0;
      const auto q = correct(guess, nn, b);
      if (!q) {
        side.truncated = true;
        break;
      }
      s += dir * metric_norm(chart, midpoint(cur, *q), *q - cur);
      prev = cur;
      cur = *q;
      normal = nn;
      side.s.push_back(s);
      side.p.push_back(cur);
      side.n.push_back(nn);
      side.b_own.push_back(b);
      side.b_other.push_back(other ? other->value(cur) : std::nan(""));
      outside = other && std::abs(side.b_other.back()) > opts.stop_other_above ? outside + 1 : 0;
      if (outside >= opts.stop_after) break;
    }
    return side;
  };

  HorocycleTrace tr{.theta = theta, .sign = sign};
  tr.nominal_step = step;
  const auto left = march(-1.0);
  const auto right = march(1.0);
  tr.truncated = left.truncated || right.truncated;
  auto push = [&](double s, ChartPoint p, ChartVector n, double own, double oth) {
    tr.s.push_back(s);
    tr.points.push_back(p);
    tr.normals.push_back(n);
    tr.b_plus.push_back(sign == BusemannSign::plus ? own : oth);
    tr.b_minus.push_back(sign == BusemannSign::plus ? oth : own);
  };
  for (std::size_t i = left.s.size(); i-- > 0;)
    push(left.s[i], left.p[i], left.n[i], left.b_own[i], left.b_other[i]);
  tr.base_index = tr.s.size();
  push(0.0, theta.base(), theta.dir(), 0.0, other ? other->value(theta.base()) : std::nan(""));
  for (std::size_t i = 0; i < right.s.size(); ++i)
    push(right.s[i], right.p[i], right.n[i], right.b_own[i], right.b_other[i]);
  return tr;
}

/// Second fundamental form of the traced curve at sample i with respect to
/// its leaf normal, -<N, D c'/ds>_g. For the stable horocycle this is the
/// Riccati value u^s at the leaf vector; for the unstable one, u^u.
inline double leaf_riccati_value(const MetricChart& chart, const HorocycleTrace& tr, std::size_t i) {
  if (i == 0 || i + 1 >= tr.points.size()) throw DomainError("needs an interior trace sample");
  const double h0 = tr.s[i] - tr.s[i - 1], h1 = tr.s[i + 1] - tr.s[i];
  const ChartPoint a = tr.points[i - 1], b = tr.points[i], c = tr.points[i + 1];
  auto d1 = [&](double fa, double fb, double fc) {
    return -h1 / (h0 * (h0 + h1)) * fa + (h1 - h0) / (h0 * h1) * fb + h0 / (h1 * (h0 + h1)) * fc;
  };
  auto d2 = [&](double fa, double fb, double fc) {
    return 2.0 * (fa / (h0 * (h0 + h1)) - fb / (h0 * h1) + fc / (h1 * (h0 + h1)));
  };
  const ChartVector v{d1(a.x, b.x, c.x), d1(a.y, b.y, c.y)};
  const ChartVector acc{d2(a.x, b.x, c.x), d2(a.y, b.y, c.y)};
  const auto G = chart.christoffel(b);
  const ChartVector cov{
      acc.x + G.x_xx * v.x * v.x + 2.0 * G.x_xy * v.x * v.y + G.x_yy * v.y * v.y,
      acc.y + G.y_xx * v.x * v.x + 2.0 * G.y_xy * v.x * v.y + G.y_yy * v.y * v.y};
  return -metric_dot(chart, b, tr.normals[i], cov);
}

struct StripRecord {
  UnitTangentVector theta;
  double width = 0.0;
  ChartPoint endpoint_lo;
  ChartPoint endpoint_hi;
  /// Arclength positions of the endpoints along H^+.
  double s_lo = 0.0;
  double s_hi = 0.0;
  bool exceeded_window = false;
  bool trivial = true;
  double strip_tol = 0.0;
  HorocycleTrace trace;
};

struct StripOptions {
  double strip_tol = 1e-3;
  double step = 0.05;
  TraceOptions trace;
};

namespace detail {

inline ChartPoint trace_point_at(const HorocycleTrace& tr, double s) {
  auto it = std::upper_bound(tr.s.begin(), tr.s.end(), s);
  std::size_t i = it == tr.s.begin() ? 0 : static_cast<std::size_t>(it - tr.s.begin()) - 1;
  i = std::min(i, tr.s.size() - 2);
  const double w = (s - tr.s[i]) / (tr.s[i + 1] - tr.s[i]);
  return tr.points[i] + w * (tr.points[i + 1] - tr.points[i]);
}

/// Endpoint of the run of |b^-| <= tol ending at `last_in`, stepping by
/// `dir`. b^- has quadratic contact at the strip boundary, so sqrt(b^-) is
/// extrapolated linearly from the first two outside samples.
inline double refine_endpoint(const HorocycleTrace& tr, std::size_t last_in, int dir) {
  const long n = static_cast<long>(tr.s.size());
  const long i1 = static_cast<long>(last_in) + dir, i2 = i1 + dir;
  if (i1 < 0 || i1 >= n) return tr.s[last_in];
  const double s_in = tr.s[last_in], s1 = tr.s[static_cast<std::size_t>(i1)];
  if (i2 < 0 || i2 >= n) return s_in;
  const double s2 = tr.s[static_cast<std::size_t>(i2)];
  const double r1 = std::sqrt(std::abs(tr.b_minus[static_cast<std::size_t>(i1)]));
  const double r2 = std::sqrt(std::abs(tr.b_minus[static_cast<std::size_t>(i2)]));
  if (!(std::abs(r2 - r1) > 0.0)) return s_in;
  const double se = s1 - r1 * (s2 - s1) / (r2 - r1);
  return std::clamp(se, std::min(s_in, s1), std::max(s_in, s1));
}

}  // namespace detail

/// Walks H^+(theta) from base(theta) while |b^-_theta| <= strip_tol and
/// reports the arc, i.e. the strip I(theta) = H^+ ∩ H^- inside the search
/// window. A run reaching the end of the trace is reported as
/// exceeded_window.
inline StripRecord detect_strip(const MetricChart& chart, const UnitTangentVector& theta,
                                double search_halflength, const StripOptions& opts = {}) {
  TraceOptions to = opts.trace;
  to.other_sign = true;
  to.stop_other_above = opts.strip_tol;
  to.stop_after = 2;
  StripRecord rec{.theta = theta};
  rec.strip_tol = opts.strip_tol;
  rec.trace = trace_horocycle(chart, theta, BusemannSign::plus, search_halflength, opts.step, to);
  const auto& tr = rec.trace;
  std::size_t lo = tr.base_index, hi = tr.base_index;
  while (lo > 0 && std::abs(tr.b_minus[lo - 1]) <= opts.strip_tol) --lo;
  while (hi + 1 < tr.s.size() && std::abs(tr.b_minus[hi + 1]) <= opts.strip_tol) ++hi;
  rec.exceeded_window = lo == 0 || hi + 1 == tr.s.size();
  if (rec.exceeded_window) {
    rec.s_lo = tr.s[lo];
    rec.s_hi = tr.s[hi];
  } else {
    rec.s_lo = detail::refine_endpoint(tr, lo, -1);
    rec.s_hi = detail::refine_endpoint(tr, hi, +1);
  }
  rec.width = std::max(0.0, rec.s_hi - rec.s_lo);
  rec.endpoint_lo = detail::trace_point_at(tr, rec.s_lo);
  rec.endpoint_hi = detail::trace_point_at(tr, rec.s_hi);
  rec.trivial = !rec.exceeded_window && rec.width <= opts.strip_tol;
  return rec;
}

/// Unit tangent vector of the strip geodesic through the trace point at
/// arclength s (the leaf vector there).
inline UnitTangentVector strip_vector(const MetricChart& chart, const StripRecord& rec, double s) {
  const auto& tr = rec.trace;
  auto it = std::upper_bound(tr.s.begin(), tr.s.end(), s);
  std::size_t i = it == tr.s.begin() ? 0 : static_cast<std::size_t>(it - tr.s.begin()) - 1;
  i = std::min(i, tr.s.size() - 2);
  const double w = (s - tr.s[i]) / (tr.s[i + 1] - tr.s[i]);
  const ChartPoint p = tr.points[i] + w * (tr.points[i + 1] - tr.points[i]);
  const ChartVector n = tr.normals[i] + w * (tr.normals[i + 1] - tr.normals[i]);
  return UnitTangentVector(chart, p, n);
}

enum class AsymptoticVerdict { biasymptotic, forward_only, backward_only, neither };

inline const char* to_string(AsymptoticVerdict v) {
  switch (v) {
    case AsymptoticVerdict::biasymptotic: return "biasymptotic";
    case AsymptoticVerdict::forward_only: return "forward_only";
    case AsymptoticVerdict::backward_only: return "backward_only";
    case AsymptoticVerdict::neither: return "neither";
  }
  return "?";
}

struct BiasymptoticOptions {
  int samples = 41;
  /// A tail is bounded when its maximum stays below bound_factor * max(d(0), floor).
  double bound_factor = 2.0;
  double floor = 1e-6;
  BvpOptions bvp;
  StepPolicy step;
};

struct BiasymptoticReport {
  std::vector<double> t;
  std::vector<double> d;
  double forward_sup = 0.0;
  double backward_sup = 0.0;
  AsymptoticVerdict verdict = AsymptoticVerdict::neither;
  /// Hausdorff distance of the middle halves; NaN unless biasymptotic.
  double hausdorff = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

/// min_s d(p, gamma(s)) over s in [a, b] (convex in nonpositive curvature).
inline double distance_to_orbit(const MetricChart& chart, ChartPoint p, const GeodesicTrajectory& g,
                                double a, double b, const BvpOptions& bvp) {
  auto f = [&](double s) { return distance_bvp(chart, p, g.point_at(s), bvp).distance; };
  const double r = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = b - r * (b - a), x2 = a + r * (b - a);
  double f1 = f(x1), f2 = f(x2);
  while (b - a > 1e-7) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - r * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + r * (b - a);
      f2 = f(x2);
    }
  }
  return std::min({f1, f2, f(a), f(b)});
}

}  // namespace detail

/// Samples d(gamma_1(t), gamma_2(t)) on [-T, T] and classifies the tails.
inline BiasymptoticReport biasymptotic_distance(const MetricChart& chart, const UnitTangentVector& a,
                                                const UnitTangentVector& b, double T,
                                                const BiasymptoticOptions& opts = {}) {
  if (!(T > 0.0) || opts.samples < 5) throw DomainError("biasymptotic_distance needs T > 0 and >= 5 samples");
  const auto g1 = integrate_geodesic(chart, a, {-T, T}, opts.step);
  const auto g2 = integrate_geodesic(chart, b, {-T, T}, opts.step);
  if (g1.truncated() || g2.truncated()) throw IntegrationError("orbit leaves the padded window");
  BiasymptoticReport rep;
  const int n = opts.samples;
  std::size_t i0 = 0;
  for (int k = 0; k < n; ++k) {
    const double t = -T + 2.0 * T * k / (n - 1);
    rep.t.push_back(t);
    rep.d.push_back(distance_bvp(chart, g1.point_at(t), g2.point_at(t), opts.bvp).distance);
    if (std::abs(t) < std::abs(rep.t[i0])) i0 = static_cast<std::size_t>(k);
  }
  const double d0 = rep.d[i0];
  const double cap = opts.bound_factor * std::max(d0, opts.floor);
  auto tail_ok = [&](bool forward) {
    double mx = 0.0;
    bool nonincreasing = true;
    double prev = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t k = 0; k < rep.t.size(); ++k) {
      const double t = forward ? rep.t[k] : rep.t[rep.t.size() - 1 - k];
      const double d = forward ? rep.d[k] : rep.d[rep.t.size() - 1 - k];
      if (std::abs(t) < 0.5 * T - 1e-12 || (forward ? t < 0 : t > 0)) continue;
      mx = std::max(mx, d);
      if (!std::isnan(prev) && d > prev + 1e-9 * (1.0 + prev)) nonincreasing = false;
      prev = d;
    }
    return nonincreasing || mx <= cap;
  };
  for (std::size_t k = 0; k < rep.t.size(); ++k) {
    if (rep.t[k] >= 0.0) rep.forward_sup = std::max(rep.forward_sup, rep.d[k]);
    if (rep.t[k] <= 0.0) rep.backward_sup = std::max(rep.backward_sup, rep.d[k]);
  }
  const bool f = tail_ok(true), bk = tail_ok(false);
  rep.verdict = f && bk ? AsymptoticVerdict::biasymptotic
                : f     ? AsymptoticVerdict::forward_only
                : bk    ? AsymptoticVerdict::backward_only
                        : AsymptoticVerdict::neither;
  if (rep.verdict == AsymptoticVerdict::biasymptotic) {
    double h = 0.0;
    for (std::size_t k = 0; k < rep.t.size(); ++k) {
      const double t = rep.t[k];
      if (std::abs(t) > 0.5 * T + 1e-12) continue;
      const double r = rep.d[k] + 1.0;
      const double lo = std::max(-T, t - r), hi = std::min(T, t + r);
      h = std::max(h, detail::distance_to_orbit(chart, g1.point_at(t), g2, lo, hi, opts.bvp));
      h = std::max(h, detail::distance_to_orbit(chart, g2.point_at(t), g1, lo, hi, opts.bvp));
    }
    rep.hausdorff = h;
  }
  return rep;
}

}  // namespace geoflow
