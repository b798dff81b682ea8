#pragma once

// Separated-set entropy on windows and strips, expansivity of the
// strip-collapsed flow, and the local product (bracket) of two vectors.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "geoflow/errors.hpp"
#include "geoflow/fit.hpp"
#include "geoflow/geodesic.hpp"
#include "geoflow/horospheres.hpp"
#include "geoflow/metric.hpp"

namespace geoflow {

/// Initial conditions for an entropy estimate, in the order the greedy
/// selection visits them.
struct EntropyWindow {
  std::string description;
  std::vector<UnitTangentVector> vectors;

  /// nx * ny base points on [x0, x1] x [y0, y1] (an axis with one point uses
  /// its lower bound), all with the chart direction `dir`. Ordered by x index
  /// then y index.
  static EntropyWindow grid(const MetricChart& chart, double x0, double x1, double y0, double y1,
                            int nx, int ny, ChartVector dir) {
    if (nx < 1 || ny < 1) throw DomainError("entropy grid needs at least one point per axis");
    EntropyWindow w;
    char buf[200];
    std::snprintf(buf, sizeof buf, "grid[%.6g,%.6g]x[%.6g,%.6g] %dx%d dir=(%.6g,%.6g)", x0, x1, y0, y1,
                  nx, ny, dir.x, dir.y);
    w.description = buf;
    w.vectors.reserve(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny));
    for (int i = 0; i < nx; ++i) {
      const double x = nx == 1 ? x0 : x0 + (x1 - x0) * i / (nx - 1);
      for (int j = 0; j < ny; ++j) {
        const double y = ny == 1 ? y0 : y0 + (y1 - y0) * j / (ny - 1);
        w.vectors.emplace_back(chart, ChartPoint{x, y}, dir);
      }
    }
    return w;
  }
};

struct EntropyOptions {
  StepPolicy step{.local_tol = 1e-9};
};

struct SeparatedSetResult {
  std::string window;
  double epsilon = 0.0;
  std::vector<int> n;
  std::vector<std::size_t> counts;
  double slope = 0.0;
  /// Initial conditions whose orbit left the padded window before max(n) - 1.
  std::size_t dropped = 0;
  /// Strip runs only: per-n counting bound n (width / delta2 + 1).
  std::vector<double> bound;
  bool bound_holds = true;
  double delta2 = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

/// Orbit states at integer times 0..kmax, row-major by vector.
struct OrbitTable {
  std::size_t K = 0;
  std::vector<State4> z;
  std::size_t dropped = 0;
  std::size_t size() const { return K ? z.size() / K : 0; }
  const State4& at(std::size_t v, std::size_t k) const { return z[v * K + k]; }
};

inline OrbitTable sample_orbits(const MetricChart& chart, const std::vector<UnitTangentVector>& vs,
                                int kmax, const StepPolicy& step) {
  OrbitTable tab;
  tab.K = static_cast<std::size_t>(kmax) + 1;
  std::vector<double> targets;
  for (int k = 1; k <= kmax; ++k) targets.push_back(k);
  const double pad = step.pad >= 0.0 ? step.pad : std::max(1.0, static_cast<double>(kmax));
  tab.z.reserve(vs.size() * tab.K);
  for (const auto& v : vs) {
    TrajectoryStats st;
    const auto pass = run_pass(chart, v.state(), targets, step, pad, st);
    if (pass.truncated) {
      ++tab.dropped;
      continue;
    }
    tab.z.push_back(v.state());
    tab.z.insert(tab.z.end(), pass.z.begin(), pass.z.end());
  }
  return tab;
}

/// Greedy (n, eps)-separated subsets for each n in `ns` (ascending), each
/// seeded with the set found for the previous n so counts are nondecreasing.
/// Candidates are bucketed by their position at time n - 1.
inline std::vector<std::size_t> greedy_counts(const MetricChart& chart, const OrbitTable& tab,
                                              double eps, const std::vector<int>& ns) {
  std::vector<std::size_t> counts;
  const std::size_t m = tab.size();
  std::vector<char> chosen(m, 0);
  std::vector<std::uint32_t> sel;
  for (int n : ns) {
    const std::size_t last = static_cast<std::size_t>(n - 1);
    double xl = std::numeric_limits<double>::infinity(), xh = -xl, yl = xl, yh = -xl;
    for (std::size_t v = 0; v < m; ++v) {
      const auto& z = tab.at(v, last);
      xl = std::min(xl, z[0]);
      xh = std::max(xh, z[0]);
      yl = std::min(yl, z[1]);
      yh = std::max(yh, z[1]);
    }
    // Smallest metric scales over the box bound the chart size of an eps-ball.
    double gx = std::numeric_limits<double>::infinity(), gy = gx;
    constexpr int S = 16;
    for (int i = 0; i <= S; ++i)
      for (int j = 0; j <= S; ++j) {
        const auto g = chart.metric({xl + (xh - xl) * i / S, yl + (yh - yl) * j / S});
        gx = std::min(gx, g.gxx);
        gy = std::min(gy, g.gyy);
      }
    const double cx = std::max(eps / std::sqrt(gx) / 0.9, 1e-12);
    const double cy = std::max(eps / std::sqrt(gy) / 0.9, 1e-12);
    auto key = [&](const State4& z) {
      const auto ix = static_cast<std::int64_t>(std::floor((z[0] - xl) / cx));
      const auto iy = static_cast<std::int64_t>(std::floor((z[1] - yl) / cy));
      return std::pair<std::int64_t, std::int64_t>{ix, iy};
    };
    auto pack = [](std::int64_t ix, std::int64_t iy) { return (ix << 32) ^ (iy & 0xffffffffLL); };
    std::unordered_map<std::int64_t, std::vector<std::uint32_t>> cells;
    for (auto v : sel) {
      const auto [ix, iy] = key(tab.at(v, last));
      cells[pack(ix, iy)].push_back(v);
    }
    auto close_for_all_k = [&](std::size_t a, std::size_t b) {
      for (std::size_t k = last + 1; k-- > 0;)
        if (sasaki_local(chart, tab.at(a, k), tab.at(b, k)) > eps) return false;
      return true;
    };
    for (std::size_t v = 0; v < m; ++v) {
      if (chosen[v]) continue;
      const auto [ix, iy] = key(tab.at(v, last));
      bool covered = false;
      for (std::int64_t dx = -1; dx <= 1 && !covered; ++dx)
        for (std::int64_t dy = -1; dy <= 1 && !covered; ++dy) {
          const auto it = cells.find(pack(ix + dx, iy + dy));
          if (it == cells.end()) continue;
          for (auto s : it->second)
            if (close_for_all_k(v, s)) {
              covered = true;
              break;
            }
        }
      if (covered) continue;
      chosen[v] = 1;
      sel.push_back(static_cast<std::uint32_t>(v));
      cells[pack(ix, iy)].push_back(static_cast<std::uint32_t>(v));
    }
    counts.push_back(sel.size());
  }
  return counts;
}

inline void check_n_grid(const std::vector<int>& ns, double eps) {
  if (ns.size() < 2) throw DomainError("entropy needs at least two horizons");
  for (std::size_t i = 0; i < ns.size(); ++i)
    if (ns[i] < 1 || (i > 0 && ns[i] <= ns[i - 1])) throw DomainError("horizons must be increasing and >= 1");
  if (!(eps > 0.0)) throw DomainError("epsilon must be positive");
}

inline double log_slope(const std::vector<int>& ns, const std::vector<std::size_t>& counts) {
  std::vector<double> x, y;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    x.push_back(ns[i]);
    y.push_back(std::log(static_cast<double>(std::max<std::size_t>(counts[i], 1))));
  }
  return least_squares_slope(x, y);
}

}  // namespace detail

/// Greedy (n, eps)-separated sets of the window under the time-one map with
/// the Sasaki distance (local surrogate) at times 0..n-1; the slope of
/// log count against n estimates the entropy.
inline SeparatedSetResult separated_set_entropy(const MetricChart& chart, const EntropyWindow& window,
                                                double epsilon, const std::vector<int>& n_grid,
                                                const EntropyOptions& opts = {}) {
  detail::check_n_grid(n_grid, epsilon);
  SeparatedSetResult r;
  r.window = window.description;
  r.epsilon = epsilon;
  r.n = n_grid;
  const auto tab = detail::sample_orbits(chart, window.vectors, n_grid.back() - 1, opts.step);
  r.dropped = tab.dropped;
  if (tab.size() == 0) throw PreconditionError("every window orbit left the padded window");
  r.counts = detail::greedy_counts(chart, tab, epsilon, n_grid);
  r.slope = detail::log_slope(n_grid, r.counts);
  return r;
}

/// Separated-set entropy restricted to the strip vectors along I(theta),
/// with the per-n counting bound n (width / delta2 + 1). delta2 is epsilon
/// over the Lipschitz constant of s -> strip vector in the Sasaki distance.
inline SeparatedSetResult strip_entropy(const MetricChart& chart, const StripRecord& strip, double epsilon,
                                        const std::vector<int>& n_grid, int samples = 401,
                                        const EntropyOptions& opts = {}) {
  detail::check_n_grid(n_grid, epsilon);
  SeparatedSetResult r;
  char buf[160];
  std::snprintf(buf, sizeof buf, "strip(width=%.6g, s=[%.6g,%.6g], %d samples)", strip.width, strip.s_lo,
                strip.s_hi, samples);
  r.window = buf;
  r.epsilon = epsilon;
  r.n = n_grid;
  if (strip.trivial || strip.width <= strip.strip_tol) {
    r.counts.assign(n_grid.size(), 1);
    r.slope = 0.0;
    for (int n : n_grid) r.bound.push_back(n);
    return r;
  }
  if (samples < 2) throw DomainError("strip entropy needs at least two samples");
  std::vector<UnitTangentVector> vs;
  std::vector<double> ss;
  for (int i = 0; i < samples; ++i) {
    const double s = strip.s_lo + (strip.s_hi - strip.s_lo) * i / (samples - 1);
    ss.push_back(s);
    vs.push_back(strip_vector(chart, strip, s));
  }
  const auto tab = detail::sample_orbits(chart, vs, n_grid.back() - 1, opts.step);
  r.dropped = tab.dropped;
  if (tab.dropped) throw PreconditionError("strip orbits must stay in the padded window");
  double lip = 0.0;
  for (std::size_t i = 0; i + 1 < vs.size(); ++i)
    lip = std::max(lip, sasaki_local(chart, tab.at(i, 0), tab.at(i + 1, 0)) / (ss[i + 1] - ss[i]));
  r.delta2 = lip > 0.0 ? epsilon / lip : std::numeric_limits<double>::infinity();
  r.counts = detail::greedy_counts(chart, tab, epsilon, n_grid);
  r.slope = detail::log_slope(n_grid, r.counts);
  for (std::size_t i = 0; i < n_grid.size(); ++i) {
    r.bound.push_back(n_grid[i] * (strip.width / r.delta2 + 1.0));
    if (static_cast<double>(r.counts[i]) > r.bound.back()) r.bound_holds = false;
  }
  return r;
}

enum class ExpansivityKind { separates, time_shift, strip_mates };

inline const char* to_string(ExpansivityKind k) {
  switch (k) {
    case ExpansivityKind::separates: return "separates";
    case ExpansivityKind::time_shift: return "time_shift";
    case ExpansivityKind::strip_mates: return "strip_mates";
  }
  return "?";
}

/// Piecewise-linear reparametrizations rho with rho(0) = 0, uniform knots on
/// [-T, T] and slopes from a fixed set.
struct ReparamGrid {
  int knots = 9;
  std::vector<double> slopes{0.5, 0.75, 1.0, 1.5, 2.0};
  /// Distance checks per knot interval (interval ends included).
  int samples_per_interval = 8;
};

struct ExpansivityOptions {
  ReparamGrid grid;
  /// time_shift needs d_S(phi_s theta, eta) <= shift_tol for some |s| <= shift_window.
  double shift_window = 0.1;
  double shift_tol = 1e-6;
  StepPolicy step;
};

struct ExpansivityVerdict {
  UnitTangentVector theta, eta;
  double delta = 0.0;
  double T = 0.0;
  ExpansivityKind verdict = ExpansivityKind::separates;
  /// Time at which every admissible rho had failed; NaN otherwise.
  double witness_t = std::numeric_limits<double>::quiet_NaN();
  /// rho at the knots for the admissible reparametrization found.
  std::vector<double> rho;
  /// Best time shift s and d_S(phi_s theta, eta).
  double shift = 0.0;
  double shift_distance = std::numeric_limits<double>::infinity();
  ReparamGrid grid;
};

namespace detail {

inline double orbit_distance(const MetricChart& chart, const GeodesicTrajectory& a, double ta,
                             const GeodesicTrajectory& b, double tb) {
  if (!a.covers(ta, ta) || !b.covers(tb, tb)) return std::numeric_limits<double>::infinity();
  return sasaki_local(chart, a.state_at(ta), b.state_at(tb));
}

struct SideSearch {
  bool feasible = false;
  double witness = 0.0;  // latest |t| reached by any partial rho
  std::vector<double> rho;  // knot values from 0 outward
};

/// Dynamic programming over knot values of rho on one side of t = 0.
inline SideSearch search_side(const MetricChart& chart, const GeodesicTrajectory& g1,
                              const GeodesicTrajectory& g2, double delta, double h, int intervals,
                              double sign, const ReparamGrid& grid) {
  struct Node {
    double rho;
    int parent;
  };
  std::vector<std::vector<Node>> layers{{{0.0, -1}}};
  SideSearch out;
  const int M = std::max(1, grid.samples_per_interval);
  for (int j = 0; j < intervals; ++j) {
    std::vector<Node> next;
    const double t0 = sign * j * h;
    for (int p = 0; p < static_cast<int>(layers[j].size()); ++p) {
      const double r0 = layers[j][static_cast<std::size_t>(p)].rho;
      for (double m : grid.slopes) {
        const double r1 = r0 + sign * m * h;
        if (std::any_of(next.begin(), next.end(), [&](const Node& nd) { return std::abs(nd.rho - r1) < 1e-12; }))
          continue;
        bool ok = true;
        for (int i = 1; i <= M; ++i) {
          const double w = static_cast<double>(i) / M;
          const double t = t0 + sign * w * h;
          if (orbit_distance(chart, g1, t, g2, r0 + w * (r1 - r0)) > delta) {
            out.witness = std::max(out.witness, std::abs(t0) + (i - 1) * h / M);
            ok = false;
            break;
          }
        }
        if (ok) next.push_back({r1, p});
      }
    }
    if (next.empty()) return out;
    out.witness = std::max(out.witness, (j + 1) * h);
    layers.push_back(std::move(next));
  }
  out.feasible = true;
  int idx = 0;
  for (int j = intervals; j >= 0; --j) {
    out.rho.push_back(layers[static_cast<std::size_t>(j)][static_cast<std::size_t>(idx)].rho);
    idx = layers[static_cast<std::size_t>(j)][static_cast<std::size_t>(idx)].parent;
  }
  std::reverse(out.rho.begin(), out.rho.end());
  return out;
}

}  // namespace detail

/// Looks for an increasing piecewise-linear rho (rho(0) = 0) with
/// d_S(phi_t theta, phi_rho(t) eta) <= delta on [-T, T]. None: separates,
/// with the time every candidate had failed by. Otherwise time_shift if eta
/// is a small flow-translate of theta, else strip_mates.
inline ExpansivityVerdict expansivity_probe(const MetricChart& chart, const UnitTangentVector& theta,
                                            const UnitTangentVector& eta, double delta, double T,
                                            const ExpansivityOptions& opts = {}) {
  if (!(delta > 0.0) || !(T > 0.0)) throw DomainError("expansivity probe needs delta > 0 and T > 0");
  if (opts.grid.knots < 3 || opts.grid.knots % 2 == 0)
    throw DomainError("reparametrization grid needs an odd knot count >= 3");
  if (opts.grid.slopes.empty()) throw DomainError("reparametrization grid needs slopes");
  const double smax = *std::max_element(opts.grid.slopes.begin(), opts.grid.slopes.end());
  const auto g1 = integrate_geodesic(chart, theta, {-T, T}, opts.step);
  if (g1.truncated()) throw IntegrationError("orbit of theta leaves the padded window");
  const double Te = std::max(smax, 1.0) * T;
  const auto g2 = integrate_geodesic(chart, eta, {-Te, Te}, opts.step);
  if (!g2.covers(-T, T)) throw IntegrationError("orbit of eta leaves the padded window");

  ExpansivityVerdict v{.theta = theta, .eta = eta, .delta = delta, .T = T, .grid = opts.grid};
  const int intervals = (opts.grid.knots - 1) / 2;
  const double h = T / intervals;
  if (detail::orbit_distance(chart, g1, 0.0, g2, 0.0) > delta) {
    v.verdict = ExpansivityKind::separates;
    v.witness_t = 0.0;
    return v;
  }
  const auto fw = detail::search_side(chart, g1, g2, delta, h, intervals, 1.0, opts.grid);
  const auto bw = detail::search_side(chart, g1, g2, delta, h, intervals, -1.0, opts.grid);
  if (!fw.feasible || !bw.feasible) {
    v.verdict = ExpansivityKind::separates;
    if (!fw.feasible && (bw.feasible || fw.witness <= bw.witness)) v.witness_t = fw.witness;
    else v.witness_t = -bw.witness;
    return v;
  }
  for (std::size_t i = bw.rho.size(); i-- > 1;) v.rho.push_back(bw.rho[i]);
  v.rho.insert(v.rho.end(), fw.rho.begin(), fw.rho.end());

  // Nearest flow-translate of theta to eta: coarse scan, then golden section.
  auto dist = [&](double s) { return sasaki_local(chart, g1.state_at(s), eta.state()); };
  const double w = std::min(opts.shift_window, T);
  constexpr int scan = 40;
  double best_s = 0.0, best_d = dist(0.0);
  for (int i = 0; i <= scan; ++i) {
    const double s = -w + 2.0 * w * i / scan;
    const double d = dist(s);
    if (d < best_d) {
      best_d = d;
      best_s = s;
    }
  }
  double a = std::max(-w, best_s - 2.0 * w / scan), b = std::min(w, best_s + 2.0 * w / scan);
  const double r = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = b - r * (b - a), x2 = a + r * (b - a), f1 = dist(x1), f2 = dist(x2);
  for (int it = 0; it < 80 && b - a > 1e-13; ++it) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - r * (b - a);
      f1 = dist(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + r * (b - a);
      f2 = dist(x2);
    }
  }
  for (auto [s, d] : {std::pair{x1, f1}, std::pair{x2, f2}})
    if (d < best_d) {
      best_d = d;
      best_s = s;
    }
  v.shift = best_s;
  v.shift_distance = best_d;
  v.verdict = best_d <= opts.shift_tol ? ExpansivityKind::time_shift : ExpansivityKind::strip_mates;
  return v;
}

struct BracketOptions {
  /// Precondition: d_S(theta, eta) below this.
  double radius = 1.0;
  /// eta within this Sasaki distance of the reversed theta is rejected.
  double antipodal_radius = 0.1;
  /// Largest halflength of the stable trace searched for the intersection.
  double halflength = 2.0;
  double step = 0.05;
  TraceOptions trace;
};

struct BracketResult {
  UnitTangentVector vector;
  /// Flow offset c with the result on the unstable leaf of phi_c(eta).
  double offset = 0.0;
  /// Arclength of the result along the stable horocycle of theta.
  double s = 0.0;
  double residual_plus = 0.0;
  double residual_minus = 0.0;
  /// Angle between the two leaf normals at the result.
  double residual_angle = 0.0;
  double residual() const { return std::max({residual_plus, residual_minus, residual_angle}); }
};

/// [theta, eta]: the vector on the stable horocycle of theta whose backward
/// orbit is asymptotic to that of eta. Found by a 1D root solve along the
/// traced stable leaf for the angle between its normal and grad b^-_eta.
inline BracketResult bracket(const MetricChart& chart, const UnitTangentVector& theta,
                             const UnitTangentVector& eta, double tol = 1e-3, const BracketOptions& opts = {}) {
  if (sasaki_distance(chart, eta, theta.reversed(), SasakiMode::local) <= std::max(tol, opts.antipodal_radius))
    throw PreconditionError("bracket of (nearly) antipodal vectors is undefined");
  if (sasaki_distance(chart, theta, eta, SasakiMode::local) > opts.radius)
    throw PreconditionError("vectors are farther apart than the bracket radius");

  const BusemannField bp(chart, theta, BusemannSign::plus, opts.trace.busemann);
  const BusemannField bm(chart, eta, BusemannSign::minus, opts.trace.busemann);
  auto mismatch = [&](ChartPoint q, const ChartVector& n_plus) {
    const auto e = bm.evaluate(q);
    return wrap_angle(frame_angle(chart, q, e.gradient) - frame_angle(chart, q, n_plus));
  };
  // Corrects a point onto {b^+ = 0}; returns the point and the leaf normal.
  auto onto_leaf = [&](ChartPoint q, ChartVector hint) {
    for (int it = 0; it < opts.trace.max_corrector; ++it) {
      const auto e = bp.evaluate(q, &hint);
      hint = e.gradient;
      if (std::abs(e.value) <= opts.trace.trace_tol) return std::pair{q, -1.0 * e.gradient};
      q = q - e.value * e.gradient;
    }
    throw ConvergenceError("bracket corrector did not reach the stable horocycle", 0.0);
  };

  BracketResult res;
  double half = std::min(0.25, opts.halflength);
  std::optional<std::pair<std::size_t, std::size_t>> pair;
  HorocycleTrace tr;
  std::vector<double> f;
  for (;;) {
    tr = trace_horocycle(chart, theta, BusemannSign::plus, half, opts.step, opts.trace);
    f.clear();
    for (std::size_t i = 0; i < tr.points.size(); ++i) f.push_back(mismatch(tr.points[i], tr.normals[i]));
    const std::size_t b = tr.base_index;
    if (f[b] == 0.0) pair = {b, b};
    for (std::size_t k = 0; !pair && (b + k + 1 < f.size() || k < b); ++k) {
      auto sign_change = [&](std::size_t i, std::size_t j) {
        return f[i] * f[j] <= 0.0 && std::abs(f[i] - f[j]) < 0.5 * kPi;
      };
      if (b + k + 1 < f.size() && sign_change(b + k, b + k + 1)) pair = {b + k, b + k + 1};
      else if (k < b && sign_change(b - k - 1, b - k)) pair = {b - k - 1, b - k};
    }
    if (pair || half >= opts.halflength) break;
    half = std::min(2.0 * half, opts.halflength);
  }
  if (!pair) throw NoIntersectionError("stable leaf of theta and weak unstable leaf of eta do not meet in range");

  auto [i, j] = *pair;
  ChartPoint q = tr.points[i];
  ChartVector n = tr.normals[i];
  double s = tr.s[i];
  if (i != j) {
    // Illinois false position on the trace parameter.
    double sa = tr.s[i], sb = tr.s[j], fa = f[i], fb = f[j];
    const ChartPoint pa = tr.points[i], pb = tr.points[j];
    for (int it = 0; it < 60; ++it) {
      s = (sa * fb - sb * fa) / (fb - fa);
      const double w = (s - tr.s[i]) / (tr.s[j] - tr.s[i]);
      std::tie(q, n) = onto_leaf(pa + w * (pb - pa), tr.normals[i] + w * (tr.normals[j] - tr.normals[i]));
      const double fs = mismatch(q, n);
      if (std::abs(fs) <= 1e-10 || std::abs(sb - sa) <= 1e-12) break;
      if (fs * fb < 0.0) {
        sa = sb;
        fa = fb;
      } else {
        fa *= 0.5;
      }
      sb = s;
      fb = fs;
    }
  }
  res.vector = UnitTangentVector(chart, q, n);
  res.s = s;
  res.offset = bm.evaluate(q).value;
  res.residual_plus = std::abs(bp.evaluate(q).value);
  res.residual_angle = std::abs(mismatch(q, n));
  if (res.offset == 0.0) {
    res.residual_minus = std::abs(bm.evaluate(q).value);
  } else {
    const auto shifted = flow(chart, eta, res.offset);
    res.residual_minus = std::abs(BusemannField(chart, shifted, BusemannSign::minus, opts.trace.busemann).value(q));
  }
  return res;
}

}  // namespace geoflow
