#pragma once

// Surface metric families on a global planar chart.
//
// Every shipped family is diagonal in chart coordinates,
//   ds^2 = gxx(x,y) dx^2 + gyy(x,y) dy^2,
// and has nonpositive Gaussian curvature, so the no-conjugate-points
// hypothesis reduces to a pointwise sign check.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <variant>

#include "geoflow/errors.hpp"

namespace geoflow {

struct ChartVector {
  double x = 0.0;
  double y = 0.0;
};

struct ChartPoint {
  double x = 0.0;
  double y = 0.0;
};

inline ChartVector operator+(ChartVector a, ChartVector b) { return {a.x + b.x, a.y + b.y}; }
inline ChartVector operator-(ChartVector a, ChartVector b) { return {a.x - b.x, a.y - b.y}; }
inline ChartVector operator-(ChartVector a) { return {-a.x, -a.y}; }
inline ChartVector operator*(double s, ChartVector a) { return {s * a.x, s * a.y}; }
inline ChartVector operator*(ChartVector a, double s) { return {s * a.x, s * a.y}; }
inline ChartPoint operator+(ChartPoint p, ChartVector v) { return {p.x + v.x, p.y + v.y}; }
inline ChartPoint operator-(ChartPoint p, ChartVector v) { return {p.x - v.x, p.y - v.y}; }
inline ChartVector operator-(ChartPoint a, ChartPoint b) { return {a.x - b.x, a.y - b.y}; }
inline ChartPoint midpoint(ChartPoint a, ChartPoint b) {
  return {0.5 * (a.x + b.x), 0.5 * (a.y + b.y)};
}
inline double euclidean_norm(ChartVector v) { return std::hypot(v.x, v.y); }

/// Axis-aligned chart rectangle.
struct Window {
  double xmin = -1.0;
  double xmax = 1.0;
  double ymin = -1.0;
  double ymax = 1.0;

  bool contains(ChartPoint p, double pad = 0.0) const {
    return p.x >= xmin - pad && p.x <= xmax + pad && p.y >= ymin - pad && p.y <= ymax + pad;
  }
  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
};

/// Chart point plus chart components of a direction; no normalization implied.
struct TangentVector {
  ChartPoint base;
  ChartVector dir;
};

/// Levi-Civita coefficients; `y_xx` is Gamma^y_{xx} and so on.
struct Christoffel {
  double x_xx = 0.0, x_xy = 0.0, x_yy = 0.0;
  double y_xx = 0.0, y_xy = 0.0, y_yy = 0.0;
};

/// Christoffel symbols with their first chart derivatives.
struct ChristoffelJet {
  Christoffel value;
  Christoffel d_dx;
  Christoffel d_dy;
};

/// Diagonal metric coefficients at a point.
struct DiagonalMetric {
  double gxx = 1.0;
  double gyy = 1.0;
};

enum class ChartKind { constant_curvature, conformal, warped };

/// Profiles g(y) for warped metrics dy^2 + g(y)^2 dx^2.
enum class WarpedProfile {
  cosh,       // g = cosh(s y), K = -s^2
  exp_decay,  // g = exp(-s y), K = -s^2 (horocyclic coordinates)
  flat_band,  // g = 1 on |y| <= w, cosh(s(|y| - w)) outside
  flat,       // g = 1
};

/// Potentials phi for conformal metrics exp(2 phi)(dx^2 + dy^2).
enum class ConformalPotential {
  zero,       // phi = 0
  constant,   // phi = c
  quadratic,  // phi = a (x^2 + y^2) / 2, K = -2a exp(-2 phi)
};

struct ProfileJet {
  double g = 1.0, dg = 0.0, ddg = 0.0;
};

struct PotentialJet {
  double phi = 0.0, px = 0.0, py = 0.0, pxx = 0.0, pxy = 0.0, pyy = 0.0;
};

struct WarpedModel {
  WarpedProfile profile = WarpedProfile::flat;
  double scale = 1.0;
  double band = 0.0;

  ProfileJet jet(double y) const {
    switch (profile) {
      case WarpedProfile::cosh: {
        const double c = std::cosh(scale * y), s = std::sinh(scale * y);
        return {c, scale * s, scale * scale * c};
      }
      case WarpedProfile::exp_decay: {
        const double e = std::exp(-scale * y);
        return {e, -scale * e, scale * scale * e};
      }
      case WarpedProfile::flat_band: {
        const double a = std::abs(y);
        if (a <= band) return {1.0, 0.0, 0.0};
        const double sg = y > 0.0 ? 1.0 : -1.0;
        const double u = scale * (a - band);
        return {std::cosh(u), sg * scale * std::sinh(u), scale * scale * std::cosh(u)};
      }
      case WarpedProfile::flat:
        return {1.0, 0.0, 0.0};
    }
    return {};
  }
};

struct ConformalModel {
  ConformalPotential potential = ConformalPotential::zero;
  double param = 0.0;

  PotentialJet jet(ChartPoint p) const {
    switch (potential) {
      case ConformalPotential::zero:
        return {};
      case ConformalPotential::constant:
        return {param, 0.0, 0.0, 0.0, 0.0, 0.0};
      case ConformalPotential::quadratic:
        return {0.5 * param * (p.x * p.x + p.y * p.y), param * p.x, param * p.y, param, 0.0,
                param};
    }
    return {};
  }
};

inline const char* to_string(ChartKind k) {
  switch (k) {
    case ChartKind::constant_curvature: return "constant_curvature";
    case ChartKind::conformal: return "conformal";
    case ChartKind::warped: return "warped";
  }
  return "?";
}

inline const char* to_string(WarpedProfile p) {
  switch (p) {
    case WarpedProfile::cosh: return "cosh";
    case WarpedProfile::exp_decay: return "exp";
    case WarpedProfile::flat_band: return "flat_band";
    case WarpedProfile::flat: return "flat";
  }
  return "?";
}

inline const char* to_string(ConformalPotential p) {
  switch (p) {
    case ConformalPotential::zero: return "zero";
    case ConformalPotential::constant: return "constant";
    case ConformalPotential::quadratic: return "quadratic";
  }
  return "?";
}

/// A surface metric on a simply connected planar chart together with a
/// curvature bound kappa (K >= -kappa^2) and the working window.
///
/// The evaluators (`curvature`, `christoffel`, `metric`) are defined on the
/// whole chart; the window only restricts the checked free functions and the
/// statistics gathered by experiments.
class MetricChart {
 public:
  static MetricChart constant_curvature(double K0, Window window) {
    if (!(K0 <= 0.0)) throw ValidationError("constant curvature K0 must be <= 0");
    MetricChart c;
    c.kind_ = ChartKind::constant_curvature;
    c.K0_ = K0;
    c.model_ = K0 < 0.0 ? WarpedModel{WarpedProfile::cosh, std::sqrt(-K0), 0.0}
                        : WarpedModel{WarpedProfile::flat, 1.0, 0.0};
    c.kappa_ = std::sqrt(-K0);
    c.window_ = window;
    c.validate();
    return c;
  }

  static MetricChart warped(WarpedProfile profile, double scale, double band, Window window,
                            double kappa = -1.0) {
    if (!(scale > 0.0)) throw ValidationError("warped profile scale must be positive");
    if (!(band >= 0.0)) throw ValidationError("flat band width must be nonnegative");
    MetricChart c;
    c.kind_ = ChartKind::warped;
    c.model_ = WarpedModel{profile, scale, band};
    c.kappa_ = kappa >= 0.0 ? kappa : (profile == WarpedProfile::flat ? 0.0 : scale);
    c.window_ = window;
    c.validate();
    return c;
  }

  static MetricChart conformal(ConformalPotential potential, double param, Window window,
                               double kappa = -1.0) {
    if (potential == ConformalPotential::quadratic && !(param >= 0.0))
      throw ValidationError("quadratic potential needs a >= 0 (subharmonic)");
    MetricChart c;
    c.kind_ = ChartKind::conformal;
    c.model_ = ConformalModel{potential, param};
    double k = 0.0;
    if (potential == ConformalPotential::quadratic) k = std::sqrt(2.0 * param);
    c.kappa_ = kappa >= 0.0 ? kappa : k;
    c.window_ = window;
    c.validate();
    return c;
  }

  ChartKind kind() const { return kind_; }
  double kappa() const { return kappa_; }
  const Window& window() const { return window_; }

  bool is_warped() const { return std::holds_alternative<WarpedModel>(model_); }
  const WarpedModel* warped_model() const { return std::get_if<WarpedModel>(&model_); }
  const ConformalModel* conformal_model() const { return std::get_if<ConformalModel>(&model_); }

  DiagonalMetric metric(ChartPoint p) const {
    if (auto w = warped_model()) {
      const double g = w->jet(p.y).g;
      return {g * g, 1.0};
    }
    const double e = std::exp(2.0 * std::get<ConformalModel>(model_).jet(p).phi);
    return {e, e};
  }

  double curvature(ChartPoint p) const {
    if (auto w = warped_model()) {
      const auto j = w->jet(p.y);
      return -j.ddg / j.g;
    }
    const auto j = std::get<ConformalModel>(model_).jet(p);
    return -std::exp(-2.0 * j.phi) * (j.pxx + j.pyy);
  }

  Christoffel christoffel(ChartPoint p) const { return christoffel_jet(p).value; }

  ChristoffelJet christoffel_jet(ChartPoint p) const {
    ChristoffelJet out;
    if (auto w = warped_model()) {
      // dy^2 + g^2 dx^2: Gamma^x_xy = g'/g, Gamma^y_xx = -g g'.
      const auto j = w->jet(p.y);
      out.value.x_xy = j.dg / j.g;
      out.value.y_xx = -j.g * j.dg;
      out.d_dy.x_xy = (j.ddg * j.g - j.dg * j.dg) / (j.g * j.g);
      out.d_dy.y_xx = -(j.dg * j.dg + j.g * j.ddg);
      return out;
    }
    const auto j = std::get<ConformalModel>(model_).jet(p);
    out.value = {j.px, j.py, -j.px, -j.py, j.px, j.py};
    out.d_dx = {j.pxx, j.pxy, -j.pxx, -j.pxy, j.pxx, j.pxy};
    out.d_dy = {j.pxy, j.pyy, -j.pxy, -j.pyy, j.pxy, j.pyy};
    return out;
  }

  /// Canonical text form; equal descriptions mean equal metrics.
  std::string describe() const {
    char buf[256];
    if (kind_ == ChartKind::constant_curvature) {
      std::snprintf(buf, sizeof buf, "constant_curvature(K0=%.17g)", K0_);
    } else if (auto w = warped_model()) {
      std::snprintf(buf, sizeof buf, "warped(profile=%s,scale=%.17g,band=%.17g)",
                    to_string(w->profile), w->scale, w->band);
    } else {
      const auto& c = std::get<ConformalModel>(model_);
      std::snprintf(buf, sizeof buf, "conformal(phi=%s,param=%.17g)", to_string(c.potential),
                    c.param);
    }
    char tail[192];
    std::snprintf(tail, sizeof tail, ";kappa=%.17g;window=[%.17g,%.17g,%.17g,%.17g]", kappa_,
                  window_.xmin, window_.xmax, window_.ymin, window_.ymax);
    return std::string(buf) + tail;
  }

  /// Checks the chart invariants: -kappa^2 <= K <= 0 on a sample grid of the window.
  void validate() const {
    if (!(window_.xmax > window_.xmin) || !(window_.ymax > window_.ymin))
      throw ValidationError("chart window must have positive extent");
    if (!(kappa_ >= 0.0)) throw ValidationError("kappa must be nonnegative");
    constexpr int n = 41;
    const double slack = 1e-12 * (1.0 + kappa_ * kappa_);
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < n; ++k) {
        const ChartPoint p{window_.xmin + window_.width() * i / (n - 1),
                           window_.ymin + window_.height() * k / (n - 1)};
        const double K = curvature(p);
        if (!(K <= slack) || !(K >= -kappa_ * kappa_ - slack)) {
          char buf[160];
          std::snprintf(buf, sizeof buf,
                        "curvature %.6g at (%.4g, %.4g) violates -kappa^2 <= K <= 0 (kappa=%.6g)",
                        K, p.x, p.y, kappa_);
          throw ValidationError(buf);
        }
      }
    }
  }

 private:
  MetricChart() = default;

  ChartKind kind_ = ChartKind::warped;
  double K0_ = 0.0;
  std::variant<WarpedModel, ConformalModel> model_;
  double kappa_ = 0.0;
  Window window_;
};

// ---------------------------------------------------------------------------
// Checked point-wise operations.

inline void require_in_window(const MetricChart& chart, ChartPoint p) {
  if (!chart.window().contains(p)) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "point (%.6g, %.6g) outside chart window", p.x, p.y);
    throw DomainError(buf);
  }
}

/// Gaussian curvature at p (p must lie in the window).
inline double curvature_at(const MetricChart& chart, ChartPoint p) {
  require_in_window(chart, p);
  return chart.curvature(p);
}

inline Christoffel christoffel(const MetricChart& chart, ChartPoint p) {
  require_in_window(chart, p);
  return chart.christoffel(p);
}

inline double metric_norm(const MetricChart& chart, ChartPoint p, ChartVector v) {
  const auto m = chart.metric(p);
  return std::sqrt(m.gxx * v.x * v.x + m.gyy * v.y * v.y);
}

inline double metric_dot(const MetricChart& chart, ChartPoint p, ChartVector a, ChartVector b) {
  const auto m = chart.metric(p);
  return m.gxx * a.x * b.x + m.gyy * a.y * b.y;
}

/// Angle of v in the g-orthonormal frame (dx/sqrt(gxx), dy/sqrt(gyy)) at p.
inline double frame_angle(const MetricChart& chart, ChartPoint p, ChartVector v) {
  const auto m = chart.metric(p);
  return std::atan2(std::sqrt(m.gyy) * v.y, std::sqrt(m.gxx) * v.x);
}

/// Unit chart vector with the given frame angle at p.
inline ChartVector from_frame_angle(const MetricChart& chart, ChartPoint p, double angle) {
  const auto m = chart.metric(p);
  return {std::cos(angle) / std::sqrt(m.gxx), std::sin(angle) / std::sqrt(m.gyy)};
}

/// Rotates v by +90 degrees in the g-orthonormal frame at p (preserves the g-norm).
inline ChartVector rotate_quarter(const MetricChart& chart, ChartPoint p, ChartVector v) {
  const auto m = chart.metric(p);
  const double ex = std::sqrt(m.gxx), ey = std::sqrt(m.gyy);
  const double f1 = ex * v.x, f2 = ey * v.y;
  return {-f2 / ex, f1 / ey};
}

inline double wrap_angle(double a) {
  constexpr double pi = 3.14159265358979323846;
  a = std::fmod(a + pi, 2.0 * pi);
  if (a < 0.0) a += 2.0 * pi;
  return a - pi;
}

}  // namespace geoflow
