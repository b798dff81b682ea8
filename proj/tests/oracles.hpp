#pragma once

// Closed-form and brute-force reference values used by the tests. Nothing
// here calls into the library's solvers.

#include <cmath>
#include <functional>
#include <vector>

#include "geoflow/metric.hpp"

namespace oracle {

/// Distance for dy^2 + cosh^2(k y) dx^2 (curvature -k^2), via the hyperboloid model.
inline double cosh_chart_distance(double k, double x1, double y1, double x2, double y2) {
  const double a = k * x1, b = k * y1, c = k * x2, d = k * y2;
  const double ch = std::cosh(b) * std::cosh(d) * std::cosh(a - c) - std::sinh(b) * std::sinh(d);
  return std::acosh(std::max(1.0, ch)) / k;
}

/// Distance for dy^2 + e^{-2y} dx^2: the upper half plane with Y = e^y.
inline double horocyclic_distance(double x1, double y1, double x2, double y2) {
  const double Y1 = std::exp(y1), Y2 = std::exp(y2);
  const double ch = 1.0 + ((x1 - x2) * (x1 - x2) + (Y1 - Y2) * (Y1 - Y2)) / (2.0 * Y1 * Y2);
  return std::acosh(ch);
}

/// Christoffel symbols of a diagonal metric by central differences of its components.
inline geoflow::Christoffel fd_christoffel(const geoflow::MetricChart& chart, geoflow::ChartPoint p,
                                           double h = 1e-5) {
  auto gxx = [&](double x, double y) { return chart.metric({x, y}).gxx; };
  auto gyy = [&](double x, double y) { return chart.metric({x, y}).gyy; };
  const double gxx_x = (gxx(p.x + h, p.y) - gxx(p.x - h, p.y)) / (2 * h);
  const double gxx_y = (gxx(p.x, p.y + h) - gxx(p.x, p.y - h)) / (2 * h);
  const double gyy_x = (gyy(p.x + h, p.y) - gyy(p.x - h, p.y)) / (2 * h);
  const double gyy_y = (gyy(p.x, p.y + h) - gyy(p.x, p.y - h)) / (2 * h);
  const double a = gxx(p.x, p.y), b = gyy(p.x, p.y);
  geoflow::Christoffel G;
  G.x_xx = gxx_x / (2 * a);
  G.x_xy = gxx_y / (2 * a);
  G.x_yy = -gyy_x / (2 * a);
  G.y_xx = -gxx_y / (2 * b);
  G.y_xy = gyy_x / (2 * b);
  G.y_yy = gyy_y / (2 * b);
  return G;
}

/// Gaussian curvature of a diagonal metric by the Brioschi formula with finite differences.
inline double fd_curvature(const geoflow::MetricChart& chart, geoflow::ChartPoint p, double h = 1e-4) {
  auto E = [&](double x, double y) { return chart.metric({x, y}).gxx; };
  auto G = [&](double x, double y) { return chart.metric({x, y}).gyy; };
  // K = -1/(2 sqrt(EG)) [ d/dx (G_x / sqrt(EG)) + d/dy (E_y / sqrt(EG)) ]
  auto fx = [&](double x, double y) {
    return (G(x + h, y) - G(x - h, y)) / (2 * h) / std::sqrt(E(x, y) * G(x, y));
  };
  auto fy = [&](double x, double y) {
    return (E(x, y + h) - E(x, y - h)) / (2 * h) / std::sqrt(E(x, y) * G(x, y));
  };
  const double dfx = (fx(p.x + h, p.y) - fx(p.x - h, p.y)) / (2 * h);
  const double dfy = (fy(p.x, p.y + h) - fy(p.x, p.y - h)) / (2 * h);
  return -(dfx + dfy) / (2 * std::sqrt(E(p.x, p.y) * G(p.x, p.y)));
}

/// Classical RK4 with a fixed small step, for cross-checking scalar ODEs.
inline std::vector<double> rk4_scalar2(const std::function<double(double)>& K, double j0, double jp0,
                                       double T, int steps) {
  double j = j0, jp = jp0, t = 0.0;
  const double h = T / steps;
  for (int i = 0; i < steps; ++i) {
    const double k1j = jp, k1p = -K(t) * j;
    const double k2j = jp + 0.5 * h * k1p, k2p = -K(t + 0.5 * h) * (j + 0.5 * h * k1j);
    const double k3j = jp + 0.5 * h * k2p, k3p = -K(t + 0.5 * h) * (j + 0.5 * h * k2j);
    const double k4j = jp + h * k3p, k4p = -K(t + h) * (j + h * k3j);
    j += h / 6 * (k1j + 2 * k2j + 2 * k3j + k4j);
    jp += h / 6 * (k1p + 2 * k2p + 2 * k3p + k4p);
    t += h;
  }
  return {j, jp};
}

inline double coth(double x) { return 1.0 / std::tanh(x); }

}  // namespace oracle
