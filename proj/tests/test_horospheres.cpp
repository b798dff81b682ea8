#include <gtest/gtest.h>

#include <array>
#include <random>

#include "geoflow/green.hpp"
#include "geoflow/horospheres.hpp"
#include "oracles.hpp"

using namespace geoflow;

namespace {

const Window kWin{-5, 5, -5, 5};

MetricChart cc(double K0) { return MetricChart::constant_curvature(K0, kWin); }
MetricChart horo() { return MetricChart::warped(WarpedProfile::exp_decay, 1.0, 0.0, kWin); }
MetricChart band() { return MetricChart::warped(WarpedProfile::flat_band, 1.0, 1.0, kWin); }

using Vec3 = std::array<double, 3>;

// Fermi coordinates along y = 0 on the hyperboloid -x0^2 + x1^2 + x2^2 = -1.
Vec3 hyp_point(double x, double y) {
  return {std::cosh(y) * std::cosh(x), std::cosh(y) * std::sinh(x), std::sinh(y)};
}
Vec3 hyp_tangent(double x, double y, double dx, double dy) {
  return {std::cosh(y) * std::sinh(x) * dx + std::sinh(y) * std::cosh(x) * dy,
          std::cosh(y) * std::cosh(x) * dx + std::sinh(y) * std::sinh(x) * dy, std::cosh(y) * dy};
}
double lorentz(const Vec3& a, const Vec3& b) { return -a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

// b^+ for the ray through P with unit tangent V is log(-<X, P + V>).
double hyp_busemann(const UnitTangentVector& th, ChartPoint x) {
  const auto P = hyp_point(th.base().x, th.base().y);
  const auto V = hyp_tangent(th.base().x, th.base().y, th.dir().x, th.dir().y);
  const Vec3 xi{P[0] + V[0], P[1] + V[1], P[2] + V[2]};
  return std::log(-lorentz(hyp_point(x.x, x.y), xi));
}

// Distance from p to the polyline through `pts`, measured in g at the foot point.
double distance_to_polyline(const MetricChart& c, ChartPoint p, const std::vector<ChartPoint>& pts) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const ChartVector d = pts[i + 1] - pts[i];
    const ChartVector w = p - pts[i];
    const auto m = c.metric(pts[i]);
    const double dd = m.gxx * d.x * d.x + m.gyy * d.y * d.y;
    const double t = std::clamp((m.gxx * w.x * d.x + m.gyy * w.y * d.y) / dd, 0.0, 1.0);
    const ChartPoint foot = pts[i] + t * d;
    best = std::min(best, metric_norm(c, foot, p - foot));
  }
  return best;
}

}  // namespace

TEST(Busemann, FlatExample) {
  auto c = cc(0.0);
  auto e = busemann(c, UnitTangentVector(c, {0, 0}, {0, 1}), {3, 2}, BusemannSign::plus);
  EXPECT_NEAR(e.value, -2.0, 1e-8);
  EXPECT_TRUE(e.converged);
  EXPECT_TRUE(e.monotone);
  EXPECT_NEAR(e.gradient.x, 0.0, 1e-8);
  EXPECT_NEAR(e.gradient.y, -1.0, 1e-8);
  // Raw truncations against the closed form sqrt(9 + (T - 2)^2) - T.
  for (std::size_t i = 0; i < e.T.size(); ++i)
    EXPECT_NEAR(e.raw[i], std::sqrt(9.0 + (e.T[i] - 2) * (e.T[i] - 2)) - e.T[i], 1e-8);
}

TEST(Busemann, HorocyclicCoordinates) {
  auto c = horo();
  const UnitTangentVector th(c, {0, 0}, {0, 1});
  const BusemannField f(c, th, BusemannSign::plus);
  for (ChartPoint x : {ChartPoint{5, 0}, ChartPoint{-3, 1.5}, ChartPoint{2, -2}, ChartPoint{0.5, 3}}) {
    const auto e = f.evaluate(x);
    EXPECT_NEAR(e.value, -x.y, 1e-4) << x.x << "," << x.y;
    EXPECT_TRUE(e.converged);
    EXPECT_TRUE(e.monotone);
    EXPECT_NEAR(e.gradient.x, 0.0, 1e-3);
    EXPECT_NEAR(e.gradient.y, -1.0, 1e-3);
  }
}

TEST(Busemann, PointOnRay) {
  auto c = cc(-1.0);
  const auto th = UnitTangentVector::from_angle(c, {0.2, -0.1}, 0.8);
  const ChartPoint x = flow(c, th, 2.0).base();
  const auto e = busemann(c, th, x, BusemannSign::plus);
  EXPECT_NEAR(e.value, -2.0, 1e-8);
  for (std::size_t i = 0; i < e.T.size(); ++i)
    if (e.T[i] >= 2.0) {
      EXPECT_NEAR(e.raw[i], -2.0, 1e-8);
    }
}

TEST(Busemann, HyperboloidOracle) {
  auto c = cc(-1.0);
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(-1.5, 1.5), a(-kPi, kPi);
  for (int i = 0; i < 6; ++i) {
    const auto th = UnitTangentVector::from_angle(c, {u(rng), u(rng)}, a(rng));
    const ChartPoint x{u(rng), u(rng)};
    for (auto sign : {BusemannSign::plus, BusemannSign::minus}) {
      const auto e = busemann(c, th, x, sign);
      const auto ref_th = sign == BusemannSign::plus ? th : th.reversed();
      EXPECT_NEAR(e.value, hyp_busemann(ref_th, x), 1e-5);
      EXPECT_TRUE(e.monotone);
      // Gradient against central differences of the oracle.
      const double h = 1e-6;
      const double bx = (hyp_busemann(ref_th, {x.x + h, x.y}) - hyp_busemann(ref_th, {x.x - h, x.y})) / (2 * h);
      const double by = (hyp_busemann(ref_th, {x.x, x.y + h}) - hyp_busemann(ref_th, {x.x, x.y - h})) / (2 * h);
      const auto m = c.metric(x);
      EXPECT_NEAR(e.gradient.x, bx / m.gxx, 1e-4);
      EXPECT_NEAR(e.gradient.y, by / m.gyy, 1e-4);
    }
  }
}

TEST(Horocycle, FlatExample) {
  auto c = cc(0.0);
  auto tr = trace_horocycle(c, UnitTangentVector(c, {0, 0}, {0, 1}), BusemannSign::plus, 1.0, 0.1);
  EXPECT_FALSE(tr.truncated);
  EXPECT_EQ(tr.points.size(), 21u);
  for (std::size_t i = 0; i < tr.points.size(); ++i) {
    EXPECT_NEAR(tr.points[i].y, 0.0, 1e-7);
    EXPECT_NEAR(tr.normals[i].x, 0.0, 1e-7);
    EXPECT_NEAR(tr.normals[i].y, 1.0, 1e-7);
  }
}

TEST(Horocycle, HorocyclicExample) {
  auto c = horo();
  auto tr = trace_horocycle(c, UnitTangentVector(c, {0, 0}, {0, 1}), BusemannSign::plus, 1.0, 0.1);
  EXPECT_FALSE(tr.truncated);
  for (std::size_t i = 0; i < tr.points.size(); ++i) {
    EXPECT_NEAR(tr.points[i].y, 0.0, 1e-5);
    EXPECT_NEAR(tr.normals[i].y, 1.0, 1e-3);
  }
}

TEST(Horocycle, TraceInvariantsAndSymmetry) {
  auto c = cc(-1.0);
  const double step = 0.1;
  auto tr = trace_horocycle(c, UnitTangentVector(c, {0, 0}, {0, 1}), BusemannSign::plus, 1.0, step);
  ASSERT_FALSE(tr.truncated);
  ASSERT_EQ(tr.points.size(), 21u);
  const std::size_t b = tr.base_index;
  EXPECT_EQ(b, 10u);
  for (std::size_t i = 0; i < tr.points.size(); ++i) {
    EXPECT_LE(std::abs(tr.b_plus[i]), 1e-6);
    if (i > 0) {
      EXPECT_NEAR(tr.s[i] - tr.s[i - 1], step, 0.1 * step);
    }
    // Independent check of the level set on the hyperboloid.
    EXPECT_NEAR(hyp_busemann(tr.theta, tr.points[i]), 0.0, 1e-5);
    EXPECT_NEAR(metric_norm(c, tr.points[i], tr.normals[i]), 1.0, 1e-9);
  }
  for (std::size_t k = 1; k <= b; ++k) {
    EXPECT_NEAR(tr.points[b - k].x, -tr.points[b + k].x, 1e-6);
    EXPECT_NEAR(tr.points[b - k].y, tr.points[b + k].y, 1e-6);
  }
}

TEST(Horocycle, Equidistance) {
  auto c = cc(-1.0);
  const auto th = UnitTangentVector::from_angle(c, {0.1, 0.2}, 1.1);
  auto base = trace_horocycle(c, th, BusemannSign::plus, 0.6, 0.1);
  ASSERT_FALSE(base.truncated);
  for (double t : {1.0, 2.0}) {
    auto moved = trace_horocycle(c, flow(c, th, t), BusemannSign::plus, 2.0, 0.05);
    ASSERT_FALSE(moved.truncated);
    for (std::size_t i = 0; i < base.points.size(); ++i) {
      const auto p = flow(c, UnitTangentVector(c, base.points[i], base.normals[i]), t).base();
      EXPECT_LT(distance_to_polyline(c, p, moved.points), 5e-3) << "t=" << t << " i=" << i;
    }
  }
}

TEST(Horocycle, LeafTangencyToGreenBundles) {
  const std::vector<std::pair<MetricChart, UnitTangentVector>> cases = [] {
    std::vector<std::pair<MetricChart, UnitTangentVector>> v;
    auto h = cc(-1.0);
    v.emplace_back(h, UnitTangentVector::from_angle(h, {0.3, -0.2}, 0.4));
    auto b = band();
    v.emplace_back(b, UnitTangentVector(b, {0, 0}, {1, 0}));
    v.emplace_back(b, UnitTangentVector::from_angle(b, {0, 0.5}, 0.6));
    return v;
  }();
  for (const auto& [c, th] : cases) {
    GreenOptions go;
    go.T_max = 20.0;
    const auto g = green_limit(c, th, go);
    for (auto sign : {BusemannSign::plus, BusemannSign::minus}) {
      auto tr = trace_horocycle(c, th, sign, 0.1, 0.02);
      ASSERT_FALSE(tr.truncated);
      const double u = leaf_riccati_value(c, tr, tr.base_index);
      const double want = sign == BusemannSign::plus ? g.u_s : g.u_u;
      EXPECT_LE(std::abs(std::atan(u) - std::atan(want)), 1e-2) << c.describe() << " u=" << u << " want=" << want;
    }
  }
}

TEST(Strip, BandExample) {
  auto c = band();
  auto rec = detect_strip(c, UnitTangentVector(c, {0, 0}, {1, 0}), 2.0);
  EXPECT_FALSE(rec.exceeded_window);
  EXPECT_FALSE(rec.trivial);
  EXPECT_NEAR(rec.width, 2.0, 0.05);
  EXPECT_NEAR(rec.endpoint_lo.x, 0.0, 0.05);
  EXPECT_NEAR(rec.endpoint_lo.y, -1.0, 0.05);
  EXPECT_NEAR(rec.endpoint_hi.x, 0.0, 0.05);
  EXPECT_NEAR(rec.endpoint_hi.y, 1.0, 0.05);
  const auto v = strip_vector(c, rec, 0.5 * (rec.s_lo + rec.s_hi) + 0.3);
  EXPECT_NEAR(v.dir().x, 1.0, 1e-3);
  EXPECT_NEAR(v.dir().y, 0.0, 1e-3);
}

TEST(Strip, HyperbolicIsTrivial) {
  auto c = cc(-1.0);
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0), a(-kPi, kPi);
  for (int i = 0; i < 8; ++i) {
    auto rec = detect_strip(c, UnitTangentVector::from_angle(c, {u(rng), u(rng)}, a(rng)), 1.0);
    EXPECT_LE(rec.width, 2 * rec.strip_tol);
    EXPECT_TRUE(rec.trivial);
    EXPECT_FALSE(rec.exceeded_window);
  }
}

TEST(Strip, FlatExceedsWindow) {
  auto c = cc(0.0);
  auto rec = detect_strip(c, UnitTangentVector::from_angle(c, {0, 0}, 0.3), 1.0);
  EXPECT_TRUE(rec.exceeded_window);
  EXPECT_FALSE(rec.trivial);
}

TEST(Strip, WideStripsAreDegenerate) {
  auto c = band();
  for (double y : {0.0, 0.4, -0.7}) {
    const UnitTangentVector th(c, {0.3, y}, {1, 0});
    auto rec = detect_strip(c, th, 2.0);
    ASSERT_GT(rec.width, 2 * rec.strip_tol);
    EXPECT_EQ(classify_rank_one(green_limit(c, th)).kind, RankKind::degenerate);
  }
}

TEST(Biasymptotic, Examples) {
  auto b = band();
  const UnitTangentVector th(b, {0, 0}, {1, 0});
  auto same = biasymptotic_distance(b, th, th, 3.0);
  EXPECT_EQ(same.verdict, AsymptoticVerdict::biasymptotic);
  EXPECT_NEAR(same.hausdorff, 0.0, 1e-6);

  auto pair = biasymptotic_distance(b, th, UnitTangentVector(b, {0, 1}, {1, 0}), 3.0);
  EXPECT_EQ(pair.verdict, AsymptoticVerdict::biasymptotic);
  EXPECT_NEAR(pair.hausdorff, 1.0, 1e-6);
  EXPECT_NEAR(pair.forward_sup, 1.0, 1e-6);

  auto h = cc(-1.0);
  const auto th2 = UnitTangentVector::from_angle(h, {0, 0}, 0.3);
  auto tr = trace_horocycle(h, th2, BusemannSign::plus, 0.5, 0.1);
  ASSERT_FALSE(tr.truncated);
  const UnitTangentVector mate(h, tr.points.back(), tr.normals.back());
  auto rep = biasymptotic_distance(h, th2, mate, 3.0);
  EXPECT_EQ(rep.verdict, AsymptoticVerdict::forward_only);
  EXPECT_GT(rep.backward_sup, rep.forward_sup);
  EXPECT_TRUE(std::isnan(rep.hausdorff));

  auto rev = biasymptotic_distance(h, th2.reversed(), mate.reversed(), 3.0);
  EXPECT_EQ(rev.verdict, AsymptoticVerdict::backward_only);
}

TEST(Biasymptotic, MorseBoundOnBandStrip) {
  auto c = band();
  auto rec = detect_strip(c, UnitTangentVector(c, {0, 0}, {1, 0}), 2.0);
  ASSERT_FALSE(rec.trivial);
  const auto lo = strip_vector(c, rec, rec.s_lo + 0.05);
  const auto hi = strip_vector(c, rec, rec.s_hi - 0.05);
  auto rep = biasymptotic_distance(c, lo, hi, 3.0);
  EXPECT_EQ(rep.verdict, AsymptoticVerdict::biasymptotic);
  EXPECT_LE(rep.hausdorff, rec.width + 5e-2);
}

TEST(Busemann, Preconditions) {
  auto c = cc(-1.0);
  BusemannOptions o;
  o.T_max = 1.0;
  EXPECT_THROW(busemann(c, UnitTangentVector(c, {0, 0}, {1, 0}), {0.5, 0.5}, BusemannSign::plus, o),
               IntegrationError);
  EXPECT_THROW(trace_horocycle(c, UnitTangentVector(c, {0, 0}, {1, 0}), BusemannSign::plus, 0.0, 0.1),
               DomainError);
}
