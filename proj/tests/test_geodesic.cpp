#include <gtest/gtest.h>

#include <random>

#include "geoflow/geodesic.hpp"
#include "oracles.hpp"

using namespace geoflow;

namespace {

const Window kWin{-6, 6, -4, 4};

MetricChart flat() { return MetricChart::constant_curvature(0.0, kWin); }
MetricChart hyp() { return MetricChart::warped(WarpedProfile::cosh, 1.0, 0.0, kWin); }
MetricChart band() { return MetricChart::warped(WarpedProfile::flat_band, 1.0, 1.0, kWin); }
MetricChart horo() { return MetricChart::warped(WarpedProfile::exp_decay, 1.0, 0.0, kWin); }

}  // namespace

TEST(Geodesic, UnitTangentVectorNormalizes) {
  auto c = hyp();
  UnitTangentVector v(c, {0, 1}, {2, 0});
  EXPECT_NEAR(metric_norm(c, v.base(), v.dir()), 1.0, 1e-15);
  EXPECT_THROW(UnitTangentVector(c, {0, 0}, {0, 0}), DomainError);
}

TEST(Geodesic, FlatStraightLine) {
  auto c = flat();
  auto tr = integrate_geodesic(c, UnitTangentVector(c, {0, 0}, {1, 0}), {0, 5});
  const auto z = tr.states().back();
  EXPECT_NEAR(tr.times().back(), 5.0, 0);
  EXPECT_NEAR(z[0], 5.0, 1e-12);
  EXPECT_NEAR(z[1], 0.0, 1e-12);
  EXPECT_NEAR(z[2], 1.0, 1e-12);
  EXPECT_NEAR(z[3], 0.0, 1e-12);
  EXPECT_FALSE(tr.truncated());
}

TEST(Geodesic, WarpedVerticalLine) {
  auto c = hyp();
  auto tr = integrate_geodesic(c, UnitTangentVector(c, {0, 0}, {0, 1}), {0, 3});
  for (std::size_t i = 0; i < tr.size(); ++i) {
    EXPECT_NEAR(tr.states()[i][0], 0.0, 1e-12);
    EXPECT_NEAR(tr.states()[i][1], tr.times()[i], 1e-9);
  }
}

TEST(Geodesic, SpeedDriftAndCurvatureSamples) {
  auto c = hyp();
  auto tr = integrate_geodesic(c, UnitTangentVector(c, {0, 0}, {1, 0}), {0, 10});
  EXPECT_LE(tr.stats().max_speed_drift, 1e-8);
  for (std::size_t i = 0; i < tr.size(); ++i) {
    const auto& z = tr.states()[i];
    EXPECT_NEAR(metric_norm(c, {z[0], z[1]}, {z[2], z[3]}), 1.0, 1e-12);
    EXPECT_NEAR(tr.curvature()[i], c.curvature({z[0], z[1]}), 1e-10);
  }
}

TEST(Geodesic, MatchesHalvedToleranceSelfConsistency) {
  auto c = hyp();
  UnitTangentVector th = UnitTangentVector::from_angle(c, {0.2, -0.3}, 0.4);
  StepPolicy loose;
  StepPolicy tight;
  tight.local_tol = 1e-13;
  auto a = integrate_geodesic(c, th, {0, 10}, loose);
  auto b = integrate_geodesic(c, th, {0, 10}, tight);
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(a.states().back()[k], b.states().back()[k], 1e-7);
}

TEST(Geodesic, HyperbolicDistanceAlongOrbit) {
  // Unit speed: the chart distance between gamma(0) and gamma(t) must be t.
  auto c = hyp();
  auto th = UnitTangentVector::from_angle(c, {0.5, 0.2}, 1.1);
  auto tr = integrate_geodesic(c, th, {-2, 2});
  for (double t : {-2.0, -0.7, 1.3, 2.0}) {
    const auto p = tr.point_at(t);
    EXPECT_NEAR(oracle::cosh_chart_distance(1.0, 0.5, 0.2, p.x, p.y), std::abs(t), 1e-8);
  }
}

TEST(Geodesic, FlowProperty) {
  for (const auto& c : {hyp(), band(), horo()}) {
    auto th = UnitTangentVector::from_angle(c, {0.1, 0.3}, 0.9);
    const double s = 1.3, t = 2.1;
    auto whole = integrate_geodesic(c, th, {0, s + t}).states().back();
    auto mid = UnitTangentVector::from_state(c, integrate_geodesic(c, th, {0, s}).states().back());
    auto two = integrate_geodesic(c, mid, {0, t}).states().back();
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(whole[k], two[k], 1e-7) << c.describe();
  }
}

TEST(Geodesic, TimeReversalRetraces) {
  for (const auto& c : {hyp(), band(), horo()}) {
    auto th = UnitTangentVector::from_angle(c, {-0.4, 0.2}, 2.0);
    auto fw = integrate_geodesic(c, th, {0, 3});
    auto end = UnitTangentVector::from_state(c, fw.states().back()).reversed();
    auto back = integrate_geodesic(c, end, {0, 3});
    const auto z = back.states().back();
    EXPECT_NEAR(z[0], th.base().x, 1e-7);
    EXPECT_NEAR(z[1], th.base().y, 1e-7);
    EXPECT_NEAR(z[2], -th.dir().x, 1e-7);
    EXPECT_NEAR(z[3], -th.dir().y, 1e-7);
  }
}

TEST(Geodesic, NegativeSpanAndReversedTrajectory) {
  auto c = hyp();
  auto th = UnitTangentVector::from_angle(c, {0, 0}, 0.3);
  auto tr = integrate_geodesic(c, th, {-2, 3});
  EXPECT_DOUBLE_EQ(tr.t_min(), -2.0);
  EXPECT_DOUBLE_EQ(tr.t_max(), 3.0);
  auto rv = tr.reversed();
  for (double t : {-2.9, -0.33, 0.0, 1.7}) {
    auto a = rv.state_at(t);
    auto b = tr.state_at(-t);
    EXPECT_NEAR(a[0], b[0], 1e-12);
    EXPECT_NEAR(a[2], -b[2], 1e-12);
  }
}

TEST(Geodesic, HermiteInterpolationAccuracy) {
  auto c = hyp();
  auto th = UnitTangentVector::from_angle(c, {0, 0}, 0.5);
  auto tr = integrate_geodesic(c, th, {0, 4});
  for (double t : {0.013, 1.234, 3.977}) {
    StepPolicy p;
    p.sample_dt = t;
    auto direct = integrate_geodesic(c, th, {0, t}, p).states().back();
    auto interp = tr.state_at(t);
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(interp[k], direct[k], 1e-9);
  }
  EXPECT_THROW(tr.state_at(5.0), DomainError);
}

TEST(Geodesic, TruncatedWhenLeavingPaddedWindow) {
  auto c = MetricChart::constant_curvature(0.0, {-1, 1, -1, 1});
  StepPolicy p;
  p.pad = 0.5;
  auto tr = integrate_geodesic(c, UnitTangentVector(c, {0, 0}, {1, 0}), {0, 5}, p);
  EXPECT_TRUE(tr.truncated());
  EXPECT_LE(tr.t_max(), 1.5 + 1e-9);
}

TEST(Geodesic, SasakiExamples) {
  auto c = flat();
  UnitTangentVector a(c, {0, 0}, {1, 0});
  EXPECT_EQ(sasaki_distance(c, a, a), 0.0);
  EXPECT_NEAR(sasaki_distance(c, a, UnitTangentVector(c, {3, 4}, {1, 0})), 5.0, 1e-9);
  EXPECT_NEAR(sasaki_distance(c, a, UnitTangentVector(c, {0, 0}, {0, 1})), kPi / 2, 1e-15);
  auto h = hyp();
  auto u = UnitTangentVector::from_angle(h, {0.1, 0.2}, 0.3);
  auto v = UnitTangentVector::from_angle(h, {-0.5, 0.9}, 2.3);
  EXPECT_NEAR(sasaki_distance(h, u, v), sasaki_distance(h, v, u), 1e-9);
}

TEST(Geodesic, BvpExamples) {
  auto f = flat();
  auto r = distance_bvp(f, {0, 0}, {3, 4});
  EXPECT_NEAR(r.distance, 5.0, 1e-9);
  EXPECT_NEAR(r.start_dir.x, 0.6, 1e-9);
  EXPECT_NEAR(r.start_dir.y, 0.8, 1e-9);
  auto h = hyp();
  r = distance_bvp(h, {0, 0}, {1, 0});
  EXPECT_NEAR(r.distance, 1.0, 1e-9);
  EXPECT_NEAR(r.start_dir.x, 1.0, 1e-9);
  EXPECT_NEAR(r.start_dir.y, 0.0, 1e-9);
  r = distance_bvp(h, {0, 0}, {0, 2});
  EXPECT_NEAR(r.distance, 2.0, 1e-9);
  EXPECT_NEAR(r.start_dir.x, 0.0, 1e-9);
  EXPECT_NEAR(r.start_dir.y, 1.0, 1e-9);
  EXPECT_EQ(distance_bvp(h, {0.3, 0.3}, {0.3, 0.3}).distance, 0.0);
}

TEST(Geodesic, BvpMatchesClosedFormDistances) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(-3, 3);
  auto h = hyp();
  auto ho = horo();
  auto h4 = MetricChart::constant_curvature(-4.0, kWin);
  for (int i = 0; i < 15; ++i) {
    ChartPoint p{u(rng), u(rng) * 0.8}, q{u(rng), u(rng) * 0.8};
    EXPECT_NEAR(distance_bvp(h, p, q).distance, oracle::cosh_chart_distance(1.0, p.x, p.y, q.x, q.y),
                1e-8);
    EXPECT_NEAR(distance_bvp(ho, p, q).distance, oracle::horocyclic_distance(p.x, p.y, q.x, q.y),
                1e-8);
    ChartPoint p4{p.x * 0.5, p.y * 0.5}, q4{q.x * 0.5, q.y * 0.5};
    EXPECT_NEAR(distance_bvp(h4, p4, q4).distance,
                oracle::cosh_chart_distance(2.0, p4.x, p4.y, q4.x, q4.y), 1e-8);
  }
}

TEST(Geodesic, BvpDirectionShootsToTarget) {
  auto h = hyp();
  ChartPoint p{-1.0, 0.4}, q{2.0, -0.8};
  auto r = distance_bvp(h, p, q);
  StepPolicy sp;
  sp.local_tol = 1e-12;
  sp.sample_dt = r.distance;
  auto end = integrate_geodesic(h, UnitTangentVector(h, p, r.start_dir), {0, r.distance}, sp)
                 .states()
                 .back();
  EXPECT_NEAR(end[0], q.x, 1e-8);
  EXPECT_NEAR(end[1], q.y, 1e-8);
  EXPECT_NEAR(end[2], r.arrival_dir.x, 1e-8);
  EXPECT_NEAR(end[3], r.arrival_dir.y, 1e-8);
}

TEST(Geodesic, BvpSymmetryTriangleTranslation) {
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> u(-2.5, 2.5);
  for (const auto& c : {hyp(), band(), horo()}) {
    for (int i = 0; i < 8; ++i) {
      ChartPoint p{u(rng), u(rng)}, q{u(rng), u(rng)}, s{u(rng), u(rng)};
      const double pq = distance_bvp(c, p, q).distance;
      EXPECT_NEAR(pq, distance_bvp(c, q, p).distance, 1e-9) << c.describe();
      EXPECT_LE(pq, distance_bvp(c, p, s).distance + distance_bvp(c, s, q).distance + 1e-8);
      const ChartVector shift{0.7, 0.0};
      EXPECT_NEAR(pq, distance_bvp(c, p + shift, q + shift).distance, 1e-9) << c.describe();
    }
  }
}

TEST(Geodesic, BvpLongRangeInBand) {
  auto c = MetricChart::warped(WarpedProfile::flat_band, 1.0, 1.0, {-70, 70, -4, 4});
  auto r = distance_bvp(c, {0, 0.5}, {60, 0.0});
  EXPECT_NEAR(r.distance, std::hypot(60.0, 0.5), 1e-9);
  auto h = MetricChart::constant_curvature(-1.0, {-40, 40, -4, 4});
  r = distance_bvp(h, {0, 0.5}, {30, -0.3});
  EXPECT_NEAR(r.distance, oracle::cosh_chart_distance(1.0, 0, 0.5, 30, -0.3), 1e-8);
}

TEST(Geodesic, QuasiGeodesicCircle) {
  auto c = MetricChart::constant_curvature(0.0, {-20, 20, -20, 20});
  std::vector<ChartPoint> arc;
  for (int i = 0; i <= 40; ++i) {
    const double a = 0.5 * kPi * i / 40;
    arc.push_back({10 * std::cos(a), 10 * std::sin(a)});
  }
  auto rep = quasi_geodesic_check(c, arc, 1.0, 0.0);
  EXPECT_FALSE(rep.holds);
  // Polygonal arclength of the sampled circle, against its chord.
  const double poly = 40 * 2 * 10 * std::sin(0.5 * kPi / 80);
  EXPECT_NEAR(rep.worst_ratio, poly / (10 * std::sqrt(2.0)), 1e-9);
  EXPECT_NEAR(rep.worst_ratio, 5 * kPi / (10 * std::sqrt(2.0)), 2e-3);
  EXPECT_EQ(rep.worst_i, 0u);
  EXPECT_EQ(rep.worst_j, 40u);
  EXPECT_TRUE(quasi_geodesic_check(c, arc, 1.2, 0.0).holds);
}

TEST(Geodesic, QuasiGeodesicHoldsOnGeodesic) {
  auto c = hyp();
  auto tr = integrate_geodesic(c, UnitTangentVector::from_angle(c, {0, 0}, 0.6), {0, 3});
  std::vector<ChartPoint> pts;
  for (std::size_t i = 0; i < tr.size(); i += 6) pts.push_back({tr.states()[i][0], tr.states()[i][1]});
  EXPECT_TRUE(quasi_geodesic_check(c, pts, 1.0, 0.0).holds);
  EXPECT_THROW(quasi_geodesic_check(c, pts, 0.5, 0.0), PreconditionError);
}
