#include <gtest/gtest.h>

#include <random>

#include "geoflow/green.hpp"
#include "oracles.hpp"

using namespace geoflow;

namespace {

const Window kWin{-4, 4, -4, 4};

MetricChart cc(double K0) { return MetricChart::constant_curvature(K0, kWin); }
MetricChart band() { return MetricChart::warped(WarpedProfile::flat_band, 1.0, 1.0, kWin); }

}  // namespace

TEST(GreenLimit, ConstantCurvature) {
  for (double k : {0.5, 1.0, 2.0}) {
    auto c = cc(-k * k);
    GreenOptions o;
    o.T_max = 20.0;
    auto g = green_limit(c, UnitTangentVector::from_angle(c, {0.3, -0.2}, 0.4), o);
    EXPECT_NEAR(g.u_s, -k, 1e-8);
    EXPECT_NEAR(g.u_u, k, 1e-8);
    EXPECT_NEAR(g.gap, 2 * k, 2e-8);
    EXPECT_TRUE(g.converged);
    EXPECT_TRUE(g.stable.monotone);
    EXPECT_TRUE(g.unstable.monotone);
    // Every lower approximant against the closed form -k coth(k T).
    for (std::size_t i = 0; i < g.stable.T.size(); ++i) {
      EXPECT_NEAR(g.stable.lower[i], -k * oracle::coth(k * g.stable.T[i]), 1e-9);
      EXPECT_NEAR(g.stable.upper[i], -k * std::tanh(k * g.stable.T[i]), 1e-9);
    }
  }
}

TEST(GreenLimit, FlatIsDegenerate) {
  auto c = cc(0.0);
  auto g = green_limit(c, UnitTangentVector(c, {0, 0}, {1, 0}));
  EXPECT_EQ(g.u_s, 0.0);
  EXPECT_EQ(g.u_u, 0.0);
  EXPECT_EQ(g.gap, 0.0);
  EXPECT_TRUE(g.converged);
}

TEST(GreenLimit, NotConvergedCarriesBestEstimate) {
  auto c = cc(-0.01);
  GreenOptions o;
  o.T_max = 4.0;
  auto g = green_limit(c, UnitTangentVector(c, {0, 0}, {1, 0}), o);
  EXPECT_FALSE(g.converged);
  EXPECT_LE(g.stable.lower.back(), -0.1);
  EXPECT_GE(g.stable.upper.back(), -0.1);
  EXPECT_EQ(classify_rank_one(g).kind, g.gap > 1e-4 ? RankKind::rank_one : RankKind::unresolved);
}

TEST(GreenFrame, Examples) {
  auto h = cc(-1.0);
  auto g = green_frame(h, UnitTangentVector(h, {0, 0}, {1, 0}));
  EXPECT_EQ(g.frame_s.j, 1.0);
  EXPECT_NEAR(g.frame_s.jp, -1.0, 1e-8);
  EXPECT_NEAR(g.frame_u.jp, 1.0, 1e-8);
  EXPECT_NEAR(g.gap, 2.0, 1e-8);
  auto f = cc(0.0);
  g = green_frame(f, UnitTangentVector(f, {0, 0}, {0, 1}));
  EXPECT_EQ(g.frame_s.jp, 0.0);
  EXPECT_EQ(g.frame_u.jp, 0.0);
  auto h4 = cc(-4.0);
  g = green_frame(h4, UnitTangentVector::from_angle(h4, {0.1, 0.1}, 2.0));
  EXPECT_NEAR(g.gap, 4.0, 1e-8);
}

TEST(Classify, Examples) {
  auto h = cc(-1.0);
  EXPECT_EQ(classify_rank_one(green_frame(h, UnitTangentVector(h, {0, 0}, {1, 0}))).kind,
            RankKind::rank_one);
  auto b = band();
  auto horiz = green_frame(b, UnitTangentVector(b, {0, 0}, {1, 0}));
  EXPECT_EQ(classify_rank_one(horiz).kind, RankKind::degenerate);
  EXPECT_NEAR(horiz.gap, 0.0, 1e-12);
  auto vert = green_frame(b, UnitTangentVector(b, {0, 0}, {0, 1}));
  EXPECT_EQ(classify_rank_one(vert).kind, RankKind::rank_one);
  EXPECT_LT(vert.u_s, 0.0);
  EXPECT_GT(vert.u_u, 0.0);
  EXPECT_TRUE(vert.converged);
}

TEST(Classify, BandVerticalMatchesBruteForce) {
  // Along the vertical geodesic K = 0 for |t| < 1 and -1 outside, so
  // u^s(1) = -1 and on [0,1] u' = -u^2, giving u^s(0) = -1/(1 + 1) = -0.5.
  auto b = band();
  auto vert = green_frame(b, UnitTangentVector(b, {0, 0}, {0, 1}));
  EXPECT_NEAR(vert.u_s, -0.5, 1e-7);
  EXPECT_NEAR(vert.u_u, 0.5, 1e-7);
}

TEST(Green, InvariantsOnRandomVectors) {
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> ang(-kPi, kPi), pos(-1.5, 1.5);
  std::vector<MetricChart> charts{cc(-1.0), cc(-0.25), band(),
                                  MetricChart::conformal(ConformalPotential::quadratic, 0.02, {-3, 3, -3, 3})};
  for (const auto& c : charts) {
    for (int i = 0; i < 4; ++i) {
      auto th = UnitTangentVector::from_angle(c, {pos(rng), pos(rng)}, ang(rng));
      GreenOptions o;
      o.T_max = 20;
      auto g = green_frame(c, th, o);
      EXPECT_GE(g.gap, -1e-8) << c.describe();
      if (g.converged) {
        EXPECT_LE(std::abs(g.u_s), c.kappa() + 1e-6);
        EXPECT_LE(std::abs(g.u_u), c.kappa() + 1e-6);
      }
      // Duality: u^u(theta) = -u^s(-theta).
      auto r = green_frame(c, th.reversed(), o);
      EXPECT_NEAR(g.u_u, -r.u_s, 1e-8);
      EXPECT_NEAR(g.u_s, -r.u_u, 1e-8);
    }
  }
}

TEST(Green, FlowInvarianceOfStableSolution) {
  for (const auto& c : {cc(-1.0), band()}) {
    auto th = UnitTangentVector::from_angle(c, {0.2, 0.3}, 1.3);
    GreenOptions o;
    o.T_max = 30;
    auto traj = integrate_geodesic(c, th, {0.0, 3.0 + 30.0});
    auto along = stable_solution(traj, 0.0, 3.0, 30.0);
    for (double s : {1.0, 2.5}) {
      auto moved = flow(c, th, s);
      auto g = green_frame(c, moved, o);
      double at_s = std::nan("");
      for (std::size_t i = 0; i < along.size(); ++i)
        if (std::abs(along.t[i] - s) < 1e-12) at_s = along.u(i);
      EXPECT_NEAR(g.u_s, at_s, 1e-6) << c.describe();
    }
  }
}

TEST(Lyapunov, Examples) {
  auto h = cc(-1.0);
  auto l = lyapunov_exponent(h, UnitTangentVector::from_angle(h, {0, 0}, 0.3), 20.0);
  EXPECT_NEAR(l.value, 1.0, 1e-6);
  EXPECT_NEAR(l.value, l.jacobi_value, 1e-9);
  auto f = cc(0.0);
  l = lyapunov_exponent(f, UnitTangentVector(f, {0, 0}, {1, 0}), 20.0);
  EXPECT_EQ(l.value, 0.0);
  auto h4 = cc(-4.0);
  l = lyapunov_exponent(h4, UnitTangentVector::from_angle(h4, {0, 0}, 1.0), 20.0);
  EXPECT_NEAR(l.value, 2.0, 1e-6);
  EXPECT_NEAR(l.value, l.jacobi_value, 1e-9);
}

TEST(Lyapunov, RequiresConvergedGreenData) {
  auto c = cc(-0.01);
  GreenOptions o;
  o.T_max = 4.0;
  EXPECT_THROW(lyapunov_exponent(c, UnitTangentVector(c, {0, 0}, {1, 0}), 10.0, o),
               PreconditionError);
}

TEST(Lyapunov, PositiveExponentImpliesRankOne) {
  std::mt19937 rng(8);
  std::uniform_real_distribution<double> ang(-kPi, kPi), pos(-1.5, 1.5);
  for (const auto& c : {band(), cc(-1.0)}) {
    for (int i = 0; i < 6; ++i) {
      auto th = UnitTangentVector::from_angle(c, {pos(rng), pos(rng)}, ang(rng));
      auto l = lyapunov_exponent(c, th, 10.0);
      if (l.value > 0.05) {
        EXPECT_EQ(classify_rank_one(green_frame(c, th)).kind, RankKind::rank_one);
      }
    }
  }
}

TEST(Classify, InvariantAlongOrbits) {
  for (const auto& c : {cc(-1.0), band()}) {
    for (double a : {0.0, 0.4, kPi / 2}) {
      auto th = UnitTangentVector::from_angle(c, {0.0, 0.3}, a);
      const auto k0 = classify_rank_one(green_frame(c, th)).kind;
      for (double t : {-5.0, -1.0, 1.0, 5.0})
        EXPECT_EQ(classify_rank_one(green_frame(c, flow(c, th, t))).kind, k0) << c.describe() << " " << a;
    }
  }
}

TEST(Classify, OpennessProbe) {
  for (const auto& c : {cc(-1.0), band()}) {
    auto th = UnitTangentVector::from_angle(c, {0.0, 0.0}, 1.1);
    ASSERT_EQ(classify_rank_one(green_frame(c, th)).kind, RankKind::rank_one);
    for (int k = 0; k < 8; ++k) {
      const double a = 2 * kPi * k / 8;
      // Sasaki displacement 1e-3 split between base and angle.
      const double r = 1e-3 / std::sqrt(2.0);
      const ChartPoint p = th.base() + from_frame_angle(c, th.base(), a) * r;
      auto nb = UnitTangentVector::from_angle(c, p, frame_angle(c, th.base(), th.dir()) + r);
      EXPECT_NEAR(sasaki_distance(c, th, nb), 1e-3, 1e-6);
      EXPECT_EQ(classify_rank_one(green_frame(c, nb)).kind, RankKind::rank_one);
    }
  }
}

TEST(Sandwich, Examples) {
  auto h = cc(-1.0);
  auto th = UnitTangentVector::from_angle(h, {0, 0}, 0.2);
  auto s = sandwich_check(h, th, GreenSide::stable, 10.0);
  EXPECT_TRUE(s.holds);
  EXPECT_NEAR(s.max_ratio, std::sqrt(2.0), 1e-9);
  auto f = cc(0.0);
  s = sandwich_check(f, UnitTangentVector(f, {0, 0}, {1, 0}), GreenSide::stable, 10.0);
  EXPECT_TRUE(s.holds);
  EXPECT_EQ(s.max_ratio, 1.0);
  auto h4 = cc(-4.0);
  s = sandwich_check(h4, UnitTangentVector::from_angle(h4, {0, 0}, 0.7), GreenSide::unstable, 10.0);
  EXPECT_TRUE(s.holds);
  EXPECT_NEAR(s.max_ratio, std::sqrt(5.0), 1e-9);
  auto b = band();
  s = sandwich_check(b, UnitTangentVector(b, {0, 0}, {0, 1}), GreenSide::unstable, 5.0);
  EXPECT_TRUE(s.holds);
}
