#include <gtest/gtest.h>

#include <random>

#include "geoflow/jacobi_riccati.hpp"
#include "oracles.hpp"

using namespace geoflow;

namespace {

const Window kWin{-4, 4, -4, 4};

GeodesicTrajectory orbit(const MetricChart& c, UnitTangentVector th, double lo, double hi) {
  return integrate_geodesic(c, th, {lo, hi});
}

MetricChart curvature(double K0) { return MetricChart::constant_curvature(K0, kWin); }

GeodesicTrajectory horizontal(double K0, double lo, double hi) {
  auto c = curvature(K0);
  return orbit(c, UnitTangentVector(c, {0, 0}, {1, 0}), lo, hi);
}

}  // namespace

TEST(Jacobi, ClosedForms) {
  auto flat = horizontal(0.0, 0, 5);
  auto s = integrate_jacobi(flat, 0.0, 1.0);
  for (std::size_t i = 0; i < s.t.size(); ++i) EXPECT_NEAR(s.j[i], s.t[i], 1e-12);

  auto hyp = horizontal(-1.0, 0, 5);
  s = integrate_jacobi(hyp, 0.0, 1.0);
  EXPECT_NEAR(s.at(2.0).first, 3.626860407847019, 1e-9);
  for (std::size_t i = 0; i < s.t.size(); ++i) EXPECT_NEAR(s.j[i], std::sinh(s.t[i]), 1e-9 * std::cosh(s.t[i]));
  s = integrate_jacobi(hyp, 1.0, -1.0);
  for (std::size_t i = 0; i < s.t.size(); ++i) EXPECT_NEAR(s.j[i], std::exp(-s.t[i]), 1e-9);
}

TEST(Jacobi, LinearityAndWronskian) {
  auto c = MetricChart::warped(WarpedProfile::flat_band, 1.0, 1.0, kWin);
  auto tr = orbit(c, UnitTangentVector::from_angle(c, {0, 0}, 1.2), -3, 3);
  auto a = integrate_jacobi(tr, 1.0, 0.0);
  auto b = integrate_jacobi(tr, 0.0, 1.0);
  auto ab = integrate_jacobi(tr, 2.0, -3.0);
  const double W0 = a.j[0] * b.jp[0] - b.j[0] * a.jp[0];
  for (std::size_t i = 0; i < a.t.size(); ++i) {
    EXPECT_NEAR(ab.j[i], 2.0 * a.j[i] - 3.0 * b.j[i], 1e-9 * (1 + std::abs(ab.j[i])));
    const double W = a.j[i] * b.jp[i] - b.j[i] * a.jp[i];
    EXPECT_NEAR(W, W0, 1e-7 * std::abs(W0));
  }
}

TEST(Jacobi, MatchesFixedStepReference) {
  auto c = MetricChart::conformal(ConformalPotential::quadratic, 0.1, {-3, 3, -3, 3});
  auto tr = orbit(c, UnitTangentVector::from_angle(c, {0.5, -0.2}, 0.8), 0, 4);
  auto s = integrate_jacobi(tr, 1.0, 0.3);
  auto ref = oracle::rk4_scalar2([&](double t) { return tr.curvature_at_time(t); }, 1.0, 0.3, 4.0,
                                 4000);
  EXPECT_NEAR(s.j.back(), ref[0], 1e-8);
  EXPECT_NEAR(s.jp.back(), ref[1], 1e-8);
}

TEST(Riccati, ClosedForms) {
  auto hyp = horizontal(-1.0, 0, 5);
  auto s = integrate_riccati(hyp, 1.0, 0.0, 5.0);
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(s.u(i), 1.0, 1e-12);
  s = integrate_riccati(hyp, 0.0, 0.0, 5.0);
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_NEAR(s.u(i), std::tanh(s.t[i]), 1e-10);
    if (s.t[i] == 1.0) {
      EXPECT_NEAR(s.u(i), 0.7615941559557649, 1e-10);
    }
  }
  auto flat = horizontal(0.0, 0, 3);
  s = integrate_riccati(flat, -1.0, 0.0, 3.0);
  ASSERT_EQ(s.blowups.size(), 1u);
  EXPECT_NEAR(s.blowups[0], 1.0, 1e-9);
  for (std::size_t i = 0; i < s.size(); ++i)
    if (std::abs(s.t[i] - 1.0) > 0.02) {
      EXPECT_NEAR(s.u(i), -1.0 / (1.0 - s.t[i]), 1e-7 * (1 + s.u(i) * s.u(i)));
    }
}

TEST(Riccati, RadialSolutionFromInfinity) {
  auto hyp = horizontal(-1.0, 0, 6);
  auto s = integrate_riccati(hyp, std::numeric_limits<double>::infinity(), 0.0, 6.0);
  EXPECT_TRUE(s.blowups.empty());
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s.t[i] >= 0.1) {
      EXPECT_NEAR(s.u(i), oracle::coth(s.t[i]), 1e-9);
    }
}

TEST(Riccati, BackwardIntegrationOrdering) {
  auto hyp = horizontal(-1.0, -1, 4);
  auto s = integrate_riccati(hyp, 0.0, 3.0, -1.0);
  EXPECT_DOUBLE_EQ(s.t.front(), -1.0);
  EXPECT_DOUBLE_EQ(s.t.back(), 3.0);
  for (std::size_t i = 1; i < s.size(); ++i) EXPECT_LT(s.t[i - 1], s.t[i]);
  // u(3) = 0 backward under K = -1: u(t) = -tanh(3 - t).
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(s.u(i), -std::tanh(3.0 - s.t[i]), 1e-10);
}

TEST(Riccati, ResidualAwayFromBlowups) {
  auto c = MetricChart::conformal(ConformalPotential::quadratic, 0.1, {-3, 3, -3, 3});
  StepPolicy fine;
  fine.sample_dt = 0.005;
  auto tr = integrate_geodesic(c, UnitTangentVector::from_angle(c, {0.2, 0.1}, 2.2), {0, 6}, fine);
  auto s = integrate_riccati(tr, -3.0, 0.0, 6.0);
  ASSERT_FALSE(s.blowups.empty());
  int checked = 0;
  for (std::size_t i = 2; i + 2 < s.size(); ++i) {
    bool tame = true;
    for (std::size_t k = i - 2; k <= i + 2; ++k) tame = tame && std::abs(s.u(k)) < 1.2;
    if (!tame) continue;
    // Fourth-order centered difference on the uniform sample grid.
    const double h = s.t[i + 1] - s.t[i];
    const double du = (-s.u(i + 2) + 8 * s.u(i + 1) - 8 * s.u(i - 1) + s.u(i - 2)) / (12 * h);
    EXPECT_NEAR(du + s.u(i) * s.u(i) + tr.curvature_at_time(s.t[i]), 0.0, 1e-7);
    ++checked;
  }
  EXPECT_GT(checked, 100);
}

TEST(Riccati, MatchesJacobiLogDerivative) {
  for (const auto& c : {curvature(-1.0), MetricChart::warped(WarpedProfile::flat_band, 1.0, 1.0, kWin),
                        MetricChart::conformal(ConformalPotential::quadratic, 0.1, {-3, 3, -3, 3})}) {
    auto tr = orbit(c, UnitTangentVector::from_angle(c, {0.1, 0.2}, 0.7), 0, 3);
    auto js = integrate_jacobi(tr, 1.0, 0.5);
    auto rs = integrate_riccati(tr, 0.5, 0.0, 3.0);
    ASSERT_EQ(js.t.size(), rs.size());
    for (std::size_t i = 0; i < rs.size(); ++i) {
      ASSERT_GT(js.j[i], 0.0);
      EXPECT_NEAR(rs.u(i), js.jp[i] / js.j[i], 1e-7) << c.describe();
    }
  }
}

TEST(Riccati, ChartSwitchBudget) {
  // u' = -u^2 - K with K = -4 from +inf: coth-type, no blow-up; budget never hit.
  auto tr = horizontal(-4.0, 0, 2);
  RiccatiOptions o;
  o.max_switches = 0;
  auto s = integrate_riccati(tr, -2.0, 0.0, 2.0, o);
  EXPECT_EQ(s.switches, 0u);
  // Started beyond the cap with K = 0, v = 1/u reaches 1 and must switch back.
  EXPECT_THROW(integrate_riccati(horizontal(0.0, 0, 2), 1e7, 0.0, 2.0, o), DiagnosticsError);
}

TEST(Green, ApproximantClosedForms) {
  auto h1 = horizontal(-1.0, 0, 10);
  EXPECT_NEAR(green_approximant(h1, 3.0), -1.0049698233136892, 1e-10);
  auto f = horizontal(0.0, 0, 10);
  EXPECT_NEAR(green_approximant(f, 10.0), -0.1, 1e-10);
  auto h4 = horizontal(-4.0, 0, 4);
  EXPECT_NEAR(green_approximant(h4, 3.0), -2.0 * oracle::coth(6.0), 1e-10);
  EXPECT_NEAR(neumann_approximant(h4, 3.0), -2.0 * std::tanh(6.0), 1e-10);
}

TEST(Green, ApproximantsMonotoneInT) {
  for (double K0 : {-0.25, -1.0, -4.0}) {
    auto tr = horizontal(K0, 0, 16);
    const double k = std::sqrt(-K0);
    double prev = -std::numeric_limits<double>::infinity();
    for (double T : {2.0, 4.0, 8.0, 16.0}) {
      const double v = green_approximant(tr, T);
      EXPECT_GE(v, prev);
      EXPECT_LE(v, -k);
      EXPECT_NEAR(v, -k * oracle::coth(k * T), 1e-9);
      prev = v;
    }
  }
}

TEST(Envelope, Examples) {
  auto hyp = horizontal(-1.0, 0, 5);
  auto radial = integrate_riccati(hyp, std::numeric_limits<double>::infinity(), 0.0, 5.0);
  auto rep = riccati_bound_check(radial, 1.0, 0.0, 5.0);
  EXPECT_TRUE(rep.holds);
  EXPECT_NEAR(rep.margin, 0.0, 1e-8);

  auto th = integrate_riccati(hyp, 0.0, 0.0, 5.0);
  const double inf = std::numeric_limits<double>::infinity();
  rep = riccati_bound_check(th, 1.0, -inf, inf);
  EXPECT_TRUE(rep.holds);
  for (std::size_t i = 0; i < th.size(); ++i) EXPECT_LE(std::abs(th.u(i)), 1.0 + 1e-12);

  auto two = RiccatiSolution::from_values({0, 1, 2}, {2, 2, 2});
  rep = riccati_bound_check(two, 1.0, -inf, inf);
  EXPECT_FALSE(rep.holds);
  EXPECT_DOUBLE_EQ(rep.margin, -1.0);
}

TEST(Envelope, RandomSolutionsAcrossBlowups) {
  std::mt19937 rng(21);
  std::uniform_real_distribution<double> ang(-kPi, kPi), u0(-6, 6), pos(-0.5, 0.5);
  std::vector<MetricChart> charts{curvature(-1.0), curvature(0.0),
                                  MetricChart::warped(WarpedProfile::flat_band, 1.0, 1.0, kWin),
                                  MetricChart::conformal(ConformalPotential::quadratic, 0.1, {-3, 3, -3, 3})};
  int violations = 0, blowups = 0;
  for (int n = 0; n < 60; ++n) {
    const auto& c = charts[n % charts.size()];
    auto tr = orbit(c, UnitTangentVector::from_angle(c, {pos(rng), pos(rng)}, ang(rng)), 0, 4);
    auto s = integrate_riccati(tr, u0(rng), 0.0, 4.0);
    std::vector<double> cuts{0.0};
    cuts.insert(cuts.end(), s.blowups.begin(), s.blowups.end());
    cuts.push_back(4.0);
    blowups += static_cast<int>(s.blowups.size());
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k)
      if (!riccati_bound_check(s, c.kappa(), cuts[k], cuts[k + 1]).holds) ++violations;
  }
  EXPECT_EQ(violations, 0);
  EXPECT_GT(blowups, 0);
}

TEST(Decaying, ExponentialAndCosh) {
  auto tr = horizontal(-1.0, 0, 20);
  auto e = conjugate_decaying_solution(integrate_jacobi(tr, 1.0, 1.0));
  EXPECT_NEAR(e.decay_slope, -1.0, 1e-3);
  for (std::size_t i = 0; i < e.t.size(); i += 37) EXPECT_NEAR(e.w[i], 0.5 * std::exp(-e.t[i]), 1e-6 * std::exp(-e.t[i]));
  auto c = conjugate_decaying_solution(integrate_jacobi(tr, 1.0, 0.0));
  EXPECT_NEAR(c.decay_slope, -1.0, 1e-2);
  // Closed form: cosh t (1 - tanh t) = e^{-t}.
  for (std::size_t i = 0; i < c.t.size(); i += 37) EXPECT_NEAR(c.w[i], std::exp(-c.t[i]), 1e-5 * std::exp(-c.t[i]) + 1e-12);
}

TEST(Decaying, PolynomialGrowthRejected) {
  auto tr = horizontal(0.0, 0, 20);
  JacobiOptions o;
  o.t0 = 1.0;
  o.span = TimeSpan{1.0, 20.0};
  auto lin = integrate_jacobi(tr, 1.0, 1.0, o);
  EXPECT_NEAR(lin.j.back(), 20.0, 1e-10);
  EXPECT_THROW(conjugate_decaying_solution(lin), PreconditionError);
  auto zero = integrate_jacobi(tr, 0.0, 1.0);
  EXPECT_THROW(conjugate_decaying_solution(zero), DomainError);
}
