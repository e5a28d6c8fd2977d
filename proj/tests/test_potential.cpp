#include <gtest/gtest.h>

#include <cmath>

#include "qknh/error.hpp"
#include "qknh/potential.hpp"

using namespace qknh;

namespace {

Potential symmetric() { return quartic_double_well(1.0, {2.0}, {0.0}); }

Potential tilted() { return quartic_double_well(1.0, {2.0}, {0.0, 1.0}); }

}  // namespace

TEST(Potential, EvaluatesFamilyFormulas) {
  EXPECT_DOUBLE_EQ(eval_potential(symmetric(), 1.0, 0.0), -1.0);
  EXPECT_DOUBLE_EQ(eval_potential(tilted(), 0.0, 0.37), 0.0);
  EXPECT_DOUBLE_EQ(eval_potential(harmonic(1.0), 2.0, 0.0), 2.0);
}

TEST(Potential, RejectsInvalidParameters) {
  EXPECT_THROW(quartic_double_well(0.0, {2.0}, {0.0}), Error);
  EXPECT_THROW(quartic_double_well(-1.0, {2.0}, {0.0}), Error);
  EXPECT_THROW(harmonic(1.0, 0.0, 0.0, -1.0), Error);
}

TEST(Potential, BarrierTopSymmetric) {
  const auto b = barrier_top(symmetric(), 0.0);
  EXPECT_NEAR(b.x0, 0.0, 1e-14);
  EXPECT_NEAR(b.vb, 0.0, 1e-14);
  EXPECT_NEAR(b.kappa, 4.0, 1e-12);
}

TEST(Potential, SingleWellHasNoBarrier) {
  try {
    barrier_top(quartic_double_well(1.0, {-1.0}, {0.0}), 0.0);
    FAIL() << "expected NoBarrier";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoBarrier);
  }
}

TEST(Potential, BarrierTopTiltedMatchesGridScan) {
  const Potential pot = quartic_double_well(1.0, {2.0}, {0.1});
  const auto b = barrier_top(pot, 0.0);
  double best = -1.0, xbest = 0.0;
  for (int i = -20000; i <= 20000; ++i) {
    const double x = 0.5 * i / 20000.0;
    const double v = eval_potential(pot, x, 0.0);
    if (i == -20000 || v > best) best = v, xbest = x;
  }
  EXPECT_NEAR(b.x0, xbest, 5e-5);
  EXPECT_NEAR(b.x0, 0.0250156543703276, 1e-13);
  EXPECT_GT(b.vb, 0.0);
  const double h = 1e-4;
  const double fd = -(eval_potential(pot, b.x0 + h, 0) - 2 * b.vb + eval_potential(pot, b.x0 - h, 0)) / (h * h);
  EXPECT_NEAR(b.kappa / fd, 1.0, 1e-6);
}

TEST(Potential, TurningPointsBelowBarrier) {
  const auto tp = turning_points(symmetric(), -0.5, 0.0);
  ASSERT_EQ(tp.size(), 4u);
  const double outer = std::sqrt(1 + std::sqrt(0.5));
  const double inner = std::sqrt(1 - std::sqrt(0.5));
  EXPECT_NEAR(tp[0], -outer, 1e-12);
  EXPECT_NEAR(tp[1], -inner, 1e-12);
  EXPECT_NEAR(tp[2], inner, 1e-12);
  EXPECT_NEAR(tp[3], outer, 1e-12);
  EXPECT_NEAR(tp[0], -1.30656, 1e-5);
  EXPECT_NEAR(tp[1], -0.54120, 1e-5);
}

TEST(Potential, TurningPointsAboveBarrier) {
  const auto tp = turning_points(symmetric(), 0.5, 0.0);
  ASSERT_EQ(tp.size(), 2u);
  const double r = std::sqrt(1 + std::sqrt(1.5));
  EXPECT_NEAR(tp[0], -r, 1e-12);
  EXPECT_NEAR(tp[1], r, 1e-12);
}

TEST(Potential, TangencyIsDegenerate) {
  try {
    turning_points(symmetric(), -1.0, 0.0);
    FAIL() << "expected DegenerateEnergy";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateEnergy);
  }
  EXPECT_THROW(turning_points(symmetric(), 0.0, 0.0), Error);
}

TEST(Potential, TurningPointResidualsAndCountsOverGrid) {
  const Potential pot = tilted();
  for (double lambda = -0.8; lambda <= 0.8; lambda += 0.1) {
    const auto b = barrier_top(pot, lambda);
    const double vmin = upper_well_minimum(pot, lambda);
    double vlow = vmin;
    for (double x : well_minima(pot, lambda)) vlow = std::min(vlow, eval_potential(pot, x, lambda));
    for (int i = 1; i < 60; ++i) {
      const double e = vlow + (b.vb + 1.0 - vlow) * i / 60.0;
      std::vector<double> tp;
      try {
        tp = turning_points(pot, e, lambda);
      } catch (const Error&) {
        continue;
      }
      for (double x : tp) EXPECT_LT(std::abs(eval_potential(pot, x, lambda) - e), 1e-10 * std::max(1.0, std::abs(e)));
      const bool four = e > vmin && e < b.vb;
      EXPECT_EQ(tp.size(), four ? 4u : 2u) << "lambda=" << lambda << " E=" << e;
    }
  }
}

TEST(Potential, CurvatureMatchesFiniteDifference) {
  const Potential pot = tilted();
  for (double lambda : {-0.5, 0.0, 0.3}) {
    const auto b = barrier_top(pot, lambda);
    const double h = 1e-4;
    const double fd = -(eval_potential(pot, b.x0 + h, lambda) - 2 * b.vb + eval_potential(pot, b.x0 - h, lambda)) / (h * h);
    EXPECT_NEAR(b.kappa / fd, 1.0, 1e-6);
  }
}

TEST(Potential, DifferenceQuotientIsExact) {
  const Potential pot = tilted();
  for (double s : {1e-1, 1e-3, -0.2}) {
    const double x0 = 0.7, lambda = 0.2;
    const double direct = (eval_potential(pot, x0 + s, lambda) - eval_potential(pot, x0, lambda)) / s;
    EXPECT_NEAR(difference_quotient(pot, x0, s, lambda), direct, 1e-10);
  }
  EXPECT_NEAR(difference_quotient(pot, 0.7, 1e-300, 0.2), potential_dx(pot, 0.7, 0.2), 1e-14);
}

TEST(Potential, SampledReproducesQuartic) {
  const Potential ref = tilted();
  std::vector<double> gx, gl;
  for (int i = 0; i <= 800; ++i) gx.push_back(-2.5 + 5.0 * i / 800);
  for (int j = 0; j <= 20; ++j) gl.push_back(-1.0 + 2.0 * j / 20);
  MatrixXd vals(gl.size(), gx.size());
  for (std::size_t j = 0; j < gl.size(); ++j)
    for (std::size_t i = 0; i < gx.size(); ++i) vals(j, i) = eval_potential(ref, gx[i], gl[j]);
  const Potential pot = sampled(gx, gl, vals);
  EXPECT_NEAR(eval_potential(pot, 0.3, 0.15), eval_potential(ref, 0.3, 0.15), 1e-5);
  EXPECT_NEAR(potential_dlambda(pot, 0.3, 0.15), potential_dlambda(ref, 0.3, 0.15), 1e-4);
  const auto b = barrier_top(pot, 0.15);
  const auto br = barrier_top(ref, 0.15);
  EXPECT_NEAR(b.x0, br.x0, 1e-4);
  const auto tp = turning_points(pot, -0.5, 0.15);
  const auto tr = turning_points(ref, -0.5, 0.15);
  ASSERT_EQ(tp.size(), tr.size());
  for (std::size_t i = 0; i < tp.size(); ++i) EXPECT_NEAR(tp[i], tr[i], 1e-5);
}

TEST(Potential, HarmonicTurningPoints) {
  const auto tp = turning_points(harmonic(1.0), 1.0, 0.0);
  ASSERT_EQ(tp.size(), 2u);
  EXPECT_NEAR(tp[0], -std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(tp[1], std::sqrt(2.0), 1e-15);
}
