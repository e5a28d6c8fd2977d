#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "qknh/error.hpp"
#include "qknh/knh.hpp"
#include "qknh/lznet.hpp"

using namespace qknh;

namespace {

template <typename F>
bool throws_code(ErrorCode code, F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code() == code;
  }
  return false;
}

LatticeParams make_params(double x, double y, double sa = 1.0, double sc = 1.0, double bracket = 1.0,
                          double hbar = 0.1) {
  LatticeParams p;
  p.x = x, p.y = y;
  p.de_st_a = sa, p.de_st_c = sc;
  p.bracket = bracket;
  p.big_gamma = bracket / (kPi * hbar * (x * sa + y * sc));
  p.k = sa / (sa + sc);
  return p;
}

void expect_stochastic(const TransitionMap& map) {
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(map.row(i).sum(), 1.0, 1e-12);
    for (int j = 0; j < 3; ++j) {
      EXPECT_GE(map(i, j), 0.0);
      EXPECT_LE(map(i, j), 1.0);
    }
  }
}

// Direct construction of the points a..e in (n, m) coordinates; returns K = (e - d).(1, 1).
double lattice_count_k(double m, double d, double x, double y, double sa, double sc) {
  const Eigen::Vector2d a(m * x / y, 0.0);
  const Eigen::Vector2d b(0.0, m);
  const Eigen::Vector2d sep(x, -y);
  const Eigen::Vector2d lam(sc, sa);
  const Eigen::Vector2d dvec = a + d / (sc + sa) * lam;
  // c on bc: b + s (1, 0) and on cd: dvec + t sep
  Eigen::Matrix2d lhs;
  lhs << 1.0, -sep(0), 0.0, -sep(1);
  const Eigen::Vector2d st = lhs.partialPivLu().solve(dvec - b);
  const Eigen::Vector2d c = b + st(0) * Eigen::Vector2d(1, 0);
  // e on ce: c + v (1, -1) and on ae: a + u lam
  lhs << 1.0, -lam(0), -1.0, -lam(1);
  const Eigen::Vector2d vu = lhs.partialPivLu().solve(a - c);
  const Eigen::Vector2d e = c + vu(0) * Eigen::Vector2d(1, -1);
  EXPECT_NEAR((e - (a + vu(1) * lam)).norm(), 0.0, 1e-9);
  EXPECT_NEAR((dvec - a).sum(), d, 1e-9);
  return (e - dvec).sum();
}

// Phase-space area of one well bounded by E = V_b, by cosine-substituted Simpson integration.
double well_area(const Potential& pot, double lambda, double side) {
  const BarrierInfo bi = barrier_top(pot, lambda);
  auto excess = [&](double x) { return bi.vb - eval_potential(pot, x, lambda); };
  double inner = bi.x0 + side * 1e-3, outer = bi.x0 + side;
  while (excess(outer) > 0) outer = bi.x0 + 2 * (outer - bi.x0);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (inner + outer);
    (excess(mid) > 0 ? inner : outer) = mid;
  }
  const double x1 = 0.5 * (inner + outer);
  const int n = 4000;
  double sum = 0;
  for (int k = 0; k <= n; ++k) {
    const double th = kPi * k / n;
    const double x = bi.x0 + (x1 - bi.x0) * 0.5 * (1 - std::cos(th));
    const double w = (k == 0 || k == n) ? 1 : (k % 2 ? 4 : 2);
    const double f = std::sqrt(std::max(0.0, 2 * pot.mu * excess(x))) * 0.5 * std::abs(x1 - bi.x0) * std::sin(th);
    sum += w * f;
  }
  return sum * kPi / n / 3;
}

}  // namespace

TEST(GrowthRates, SumToZeroExactly) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(-3, 3), s(0.1, 4);
  for (int k = 0; k < 500; ++k) {
    const GrowthRates g = growth_rates(make_params(u(gen), u(gen), s(gen), s(gen), u(gen)));
    EXPECT_EQ(g.d_a + g.d_c + g.d_b, 0.0);
  }
}

TEST(GrowthRates, ShrinkingAWhenYAboveXAboveZero) {
  const GrowthRates g = growth_rates(make_params(0.5, 1.25));
  EXPECT_GT(g.big_gamma, 0.0);
  EXPECT_EQ(g.tag(), "(-,+,+)");
  EXPECT_DOUBLE_EQ(g.d_a, -g.big_gamma * 1.25);
  EXPECT_DOUBLE_EQ(g.d_c, g.big_gamma * 0.5);
}

TEST(GrowthRates, SymmetricSlopeGamma) {
  ActionTable t;
  const double s = 0.7, hbar = 0.05;
  t.st_a = {1.0, s, -0.3};
  t.st_c = {2.0, s, 0.9};
  t.t_b = {1.5, -0.8, 0.4};
  const LatticeParams p = params_from_table(t, hbar, 1e-3);
  const double br = s * 0.9 - s * (-0.3);
  EXPECT_NEAR(p.bracket, br, 1e-15);
  EXPECT_NEAR(p.big_gamma, br / (kPi * hbar * s * (p.x + p.y)), 1e-12 * std::abs(p.big_gamma));
  EXPECT_DOUBLE_EQ(p.k, 0.5);
  EXPECT_NEAR(growth_rates(p).big_gamma, p.big_gamma, 0.0);
}

TEST(GrowthRates, Degenerate) {
  EXPECT_TRUE(throws_code(ErrorCode::DegenerateCase, [] { growth_rates(make_params(0.0, 0.0)); }));
  EXPECT_TRUE(throws_code(ErrorCode::DegenerateCase, [] { growth_rates(make_params(1.0, -1.0)); }));
}

TEST(KnhPredict, ReferenceLattice) {
  const TransitionMap map = knh_predict(make_params(0.5, 1.25));
  const int a = static_cast<int>(Subspace::A), b = static_cast<int>(Subspace::B), c = static_cast<int>(Subspace::C);
  EXPECT_NEAR(map(a, c), 0.4, 1e-15);
  EXPECT_NEAR(map(a, b), 0.6, 1e-15);
  EXPECT_EQ(map(b, b), 1.0);
  EXPECT_EQ(map(c, c), 1.0);
}

TEST(KnhPredict, OnlyBGrowing) {
  const TransitionMap map = knh_predict(make_params(-0.5, 1.25, 1.0, 3.0));
  ASSERT_GT(growth_rates(make_params(-0.5, 1.25, 1.0, 3.0)).big_gamma, 0.0);
  EXPECT_EQ(map(0, 1), 1.0);
  EXPECT_EQ(map(2, 1), 1.0);
  EXPECT_EQ(map(1, 1), 1.0);
}

TEST(KnhPredict, XAboveY) {
  // Gamma > 0: A and B shrink into C
  TransitionMap map = knh_predict(make_params(1.25, 0.5));
  EXPECT_EQ(map(0, 2), 1.0);
  EXPECT_EQ(map(1, 2), 1.0);
  // Gamma < 0: C shrinks and splits between A and B with weights Y/X and 1 - Y/X
  map = knh_predict(make_params(1.25, 0.5, 1.0, 1.0, -1.0));
  EXPECT_NEAR(map(2, 0), 0.4, 1e-15);
  EXPECT_NEAR(map(2, 1), 0.6, 1e-15);
  EXPECT_EQ(map(0, 0), 1.0);
}

TEST(KnhPredict, StochasticForEverySignPattern) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> mag(0.05, 3), s(0.1, 3);
  int patterns[2][2][2][2] = {};
  for (int k = 0; k < 2000; ++k) {
    const double x = mag(gen) * (gen() % 2 ? 1 : -1);
    const double y = mag(gen) * (gen() % 2 ? 1 : -1);
    const double br = gen() % 2 ? 1.0 : -1.0;
    const LatticeParams p = make_params(x, y, s(gen), s(gen), br);
    if (!std::isfinite(p.big_gamma)) continue;
    const TransitionMap map = knh_predict(p);
    expect_stochastic(map);
    patterns[x > 0][y > 0][y > x][br > 0] = 1;
  }
  int seen = 0;
  for (auto& a : patterns)
    for (auto& b : a)
      for (auto& c : b)
        for (int v : c) seen += v;
  EXPECT_EQ(seen, 12);  // y > x is forced whenever x and y differ in sign
}

TEST(TransitionMap, AllGrowingIsIdentity) {
  const TransitionMap map = transition_map({1.0, 2.0, 3.0});
  EXPECT_TRUE(map.isIdentity());
  const LatticeParams p = make_params(0.5, 1.25);
  EXPECT_NO_THROW(knh_predict(p));
}

TEST(Geometry, ReferenceLatticeNumbers) {
  const GeometrySummary g = subspace_geometry(10, 10, make_params(0.5, 1.25));
  EXPECT_EQ(g.n, 4);
  EXPECT_NEAR(g.delta_n, 0.0, 1e-12);
  EXPECT_DOUBLE_EQ(g.k, 0.5);
  EXPECT_EQ(g.big_k, 3);
  EXPECT_NEAR(g.delta_k, 0.0, 1e-12);
  EXPECT_TRUE(throws_code(ErrorCode::InvalidArgument, [] { subspace_geometry(10, 10, make_params(1.25, 0.5)); }));
  EXPECT_TRUE(throws_code(ErrorCode::InvalidArgument, [] { subspace_geometry(0, 10, make_params(0.5, 1.25)); }));
}

TEST(Geometry, ClosedFormsMatchPointConstruction) {
  std::mt19937_64 gen(19);
  std::uniform_real_distribution<double> ratio(0.05, 0.95), ys(0.2, 3), slope(0.1, 5), width(0, 20);
  std::uniform_int_distribution<int> ms(1, 400);
  for (int k = 0; k < 50; ++k) {
    const double y = ys(gen), x = ratio(gen) * y, sa = slope(gen), sc = slope(gen), d = width(gen);
    const int m = ms(gen);
    const LatticeParams p = make_params(x, y, sa, sc);
    const GeometrySummary g = subspace_geometry(m, d, p);
    const double k_direct = lattice_count_k(m, d, x, y, sa, sc);
    EXPECT_NEAR(g.big_k - g.delta_k, k_direct, 1e-9 * std::max(1.0, std::abs(k_direct)));
    EXPECT_NEAR(g.n - g.delta_n, m * x / y, 1e-12 * m);
    EXPECT_LE(std::abs(g.delta_n), 0.5);
    EXPECT_LE(std::abs(g.delta_k), 0.5);
    EXPECT_LE(std::abs(g.big_k + g.n + d - m), d + 2);
  }
}

TEST(WeakBounds, Examples) {
  const LatticeParams p = make_params(0.5, 1.25);
  Interval i = weak_bounds(10, 10, p);
  EXPECT_EQ(i.lo, 0.0);
  EXPECT_EQ(i.hi, 1.0);
  i = weak_bounds(1000, 10, p);
  EXPECT_NEAR(i.hi - i.lo, 0.022, 1e-12);
  EXPECT_NEAR(0.5 * (i.lo + i.hi), 0.4, 1e-12);
  i = weak_bounds(100, 0, p);
  EXPECT_NEAR(i.lo, 0.39, 1e-12);
  EXPECT_NEAR(i.hi, 0.41, 1e-12);
  EXPECT_TRUE(throws_code(ErrorCode::InvalidArgument, [&] { weak_bounds(0, 1, p); }));
}

TEST(StrongPredictionTest, Examples) {
  StrongPrediction s = strong_prediction(make_params(0.5, 1.25), 1e-9);
  EXPECT_EQ(s.q, 2);
  EXPECT_EQ(s.p, 5);
  EXPECT_DOUBLE_EQ(s.value, 0.4);
  ASSERT_EQ(s.ensemble_sizes.size(), 50u);
  EXPECT_EQ(s.ensemble_sizes[4], 10);
  s = strong_prediction(make_params(1.0, 2.0), 1e-12);
  EXPECT_EQ(s.q, 1);
  EXPECT_EQ(s.p, 2);
  EXPECT_TRUE(throws_code(ErrorCode::InvalidArgument, [] { strong_prediction(make_params(1.0, 0.5), 1e-3); }));
}

TEST(StrongPredictionTest, InverseRootTwoAgreesWithExhaustiveScan) {
  const double v = 1 / std::sqrt(2.0), tol = 1e-4;
  long best_q = 0, best_p = 0;
  for (long p = 1; p <= 1000 && best_p == 0; ++p)
    for (long q = 1; q < p; ++q)
      if (std::abs(v - static_cast<double>(q) / p) < tol) {
        best_q = q, best_p = p;
        break;
      }
  const StrongPrediction s = strong_prediction(make_params(v, 1.0), tol);
  EXPECT_EQ(s.q, best_q);
  EXPECT_EQ(s.p, best_p);
  EXPECT_EQ(s.q, 70);
  EXPECT_EQ(s.p, 99);
}

TEST(StrongPredictionTest, AgreesWithScanForRandomRatios) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  for (int k = 0; k < 100; ++k) {
    const double v = u(gen), tol = 1e-3;
    long best_p = 0;
    for (long p = 1; p <= 1000 && best_p == 0; ++p)
      for (long q = 1; q < p; ++q)
        if (std::abs(v - static_cast<double>(q) / p) < tol) {
          best_p = p;
          break;
        }
    EXPECT_EQ(strong_prediction(make_params(v, 1.0), tol).p, best_p) << v;
  }
}

TEST(Convergents, GoldenRatio) {
  const auto cf = convergents((std::sqrt(5.0) - 1) / 2, 10);
  ASSERT_GE(cf.size(), 6u);
  EXPECT_EQ(cf[5], std::make_pair(5L, 8L));
}

TEST(EndToEnd, IncoherentMatchesStrongAndWeakPredictions) {
  const LatticeParams p = make_params(0.5, 1.25);
  const StrongPrediction strong = strong_prediction(p, 1e-9);
  const double d = zone_width(0.5, 1.25, 1.0, 1e-3);
  for (int m : {5, 7, 10, 13, 20, 31}) {
    const EnsembleSetup s = ensemble_setup(SyntheticLattice{}, m, 120);
    const EvolutionResult res = evolve_incoherent(s.network, s.initial_a_lines);
    const Interval w = weak_bounds(m, d, p);
    EXPECT_GE(res.p_minus, w.lo) << m;
    EXPECT_LE(res.p_minus, w.hi) << m;
    if (m % strong.q == 0) EXPECT_NEAR(res.p_minus, strong.value, 1e-3) << m;
  }
}

TEST(ClassicalKnh, SymmetricDeepeningSplitsEvenly) {
  const Potential pot = quartic_double_well(1.0, {4.0, 1.0}, {0.0}, 1.0, 0.1);
  const ClassicalKnh k = classical_knh(pot, 0.0);
  EXPECT_NEAR(k.rates[0], k.rates[2], 1e-8);
  EXPECT_GT(k.rates[0], 0.0);
  EXPECT_NEAR(k.map(1, 0), 0.5, 1e-8);
  EXPECT_NEAR(k.map(1, 2), 0.5, 1e-8);
  EXPECT_TRUE(k.case_violation);
  EXPECT_TRUE(throws_code(ErrorCode::CaseViolation, [&] { classical_knh(pot, 0.0, {}, true); }));
}

TEST(ClassicalKnh, TiltAgreesWithFiniteDifferenceOracle) {
  const Potential pot = quartic_double_well(1.0, {4.0, -0.5}, {0.0, -1.0}, 1.0, 0.1);
  const double lambda = 0.5, h = 1e-3;
  const ClassicalKnh k = classical_knh(pot, lambda, {}, true);
  const double da = (well_area(pot, lambda + h, -1) - well_area(pot, lambda - h, -1)) / (2 * h);
  const double dc = (well_area(pot, lambda + h, 1) - well_area(pot, lambda - h, 1)) / (2 * h);
  EXPECT_LT(da, 0.0);
  EXPECT_GT(dc, 0.0);
  EXPECT_NEAR(k.rates[0], da, 1e-4 * std::abs(da));
  EXPECT_NEAR(k.rates[2], dc, 1e-4 * std::abs(dc));
  EXPECT_NEAR(k.probability, -dc / da, 1e-4);
  EXPECT_FALSE(k.case_violation);
  expect_stochastic(k.map);
  EXPECT_NEAR(k.map(0, 2), k.probability, 1e-12);
}

TEST(ClassicalKnh, SingleGrowingRegionTakesEverything) {
  const Potential pot = quartic_double_well(1.0, {4.0, 0.5}, {0.0, 1.0}, 1.0, 0.1);
  const ClassicalKnh k = classical_knh(pot, 0.0);
  ASSERT_GT(k.rates[0], 0.0);
  ASSERT_LT(k.rates[1], 0.0);
  ASSERT_LT(k.rates[2], 0.0);
  EXPECT_EQ(k.map(1, 0), 1.0);
  EXPECT_EQ(k.map(2, 0), 1.0);
  EXPECT_NEAR(k.rates[0] + k.rates[1] + k.rates[2], 0.0, 1e-15);
}
