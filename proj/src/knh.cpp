#include "qknh/knh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qknh/error.hpp"
#include "qknh/quadrature.hpp"
#include "qknh/roots.hpp"

namespace qknh {

namespace {

int sign_of(double v, double tol) { return v > tol ? 1 : (v < -tol ? -1 : 0); }

// Root of V(x) = V_b on the outer side of the well that starts from x_near and extends in direction dir.
double outer_root(const Potential& pot, double lambda, double vb, double x_near, double dir) {
  auto f = [&](double x) { return eval_potential(pot, x, lambda) - vb; };
  double step = 1e-6 * std::max(1.0, std::abs(x_near));
  double far = x_near + dir * step;
  for (int it = 0; f(far) <= 0; ++it) {
    if (it > 200) throw Error(ErrorCode::NoRoot, "well is not bounded at the barrier energy");
    step *= 2;
    far = x_near + dir * step;
  }
  const double a = std::min(x_near, far), b = std::max(x_near, far);
  return brent(f, a, b, 1e-14 * std::max(1.0, std::abs(x_near))).x;
}

}  // namespace

TransitionMap transition_map(const std::array<double, 3>& rates, double tolerance) {
  TransitionMap map = TransitionMap::Identity();
  double growing = 0;
  for (double r : rates)
    if (r > tolerance) growing += r;
  if (!(growing > 0)) return map;
  for (int i = 0; i < 3; ++i) {
    if (!(rates[static_cast<std::size_t>(i)] < -tolerance)) continue;
    map.row(i).setZero();
    for (int j = 0; j < 3; ++j)
      if (rates[static_cast<std::size_t>(j)] > tolerance) map(i, j) = rates[static_cast<std::size_t>(j)] / growing;
  }
  return map;
}

std::array<double, 2> separatrix_areas(const Potential& pot, double lambda, const SemiclassicsOptions& opts) {
  const BarrierInfo bi = barrier_top(pot, lambda);
  const double scale = energy_scale(pot, lambda);
  const auto tp = turning_points(pot, bi.vb - 1e-6 * scale, lambda);
  if (tp.size() != 4) throw Error(ErrorCode::InvalidArgument, "separatrix does not enclose two wells");
  const double x1 = outer_root(pot, lambda, bi.vb, tp.front(), -1.0);
  const double x4 = outer_root(pot, lambda, bi.vb, tp.back(), 1.0);

  const GaussLegendre<double> rule(opts.quadrature.order);
  const double two_mu = 2 * pot.mu;
  // x = x_t + dir u^2 removes the square root at the outer turning point; the barrier end is smooth.
  auto area = [&](double x_t, double dir) {
    const double u_max = std::sqrt(std::abs(bi.x0 - x_t));
    auto f = [&](double u) {
      const double x = x_t + dir * u * u;
      return 2 * u * std::sqrt(std::max(0.0, two_mu * (bi.vb - eval_potential(pot, x, lambda))));
    };
    const int panels = 16;
    double sum = 0;
    for (int k = 0; k < panels; ++k) sum += rule.integrate(f, u_max * k / panels, u_max * (k + 1) / panels);
    return sum;
  };
  return {area(x1, 1.0), area(x4, -1.0)};
}

ClassicalKnh classical_knh(const Potential& pot, double lambda, const SemiclassicsOptions& opts, bool strict) {
  const double h = opts.lambda_step * pot.sweep.scale;
  const double weights[4] = {1, -8, 8, -1};
  const double offsets[4] = {-2, -1, 1, 2};
  double da = 0, dc = 0;
  for (int k = 0; k < 4; ++k) {
    const auto s = separatrix_areas(pot, lambda + offsets[k] * h, opts);
    da += weights[k] * s[0];
    dc += weights[k] * s[1];
  }
  da /= 12 * h;
  dc /= 12 * h;

  ClassicalKnh out;
  out.rates = {da, -(da + dc), dc};
  const double tol = 1e-12 * std::max(std::abs(da), std::abs(dc));
  out.map = transition_map(out.rates, tol);
  const double ratio = -dc / da;
  out.case_violation = !(da < -tol) || !(ratio >= 0 && ratio <= 1);
  out.probability = std::isfinite(ratio) ? std::clamp(ratio, 0.0, 1.0) : 0.0;
  if (strict && out.case_violation)
    throw Error(ErrorCode::CaseViolation, "A is not shrinking into growing B and C (dS_A/dl = " + std::to_string(da) +
                                              ", dS_C/dl = " + std::to_string(dc) + ")");
  return out;
}

std::string GrowthRates::tag() const {
  std::string s = "(";
  for (std::size_t i = 0; i < 3; ++i) {
    s += signs[i] > 0 ? '+' : (signs[i] < 0 ? '-' : '0');
    s += i < 2 ? "," : ")";
  }
  return s;
}

GrowthRates growth_rates(const LatticeParams& params, double tolerance) {
  if (std::abs(params.x) <= tolerance && std::abs(params.y) <= tolerance)
    throw Error(ErrorCode::DegenerateCase, "X = Y = 0");
  if (!std::isfinite(params.big_gamma)) throw Error(ErrorCode::DegenerateCase, "X dE St_A + Y dE St_C vanishes");
  GrowthRates g;
  g.big_gamma = params.big_gamma;
  g.d_a = -params.big_gamma * params.y;
  g.d_c = params.big_gamma * params.x;
  g.d_b = -(g.d_a + g.d_c);
  const double tol = tolerance * std::max(std::abs(g.d_a), std::abs(g.d_c));
  g.signs = {sign_of(g.d_a, tol), sign_of(g.d_b, tol), sign_of(g.d_c, tol)};
  return g;
}

TransitionMap knh_predict(const LatticeParams& params) {
  const GrowthRates g = growth_rates(params);
  if (std::none_of(g.signs.begin(), g.signs.end(), [](int s) { return s < 0; }))
    throw Error(ErrorCode::AllGrowing, "no subspace shrinks " + g.tag());
  const double tol = 1e-14 * std::max(std::abs(g.d_a), std::abs(g.d_c));
  return transition_map({g.d_a, g.d_b, g.d_c}, tol);
}

GeometrySummary subspace_geometry(int ensemble_size, double zone_width, const LatticeParams& params) {
  if (ensemble_size < 1 || !(zone_width >= 0)) throw Error(ErrorCode::InvalidArgument, "need M >= 1 and D >= 0");
  if (!(params.y > params.x && params.x > 0)) throw Error(ErrorCode::InvalidArgument, "geometry needs Y > X > 0");
  const double ratio = params.x / params.y;
  GeometrySummary g;
  g.m = ensemble_size;
  g.d = zone_width;
  g.k = params.k;
  const double n_exact = ensemble_size * ratio;
  const double k_exact = (ensemble_size - params.k * zone_width) * (1 - ratio);
  g.n = static_cast<int>(std::lround(n_exact));
  g.big_k = static_cast<int>(std::lround(k_exact));
  g.delta_n = g.n - n_exact;
  g.delta_k = g.big_k - k_exact;
  return g;
}

Interval weak_bounds(int ensemble_size, double zone_width, const LatticeParams& params) {
  if (ensemble_size < 1) throw Error(ErrorCode::InvalidArgument, "M must be positive");
  const double ratio = params.x / params.y;
  const double half = (zone_width + 1) / ensemble_size;
  return {std::max(0.0, ratio - half), std::min(1.0, ratio + half)};
}

std::vector<std::pair<long, long>> convergents(double value, int max_terms) {
  std::vector<std::pair<long, long>> out;
  long h0 = 1, h1 = 0, k0 = 0, k1 = 1;
  double x = value;
  for (int i = 0; i < max_terms; ++i) {
    const double a = std::floor(x);
    if (a > 1e12) break;
    const long ai = static_cast<long>(a);
    const long h = ai * h0 + h1, k = ai * k0 + k1;
    out.emplace_back(h, k);
    h1 = h0, h0 = h, k1 = k0, k0 = k;
    const double frac = x - a;
    if (frac < 1e-15) break;
    x = 1 / frac;
  }
  return out;
}

StrongPrediction strong_prediction(const LatticeParams& params, double tol, int max_ensemble) {
  if (!(params.x > 0 && params.y > params.x)) throw Error(ErrorCode::InvalidArgument, "strong prediction needs 0 < X < Y");
  if (!(tol > 0)) throw Error(ErrorCode::InvalidArgument, "tolerance must be positive");
  const double v = params.x / params.y;
  StrongPrediction out;
  out.value = v;

  // best approximations in order of growing denominator: each convergent is preceded by its semiconvergents
  const auto cf = convergents(v);
  long h_prev = 1, k_prev = 0;  // convergent -1
  long h_prev2 = 0, k_prev2 = 1;  // convergent -2
  bool found = false;
  for (const auto& [h, k] : cf) {
    const long a = k_prev != 0 ? (k - k_prev2) / k_prev : 0;
    for (long j = 1; j < a && !found; ++j) {
      const long hs = h_prev2 + j * h_prev, ks = k_prev2 + j * k_prev;
      if (hs > 0 && std::abs(v - static_cast<double>(hs) / ks) < tol) out.q = hs, out.p = ks, found = true;
    }
    if (!found && h > 0 && std::abs(v - static_cast<double>(h) / k) < tol) out.q = h, out.p = k, found = true;
    if (found) break;
    h_prev2 = h_prev, k_prev2 = k_prev;
    h_prev = h, k_prev = k;
  }
  if (!found) throw Error(ErrorCode::NonConvergence, "no rational approximation within tolerance");
  for (long m = out.q; m <= max_ensemble; m += out.q) out.ensemble_sizes.push_back(static_cast<int>(m));
  return out;
}

}  // namespace qknh
