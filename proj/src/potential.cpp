#include "qknh/potential.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "qknh/error.hpp"
#include "qknh/roots.hpp"

namespace qknh {

namespace {

constexpr double kDegenerateTolerance = 1e-9;
constexpr double kRootTolerance = 1e-12;

struct Cubic {
  double left;
  double c0, c1, c2, c3;

  double value(double x) const {
    const double t = x - left;
    return c0 + t * (c1 + t * (c2 + t * c3));
  }
  double slope(double x) const {
    const double t = x - left;
    return c1 + t * (2 * c2 + 3 * t * c3);
  }
  double curvature(double x) const { return 2 * c2 + 6 * c3 * (x - left); }
};

std::array<double, 4> catmull_rom_weights(double t) {
  const double t2 = t * t, t3 = t2 * t;
  return {0.5 * (-t3 + 2 * t2 - t), 0.5 * (3 * t3 - 5 * t2 + 2), 0.5 * (-3 * t3 + 4 * t2 + t),
          0.5 * (t3 - t2)};
}

std::array<double, 4> catmull_rom_weight_derivatives(double t) {
  const double t2 = t * t;
  return {0.5 * (-3 * t2 + 4 * t - 1), 0.5 * (9 * t2 - 10 * t), 0.5 * (-9 * t2 + 8 * t + 1),
          0.5 * (3 * t2 - 2 * t)};
}

int segment_index(const std::vector<double>& grid, double x) {
  const int n = static_cast<int>(grid.size());
  const double h = (grid.back() - grid.front()) / (n - 1);
  const int k = static_cast<int>(std::floor((x - grid.front()) / h));
  return std::clamp(k, 0, n - 2);
}

// Cubic on the x-segment containing x, with data blended across lambda nodes using
// `weights` (either the Catmull-Rom weights or their lambda derivatives).
Cubic sampled_cubic(const Potential& pot, double x, double lambda, bool dlambda) {
  const auto& gl = pot.grid_lambda;
  const int nl = static_cast<int>(gl.size());
  std::array<int, 4> rows{0, 0, 0, 0};
  std::array<double, 4> w{1, 0, 0, 0};
  if (nl == 1) {
    if (dlambda) w = {0, 0, 0, 0};
  } else {
    const int i = segment_index(gl, lambda);
    const double hl = (gl.back() - gl.front()) / (nl - 1);
    const double t = (lambda - gl[i]) / hl;
    for (int j = 0; j < 4; ++j) rows[j] = std::clamp(i - 1 + j, 0, nl - 1);
    w = dlambda ? catmull_rom_weight_derivatives(t) : catmull_rom_weights(t);
    if (dlambda)
      for (double& wj : w) wj /= hl;
  }
  const auto& gx = pot.grid_x;
  const int k = segment_index(gx, x);
  const double h = gx[k + 1] - gx[k];
  double y0 = 0, y1 = 0, m0 = 0, m1 = 0;
  for (int j = 0; j < 4; ++j) {
    if (w[j] == 0.0) continue;
    y0 += w[j] * pot.values(rows[j], k);
    y1 += w[j] * pot.values(rows[j], k + 1);
    m0 += w[j] * pot.curvatures(rows[j], k);
    m1 += w[j] * pot.curvatures(rows[j], k + 1);
  }
  return {gx[k], y0, (y1 - y0) / h - h * (2 * m0 + m1) / 6, m0 / 2, (m1 - m0) / (6 * h)};
}

// Natural cubic spline second derivatives on a uniform grid (Thomas algorithm).
Eigen::VectorXd natural_spline_curvatures(const Eigen::VectorXd& y, double h) {
  const Eigen::Index n = y.size();
  Eigen::VectorXd m = Eigen::VectorXd::Zero(n);
  if (n < 3) return m;
  const Eigen::Index k = n - 2;
  Eigen::VectorXd c(k), d(k);
  for (Eigen::Index i = 0; i < k; ++i) d(i) = 6.0 * (y(i + 2) - 2 * y(i + 1) + y(i)) / (h * h);
  // tridiagonal (1, 4, 1)
  c(0) = 1.0 / 4.0;
  d(0) /= 4.0;
  for (Eigen::Index i = 1; i < k; ++i) {
    const double denom = 4.0 - c(i - 1);
    c(i) = 1.0 / denom;
    d(i) = (d(i) - d(i - 1)) / denom;
  }
  m(k) = d(k - 1);
  for (Eigen::Index i = k - 2; i >= 0; --i) m(i + 1) = d(i) - c(i) * m(i + 2);
  return m;
}

bool is_uniform(const std::vector<double>& g) {
  if (g.size() < 2) return true;
  const double h = (g.back() - g.front()) / (g.size() - 1);
  for (std::size_t i = 1; i < g.size(); ++i)
    if (std::abs(g[i] - g[i - 1] - h) > 1e-9 * std::abs(h)) return false;
  return h > 0;
}

// Real roots of t^3 + p t + q = 0, sorted.
std::vector<double> depressed_cubic_roots(double p, double q) {
  std::vector<double> roots;
  if (p == 0.0 && q == 0.0) return {0.0};
  const double disc = -(4 * p * p * p + 27 * q * q);
  if (disc > 0) {
    const double r = 2 * std::sqrt(-p / 3);
    const double phi = std::acos(std::clamp(3 * q / (p * r), -1.0, 1.0)) / 3;
    for (int k = 0; k < 3; ++k) roots.push_back(r * std::cos(phi - 2 * kPi * k / 3));
  } else {
    const double s = std::sqrt(std::max(0.0, q * q / 4 + p * p * p / 27));
    roots.push_back(std::cbrt(-q / 2 + s) + std::cbrt(-q / 2 - s));
  }
  std::sort(roots.begin(), roots.end());
  return roots;
}

double polish(const Potential& pot, double x, double lambda, double target, bool on_slope) {
  for (int it = 0; it < 3; ++it) {
    const double f = on_slope ? potential_dx(pot, x, lambda) : eval_potential(pot, x, lambda) - target;
    const double df = on_slope ? potential_dxx(pot, x, lambda) : potential_dx(pot, x, lambda);
    if (df == 0.0) break;
    const double step = f / df;
    if (!std::isfinite(step) || std::abs(step) > 1e-6 * (1 + std::abs(x))) break;
    x -= step;
  }
  return x;
}

}  // namespace

std::string to_string(PotentialFamily family) {
  switch (family) {
    case PotentialFamily::QuarticDoubleWell: return "quartic-double-well";
    case PotentialFamily::Harmonic: return "harmonic";
    case PotentialFamily::Sampled: return "sampled";
  }
  return "unknown";
}

PotentialFamily parse_family(const std::string& name) {
  if (name == "quartic-double-well") return PotentialFamily::QuarticDoubleWell;
  if (name == "harmonic") return PotentialFamily::Harmonic;
  if (name == "sampled") return PotentialFamily::Sampled;
  throw Error(ErrorCode::InvalidArgument, "unknown potential family '" + name + "'");
}

Potential quartic_double_well(double alpha, std::vector<double> beta, std::vector<double> gamma,
                              double mu, double hbar) {
  Potential pot;
  pot.family = PotentialFamily::QuarticDoubleWell;
  pot.alpha = alpha;
  pot.beta = std::move(beta);
  pot.gamma = std::move(gamma);
  pot.mu = mu;
  pot.hbar = hbar;
  check_potential(pot);
  return pot;
}

Potential harmonic(double stiffness, double center, double offset, double mu, double hbar) {
  Potential pot;
  pot.family = PotentialFamily::Harmonic;
  pot.stiffness = stiffness;
  pot.center = center;
  pot.offset = offset;
  pot.mu = mu;
  pot.hbar = hbar;
  check_potential(pot);
  return pot;
}

Potential sampled(std::vector<double> grid_x, std::vector<double> grid_lambda, MatrixXd values,
                  double mu, double hbar) {
  Potential pot;
  pot.family = PotentialFamily::Sampled;
  pot.grid_x = std::move(grid_x);
  pot.grid_lambda = std::move(grid_lambda);
  pot.values = std::move(values);
  pot.mu = mu;
  pot.hbar = hbar;
  if (pot.grid_x.size() < 4 || pot.grid_lambda.empty())
    throw Error(ErrorCode::InvalidArgument, "sampled potential needs >= 4 x nodes and >= 1 lambda node");
  if (pot.values.rows() != static_cast<Eigen::Index>(pot.grid_lambda.size()) ||
      pot.values.cols() != static_cast<Eigen::Index>(pot.grid_x.size()))
    throw Error(ErrorCode::InvalidArgument, "sampled potential values must be lambda-nodes x x-nodes");
  const double h = (pot.grid_x.back() - pot.grid_x.front()) / (pot.grid_x.size() - 1);
  pot.curvatures.resize(pot.values.rows(), pot.values.cols());
  for (Eigen::Index j = 0; j < pot.values.rows(); ++j)
    pot.curvatures.row(j) = natural_spline_curvatures(pot.values.row(j).transpose(), h).transpose();
  check_potential(pot);
  return pot;
}

void check_potential(const Potential& pot) {
  if (!(pot.mu > 0)) throw Error(ErrorCode::InvalidArgument, "mass must be positive");
  if (!(pot.hbar > 0)) throw Error(ErrorCode::InvalidArgument, "hbar must be positive");
  if (!(pot.sweep.rate > 0)) throw Error(ErrorCode::InvalidArgument, "sweep rate must be positive");
  if (!(pot.sweep.scale > 0)) throw Error(ErrorCode::InvalidArgument, "lambda scale must be positive");
  switch (pot.family) {
    case PotentialFamily::QuarticDoubleWell:
      if (!(pot.alpha > 0)) throw Error(ErrorCode::InvalidArgument, "quartic coefficient alpha must be positive");
      if (pot.beta.empty() || pot.gamma.empty())
        throw Error(ErrorCode::InvalidArgument, "beta and gamma need at least one coefficient");
      break;
    case PotentialFamily::Harmonic:
      break;
    case PotentialFamily::Sampled:
      if (!is_uniform(pot.grid_x) || !is_uniform(pot.grid_lambda))
        throw Error(ErrorCode::InvalidArgument, "sampled grids must be uniform and increasing");
      break;
  }
}

double polynomial(const std::vector<double>& coeffs, double lambda) {
  double acc = 0;
  for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * lambda + *it;
  return acc;
}

double polynomial_derivative(const std::vector<double>& coeffs, double lambda) {
  double acc = 0;
  for (std::size_t k = coeffs.size(); k-- > 1;) acc = acc * lambda + static_cast<double>(k) * coeffs[k];
  return acc;
}

double eval_potential(const Potential& pot, double x, double lambda) {
  switch (pot.family) {
    case PotentialFamily::QuarticDoubleWell: {
      const double x2 = x * x;
      return pot.alpha * x2 * x2 - polynomial(pot.beta, lambda) * x2 + polynomial(pot.gamma, lambda) * x;
    }
    case PotentialFamily::Harmonic: {
      const double d = x - pot.center;
      return pot.offset + 0.5 * pot.stiffness * d * d;
    }
    case PotentialFamily::Sampled:
      return sampled_cubic(pot, x, lambda, false).value(x);
  }
  return 0;
}

double potential_dx(const Potential& pot, double x, double lambda) {
  switch (pot.family) {
    case PotentialFamily::QuarticDoubleWell:
      return 4 * pot.alpha * x * x * x - 2 * polynomial(pot.beta, lambda) * x + polynomial(pot.gamma, lambda);
    case PotentialFamily::Harmonic:
      return pot.stiffness * (x - pot.center);
    case PotentialFamily::Sampled:
      return sampled_cubic(pot, x, lambda, false).slope(x);
  }
  return 0;
}

double potential_dxx(const Potential& pot, double x, double lambda) {
  switch (pot.family) {
    case PotentialFamily::QuarticDoubleWell:
      return 12 * pot.alpha * x * x - 2 * polynomial(pot.beta, lambda);
    case PotentialFamily::Harmonic:
      return pot.stiffness;
    case PotentialFamily::Sampled:
      return sampled_cubic(pot, x, lambda, false).curvature(x);
  }
  return 0;
}

double potential_dlambda(const Potential& pot, double x, double lambda) {
  switch (pot.family) {
    case PotentialFamily::QuarticDoubleWell:
      return -polynomial_derivative(pot.beta, lambda) * x * x + polynomial_derivative(pot.gamma, lambda) * x;
    case PotentialFamily::Harmonic:
      return 0;
    case PotentialFamily::Sampled:
      return sampled_cubic(pot, x, lambda, true).value(x);
  }
  return 0;
}

double difference_quotient(const Potential& pot, double x0, double s, double lambda) {
  switch (pot.family) {
    case PotentialFamily::QuarticDoubleWell: {
      const double b = polynomial(pot.beta, lambda);
      const double g = polynomial(pot.gamma, lambda);
      return pot.alpha * (4 * x0 * x0 * x0 + s * (6 * x0 * x0 + s * (4 * x0 + s))) - b * (2 * x0 + s) + g;
    }
    case PotentialFamily::Harmonic:
      return pot.stiffness * ((x0 - pot.center) + 0.5 * s);
    case PotentialFamily::Sampled: {
      const Cubic cb = sampled_cubic(pot, x0, lambda, false);
      const int k0 = segment_index(pot.grid_x, x0);
      const int k1 = segment_index(pot.grid_x, x0 + s);
      if (k0 != k1 || s == 0.0) {
        if (s == 0.0) return cb.slope(x0);
        return (eval_potential(pot, x0 + s, lambda) - cb.value(x0)) / s;
      }
      const double t = x0 - cb.left;
      // (p(t+s) - p(t)) / s for p = c0 + c1 t + c2 t^2 + c3 t^3
      return cb.c1 + cb.c2 * (2 * t + s) + cb.c3 * (3 * t * t + 3 * t * s + s * s);
    }
  }
  return 0;
}

std::vector<double> critical_points(const Potential& pot, double lambda) {
  std::vector<double> pts;
  switch (pot.family) {
    case PotentialFamily::QuarticDoubleWell: {
      const double b = polynomial(pot.beta, lambda);
      const double g = polynomial(pot.gamma, lambda);
      for (double x : depressed_cubic_roots(-b / (2 * pot.alpha), g / (4 * pot.alpha)))
        pts.push_back(polish(pot, x, lambda, 0.0, true));
      break;
    }
    case PotentialFamily::Harmonic:
      if (pot.stiffness != 0.0) pts.push_back(pot.center);
      break;
    case PotentialFamily::Sampled: {
      const auto& gx = pot.grid_x;
      for (std::size_t k = 0; k + 1 < gx.size(); ++k) {
        const double mid = 0.5 * (gx[k] + gx[k + 1]);
        const Cubic cb = sampled_cubic(pot, mid, lambda, false);
        const double h = gx[k + 1] - gx[k];
        // c1 + 2 c2 t + 3 c3 t^2 = 0 on [0, h)
        const double qa = 3 * cb.c3, qb = 2 * cb.c2, qc = cb.c1;
        std::vector<double> ts;
        if (std::abs(qa) < 1e-300) {
          if (qb != 0.0) ts.push_back(-qc / qb);
        } else {
          const double disc = qb * qb - 4 * qa * qc;
          if (disc >= 0) {
            const double sq = std::sqrt(disc);
            const double q = -0.5 * (qb + std::copysign(sq, qb));
            if (q != 0.0) ts.push_back(q / qa), ts.push_back(qc / q);
            else ts.push_back(0.0);
          }
        }
        for (double t : ts)
          if (t >= 0 && t < h) pts.push_back(gx[k] + t);
      }
      break;
    }
  }
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end(), [](double a, double b) { return std::abs(a - b) < 1e-14; }),
            pts.end());
  return pts;
}

std::vector<double> well_minima(const Potential& pot, double lambda) {
  std::vector<double> minima;
  for (double x : critical_points(pot, lambda))
    if (potential_dxx(pot, x, lambda) > 0) minima.push_back(x);
  return minima;
}

BarrierInfo barrier_top(const Potential& pot, double lambda) {
  const auto pts = critical_points(pot, lambda);
  for (double x : pts) {
    const double curv = potential_dxx(pot, x, lambda);
    if (curv < 0) {
      const bool interior = pot.family == PotentialFamily::Harmonic ||
                            (x > pts.front() && x < pts.back());
      if (interior) return {x, eval_potential(pot, x, lambda), -curv};
    }
  }
  throw Error(ErrorCode::NoBarrier, "no interior maximum at lambda = " + std::to_string(lambda));
}

double upper_well_minimum(const Potential& pot, double lambda) {
  const auto minima = well_minima(pot, lambda);
  if (minima.empty()) throw Error(ErrorCode::NoBarrier, "potential has no minimum");
  double vmax = -std::numeric_limits<double>::infinity();
  for (double x : minima) vmax = std::max(vmax, eval_potential(pot, x, lambda));
  return vmax;
}

double energy_scale(const Potential& pot, double lambda) {
  const auto pts = critical_points(pot, lambda);
  if (pts.empty()) return 1.0;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double x : pts) {
    const double v = eval_potential(pot, x, lambda);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return std::max(1.0, hi - lo);
}

std::vector<double> turning_points(const Potential& pot, double energy, double lambda) {
  const auto crit = critical_points(pot, lambda);
  const double tol = kDegenerateTolerance * energy_scale(pot, lambda);
  for (double x : crit)
    if (std::abs(energy - eval_potential(pot, x, lambda)) < tol)
      throw Error(ErrorCode::DegenerateEnergy,
                  "energy " + std::to_string(energy) + " coincides with a critical value");

  if (pot.family == PotentialFamily::Harmonic) {
    if (pot.stiffness == 0.0) return {};
    const double r2 = 2 * (energy - pot.offset) / pot.stiffness;
    if (r2 < 0) return {};
    const double r = std::sqrt(r2);
    return {pot.center - r, pot.center + r};
  }

  std::vector<double> roots;
  if (pot.family == PotentialFamily::QuarticDoubleWell && polynomial(pot.gamma, lambda) == 0.0) {
    // alpha y^2 - beta y - E = 0 with y = x^2
    const double b = polynomial(pot.beta, lambda);
    const double disc = b * b + 4 * pot.alpha * energy;
    if (disc < 0) throw Error(ErrorCode::InvalidArgument, "energy below the global minimum");
    const double big = (b + std::copysign(std::sqrt(disc), b == 0.0 ? 1.0 : b)) / (2 * pot.alpha);
    const double small = big != 0.0 ? -energy / (pot.alpha * big) : 0.0;
    for (double y : {big, small})
      if (y > 0) roots.push_back(std::sqrt(y)), roots.push_back(-std::sqrt(y));
    std::sort(roots.begin(), roots.end());
    return roots;
  }

  std::vector<double> breaks;
  if (pot.family == PotentialFamily::QuarticDoubleWell) {
    const double b = std::abs(polynomial(pot.beta, lambda));
    const double g = std::abs(polynomial(pot.gamma, lambda));
    const double bound = 1.0 + std::max({b, g, std::abs(energy)}) / pot.alpha;
    breaks.push_back(-bound);
    breaks.insert(breaks.end(), crit.begin(), crit.end());
    breaks.push_back(bound);
  } else {
    const auto& gx = pot.grid_x;
    if (eval_potential(pot, gx.front(), lambda) < energy || eval_potential(pot, gx.back(), lambda) < energy)
      throw Error(ErrorCode::InvalidArgument, "turning point outside the sampled grid");
    breaks = gx;
    breaks.insert(breaks.end(), crit.begin(), crit.end());
    std::sort(breaks.begin(), breaks.end());
  }
  auto f = [&](double x) { return eval_potential(pot, x, lambda) - energy; };
  double fa = f(breaks.front());
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    const double a = breaks[i], b = breaks[i + 1];
    const double fb = f(b);
    if (b > a && ((fa < 0) != (fb < 0)) && fa != 0.0)
      roots.push_back(polish(pot, brent(f, a, b, fa, fb, kRootTolerance).x, lambda, energy, false));
    else if (fb == 0.0 && i + 2 < breaks.size())
      roots.push_back(b);
    fa = fb;
  }
  if (roots.empty() && pot.family == PotentialFamily::QuarticDoubleWell)
    throw Error(ErrorCode::InvalidArgument, "energy below the global minimum");
  std::sort(roots.begin(), roots.end());
  return roots;
}

}  // namespace qknh
