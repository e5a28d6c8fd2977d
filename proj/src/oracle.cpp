#include "qknh/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qknh/error.hpp"

namespace qknh {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

double march_margin(const Potential& pot, double lambda, double energy, double x_t, double dir,
                    const OracleOptions& opts) {
  const double slope = std::max(std::abs(potential_dx(pot, x_t, lambda)), 1e-12);
  const double airy = std::cbrt(pot.hbar * pot.hbar / (2 * pot.mu * slope));
  const double step = airy / 20;
  double integral = 0, x = x_t;
  for (int it = 0; it < 10000000; ++it) {
    if (integral >= opts.penetration && std::abs(x - x_t) >= opts.airy_lengths * airy) break;
    const double mid = x + 0.5 * dir * step;
    integral += std::sqrt(std::max(0.0, 2 * pot.mu * (eval_potential(pot, mid, lambda) - energy))) / pot.hbar * step;
    x += dir * step;
  }
  return x;
}

// WKB exponent of |psi| between the outermost turning point and the boundary on one side.
double tail_exponent(const Potential& pot, double lambda, double energy, double x_t, double x_b) {
  if (x_b == x_t) return 0;
  const int n = 4000;
  const double h = (x_b - x_t) / n;
  double integral = 0;
  for (int i = 0; i < n; ++i) {
    const double x = x_t + (i + 0.5) * h;
    integral += std::sqrt(std::max(0.0, 2 * pot.mu * (eval_potential(pot, x, lambda) - energy)));
  }
  return std::abs(integral * h) / pot.hbar;
}

}  // namespace

GridSpec default_grid(const Potential& pot, double lambda, double e_max, int n_x, const OracleOptions& opts) {
  const auto tp = turning_points(pot, e_max, lambda);
  if (tp.empty()) throw Error(ErrorCode::InvalidArgument, "no turning points; supply an explicit grid");
  GridSpec g;
  g.x_min = march_margin(pot, lambda, e_max, tp.front(), -1.0, opts);
  g.x_max = march_margin(pot, lambda, e_max, tp.back(), 1.0, opts);
  g.n_x = n_x;
  return g;
}

Tridiagonal discretize(const Potential& pot, double lambda, const GridSpec& grid) {
  if (grid.n_x < 200) throw Error(ErrorCode::InvalidArgument, "grid needs at least 200 points");
  if (!(grid.x_max > grid.x_min)) throw Error(ErrorCode::InvalidArgument, "grid domain is empty");
  const double h = (grid.x_max - grid.x_min) / (grid.n_x + 1);
  const double kin = pot.hbar * pot.hbar / (pot.mu * h * h);
  Tridiagonal t;
  t.diag.resize(grid.n_x);
  for (int i = 0; i < grid.n_x; ++i) t.diag(i) = kin + eval_potential(pot, grid.x_min + (i + 1) * h, lambda);
  t.off = -0.5 * kin;
  return t;
}

int sturm_count(const Tridiagonal& t, double sigma) {
  const double e2 = t.off * t.off;
  const double pivmin = std::numeric_limits<double>::min() * std::max(1.0, e2);
  int count = 0;
  double q = t.diag(0) - sigma;
  if (std::abs(q) < pivmin) q = -pivmin;
  if (q < 0) ++count;
  for (Eigen::Index i = 1; i < t.diag.size(); ++i) {
    q = t.diag(i) - sigma - e2 / q;
    if (std::abs(q) < pivmin) q = -pivmin;
    if (q < 0) ++count;
  }
  return count;
}

Eigen::VectorXd tridiagonal_eigenvalues(const Tridiagonal& t, int first, int count) {
  const int n = static_cast<int>(t.diag.size());
  if (first < 0 || count < 0 || first + count > n) throw Error(ErrorCode::InvalidArgument, "eigenvalue index out of range");
  const double radius = 2 * std::abs(t.off);
  const double glo = t.diag.minCoeff() - radius, ghi = t.diag.maxCoeff() + radius;
  Eigen::VectorXd out(count);
  double floor = glo;
  for (int j = 0; j < count; ++j) {
    const int idx = first + j;
    double a = floor, b = ghi;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (a + b);
      if (mid <= a || mid >= b) break;
      if (b - a <= 2 * kEps * std::max(std::abs(a), std::abs(b))) break;
      if (sturm_count(t, mid) <= idx) a = mid;
      else b = mid;
    }
    out(j) = 0.5 * (a + b);
    floor = a;
  }
  return out;
}

double boundary_weight(const Potential& pot, double lambda, const GridSpec& grid, double energy) {
  std::vector<double> tp;
  try {
    tp = turning_points(pot, energy, lambda);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::DegenerateEnergy) throw;
    tp = turning_points(pot, energy * (1 + 1e-7) + 1e-9, lambda);
  }
  if (tp.empty()) return 1.0;
  if (tp.front() <= grid.x_min || tp.back() >= grid.x_max) return 1.0;
  const double left = tail_exponent(pot, lambda, energy, tp.front(), grid.x_min);
  const double right = tail_exponent(pot, lambda, energy, tp.back(), grid.x_max);
  return std::exp(-2.0 * std::min(left, right));
}

Eigen::VectorXd exact_spectrum(const Potential& pot, double lambda, const GridSpec& grid, int count, int first,
                               const OracleOptions& opts) {
  Eigen::VectorXd e = tridiagonal_eigenvalues(discretize(pot, lambda, grid), first, count);
  if (opts.richardson) {
    GridSpec fine = grid;
    fine.n_x = 2 * grid.n_x + 1;
    const Eigen::VectorXd e2 = tridiagonal_eigenvalues(discretize(pot, lambda, fine), first, count);
    e = (4.0 * e2 - e) / 3.0;
  }
  if (count > 0) {
    const double w = boundary_weight(pot, lambda, grid, e(count - 1));
    if (w > opts.tail_tolerance)
      throw Error(ErrorCode::GridTooSmall, "boundary weight " + std::to_string(w) + " exceeds tolerance");
  }
  return e;
}

namespace {

// Minimum of the closest level pair near the node on one fixed grid.
GapScan scan_single(const Potential& pot, const CrossingNode& node, const GridSpec& grid, double lambda_halfwidth,
                    int steps) {
  const Tridiagonal t = discretize(pot, node.lambda, grid);
  // the doublet sits near E_mn, but semiclassical and grid errors exceed its splitting, so take the
  // closest adjacent pair among the levels around E_mn
  const int below = sturm_count(t, node.energy);
  const int first = std::max(0, below - 3);
  const int span = std::min(6, static_cast<int>(t.diag.size()) - first);
  if (span < 2) throw Error(ErrorCode::TrackingLoss, "no level pair near the crossing energy");
  const Eigen::VectorXd nearby = tridiagonal_eigenvalues(t, first, span);
  int lower = first;
  for (int j = 1; j + 1 < span; ++j)
    if (nearby(j + 1) - nearby(j) < nearby(lower - first + 1) - nearby(lower - first)) lower = first + j;
  const double resolution = 64 * kEps * (t.diag.cwiseAbs().maxCoeff() + 2 * std::abs(t.off));

  GapScan best;
  best.gap = std::numeric_limits<double>::infinity();
  best.lower_index = lower;
  auto eval = [&](double l) {
    const Eigen::VectorXd e = tridiagonal_eigenvalues(discretize(pot, l, grid), lower, 2);
    const double g = e(1) - e(0);
    ++best.evaluations;
    if (g < best.gap) {
      best.gap = g;
      best.lambda = l;
      best.energy = 0.5 * (e(0) + e(1));
    }
    return g;
  };
  const double dl = 2 * lambda_halfwidth / steps;
  for (int j = 0; j <= steps; ++j) eval(node.lambda - lambda_halfwidth + j * dl);

  // successive parabolic fits of gap^2, which is quadratic in lambda near an avoided crossing
  double c = best.lambda, d = dl;
  for (int it = 0; it < 8; ++it) {
    const double gm = eval(c - d), g0 = eval(c), gp = eval(c + d);
    const double fm = gm * gm, f0 = g0 * g0, fp = gp * gp;
    const double denom = fp - 2 * f0 + fm;
    if (!(denom > 0)) break;
    c = std::clamp(c - 0.5 * d * (fp - fm) / denom, c - d, c + d);
    d /= 8;
  }
  eval(c);
  if (best.gap < resolution)
    throw Error(ErrorCode::TrackingLoss, "gap " + std::to_string(best.gap) + " below eigensolver resolution");
  return best;
}

}  // namespace

GapScan gap_scan(const Potential& pot, const CrossingNode& node, const GridSpec& grid, double lambda_halfwidth,
                 int steps, const OracleOptions& opts) {
  if (steps < 2 || !(lambda_halfwidth > 0))
    throw Error(ErrorCode::InvalidArgument, "gap scan needs steps >= 2 and a positive halfwidth");
  GapScan coarse = scan_single(pot, node, grid, lambda_halfwidth, steps);
  if (!opts.richardson) return coarse;
  GridSpec fine_grid = grid;
  fine_grid.n_x = 2 * grid.n_x + 1;
  const GapScan fine = scan_single(pot, node, fine_grid, lambda_halfwidth, steps);
  GapScan out = fine;
  out.gap = (4.0 * fine.gap - coarse.gap) / 3.0;
  out.evaluations += coarse.evaluations;
  return out;
}

SpectrumSheet spectrum_sheet(const Potential& pot, const std::vector<double>& lambdas, const GridSpec& grid,
                             int count, const OracleOptions& opts) {
  SpectrumSheet sheet;
  sheet.lambdas = lambdas;
  sheet.energies.resize(static_cast<Eigen::Index>(lambdas.size()), count);
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    sheet.energies.row(static_cast<Eigen::Index>(i)) = exact_spectrum(pot, lambdas[i], grid, count, 0, opts).transpose();
    try {
      sheet.barrier_energy.push_back(barrier_top(pot, lambdas[i]).vb);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoBarrier) throw;
      sheet.barrier_energy.push_back(std::numeric_limits<double>::quiet_NaN());
    }
  }
  return sheet;
}

}  // namespace qknh
