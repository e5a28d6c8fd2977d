#include "qknh/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qknh/error.hpp"
#include "qknh/roots.hpp"

namespace qknh {

namespace {

constexpr double kEdgeTolerance = 1e-8;

double side_minimum(const Potential& pot, double lambda, Branch side) {
  const auto minima = well_minima(pot, lambda);
  if (minima.empty()) throw Error(ErrorCode::NoBarrier, "potential has no well");
  const double x = side == Branch::A ? minima.front() : minima.back();
  return eval_potential(pot, x, lambda);
}

bool has_barrier(const Potential& pot, double lambda, BarrierInfo& out) {
  try {
    out = barrier_top(pot, lambda);
    return true;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NoBarrier) throw;
    return false;
  }
}

// Clamp [e_lo, e_hi] to the band where the requested levels are defined.
std::pair<double, double> clamp_window(const Potential& pot, double lambda, double e_lo, double e_hi, double floor) {
  if (!(e_lo < e_hi)) throw Error(ErrorCode::InvalidArgument, "energy window must have e_lo < e_hi");
  const double tol = kEdgeTolerance * energy_scale(pot, lambda);
  BarrierInfo bi{};
  if (has_barrier(pot, lambda, bi)) {
    if (e_hi > bi.vb + tol) throw Error(ErrorCode::InvalidArgument, "energy window extends above the barrier top");
    e_hi = std::min(e_hi, bi.vb - tol);
  }
  e_lo = std::max(e_lo, floor + tol);
  return {e_lo, e_hi};
}

double corrected(const ActionValues& v, Branch side) { return side == Branch::A ? v.st_a : v.st_c; }

}  // namespace

std::vector<BranchLevel> branch_levels(const Potential& pot, double lambda, Branch side, double e_lo, double e_hi,
                                       int offset, const SpectrumOptions& opts) {
  const auto [lo, hi] = clamp_window(pot, lambda, e_lo, e_hi, side_minimum(pot, lambda, side));
  const double unit = kPi * pot.hbar;
  auto f = [&](double e) { return corrected(action_values(pot, e, lambda, opts.semi), side) / unit - 0.5; };
  std::vector<BranchLevel> out;
  if (lo >= hi) throw Error(ErrorCode::EmptyWindow, "energy window lies outside the well");
  const double f_lo = f(lo), f_hi = f(hi);
  const int k_min = static_cast<int>(std::ceil(f_lo));
  const int k_max = static_cast<int>(std::floor(f_hi));
  if (k_max < k_min) throw Error(ErrorCode::EmptyWindow, "no branch level inside the energy window");
  const double xtol = 1e-14 * energy_scale(pot, lambda);
  double a = lo, fa = f_lo;
  for (int k = k_min; k <= k_max; ++k) {
    auto g = [&](double e) { return f(e) - k; };
    const auto root = brent(g, a, hi, fa - k, f_hi - k, xtol);
    const ActionTable t = action_derivatives(pot, root.x, lambda, opts.semi);
    const Partials& s = side == Branch::A ? t.st_a : t.st_c;
    out.push_back({side, k - offset, lambda, root.x, -s.dl / s.de});
    a = root.x;
    fa = root.fx + k;
  }
  return out;
}

double quantization_function(const Potential& pot, double energy, double lambda, const SpectrumOptions& opts) {
  const ActionValues v = action_values(pot, energy, lambda, opts.semi);
  const double a = v.st_a / pot.hbar, b = v.st_c / pot.hbar;
  const double s = std::sqrt(1.0 + std::exp(-2.0 * v.t_b / pot.hbar));
  return std::cos(a - b) + s * std::cos(a + b);
}

std::vector<double> modified_levels(const Potential& pot, double lambda, double e_lo, double e_hi,
                                    const SpectrumOptions& opts) {
  double floor = std::numeric_limits<double>::infinity();
  for (double x : well_minima(pot, lambda)) floor = std::min(floor, eval_potential(pot, x, lambda));
  const auto [lo, hi] = clamp_window(pot, lambda, e_lo, e_hi, floor);
  const auto [ext_lo, ext_hi] = [&] {
    const double mid = 0.5 * (lo + hi);
    double period = std::max(well_period(pot, mid, lambda, Branch::A, opts.semi),
                             well_period(pot, mid, lambda, Branch::C, opts.semi));
    const double pad = 2.0 * kPi * pot.hbar / period;
    double top = hi + pad;
    BarrierInfo bi{};
    if (has_barrier(pot, lambda, bi)) top = std::min(top, bi.vb);
    return clamp_window(pot, lambda, std::max(floor, lo - pad), top, floor);
  }();

  struct Point {
    double e;
    Branch b;
  };
  std::vector<Point> pts;
  for (Branch side : {Branch::A, Branch::C}) {
    const double smin = side_minimum(pot, lambda, side);
    if (smin >= ext_hi) continue;
    try {
      for (const auto& lv : branch_levels(pot, lambda, side, std::max(ext_lo, smin), ext_hi, 0, opts))
        pts.push_back({lv.energy, side});
    } catch (const Error& e) {
      if (e.code() != ErrorCode::EmptyWindow) throw;
    }
  }
  std::sort(pts.begin(), pts.end(), [](const Point& p, const Point& q) { return p.e < q.e; });

  auto g = [&](double e) { return quantization_function(pot, e, lambda, opts); };
  const double xtol = 1e-14 * energy_scale(pot, lambda);
  std::vector<double> roots;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double left = i == 0 ? ext_lo : 0.5 * (pts[i - 1].e + pts[i].e);
    const double right = i + 1 == pts.size() ? ext_hi : 0.5 * (pts[i].e + pts[i + 1].e);
    const double gl = g(left), gr = g(right);
    if ((gl < 0) != (gr < 0)) {
      roots.push_back(brent(g, left, right, gl, gr, xtol).x);
      continue;
    }
    // fine scan; a pair closer than the solver can separate falls back to the branch level itself
    bool found = false;
    const int steps = 64;
    double a = left, ga = gl;
    for (int j = 1; j <= steps && !found; ++j) {
      const double b = left + (right - left) * j / steps;
      const double gb = g(b);
      if ((ga < 0) != (gb < 0)) {
        roots.push_back(brent(g, a, b, ga, gb, xtol).x);
        found = true;
      }
      a = b;
      ga = gb;
    }
    if (!found) roots.push_back(pts[i].e);
  }
  std::vector<double> out;
  for (double e : roots)
    if (e >= lo && e <= hi) out.push_back(e);
  std::sort(out.begin(), out.end());
  if (out.empty()) throw Error(ErrorCode::EmptyWindow, "no modified level inside the energy window");
  return out;
}

Eigen::Vector2d lattice_step(const ActionTable& t, double hbar, int m, int n) {
  const double b = bracket(t.st_a, t.st_c);
  const double u = kPi * hbar;
  return {u * (m * t.st_c.dl - n * t.st_a.dl) / b, u * (n * t.st_a.de - m * t.st_c.de) / b};
}

double gap_parameter(const ActionTable& t, double hbar) {
  return std::exp(-t.t_b.value / hbar) / std::sqrt(t.s_a.de * t.s_c.de);
}

double min_gap(const CrossingNode& node) { return node.gap; }

double log_exponent(const ActionTable& t, double hbar, double rate) {
  const double b = std::abs(bracket(t.st_a, t.st_c));
  return std::log(kPi * hbar) - 2.0 * t.t_b.value / hbar - std::log(rate * b);
}

double diabatic_probability(const ActionTable& t, double hbar, double rate) {
  return std::exp(-std::exp(log_exponent(t, hbar, rate)));
}

double diabatic_probability(const Potential& pot, double energy, double lambda, double rate,
                            const SpectrumOptions& opts) {
  if (!(rate > 0)) throw Error(ErrorCode::InvalidArgument, "sweep rate must be positive");
  return diabatic_probability(action_derivatives(pot, energy, lambda, opts.semi), pot.hbar, rate);
}

LatticeParams params_from_table(const ActionTable& t, double hbar, double rate) {
  LatticeParams p;
  p.e00 = t.energy;
  p.lambda00 = t.lambda;
  p.bracket = bracket(t.st_a, t.st_c);
  p.x = -2.0 * kPi * bracket(t.t_b, t.st_c) / p.bracket;
  p.y = 2.0 * kPi * bracket(t.t_b, t.st_a) / p.bracket;
  p.z = std::exp(log_exponent(t, hbar, rate));
  p.de_st_a = t.st_a.de;
  p.de_st_c = t.st_c.de;
  p.big_gamma = p.bracket / (kPi * hbar * (p.x * p.de_st_a + p.y * p.de_st_c));
  p.k = p.de_st_a / (p.de_st_a + p.de_st_c);
  p.rate = rate;
  return p;
}

LatticeParams local_params(const Potential& pot, double energy, double lambda, double rate,
                           const SpectrumOptions& opts) {
  if (!(rate > 0)) throw Error(ErrorCode::InvalidArgument, "sweep rate must be positive");
  return params_from_table(action_derivatives(pot, energy, lambda, opts.semi), pot.hbar, rate);
}

LatticeParams local_params(const Potential& pot, const CrossingNode& node, double rate, const SpectrumOptions& opts) {
  return local_params(pot, node.energy, node.lambda, rate, opts);
}

double separatrix_energy(const Potential& pot, double lambda, double rate, const SpectrumOptions& opts) {
  if (!(rate > 0)) throw Error(ErrorCode::InvalidArgument, "sweep rate must be positive");
  const BarrierInfo bi = barrier_top(pot, lambda);
  const double scale = energy_scale(pot, lambda);
  const double eps = 1e-6 * scale;
  const double lo = upper_well_minimum(pot, lambda) + eps;
  const double hi = bi.vb - eps;
  auto f = [&](double e) {
    try {
      return log_exponent(action_derivatives(pot, e, lambda, opts.semi), pot.hbar, rate);
    } catch (const Error&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  };
  const int steps = 64;
  double a = lo, fa = f(lo);
  for (int j = 1; j <= steps; ++j) {
    const double b = lo + (hi - lo) * j / steps;
    const double fb = f(b);
    if (std::isfinite(fa) && std::isfinite(fb) && (fa < 0) != (fb < 0))
      return brent(f, a, b, fa, fb, 1e-15 * scale).x;
    a = b;
    fa = fb;
  }
  throw Error(ErrorCode::NoRoot, "no quantum separatrix below the barrier at lambda = " + std::to_string(lambda));
}

double rate_for_separatrix(const Potential& pot, double energy, double lambda, const SpectrumOptions& opts) {
  const ActionTable t = action_derivatives(pot, energy, lambda, opts.semi);
  return kPi * pot.hbar * std::exp(-2.0 * t.t_b.value / pot.hbar) / std::abs(bracket(t.st_a, t.st_c));
}

std::pair<int, int> label_offsets(const Potential& pot, double energy, double lambda, const SpectrumOptions& opts) {
  const ActionValues v = action_values(pot, energy, lambda, opts.semi);
  const double u = kPi * pot.hbar;
  return {static_cast<int>(std::lround(v.st_a / u - 0.5)), static_cast<int>(std::lround(v.st_c / u - 0.5))};
}

CrossingNode solve_crossing(const Potential& pot, int m_raw, int n_raw, double e_seed, double lambda_seed,
                            const SpectrumOptions& opts) {
  const double u = kPi * pot.hbar;
  const double ta = (m_raw + 0.5) * u, tc = (n_raw + 0.5) * u;
  double e = e_seed, l = lambda_seed;
  ActionTable t = action_derivatives(pot, e, l, opts.semi);
  Eigen::Vector2d r((t.st_a.value - ta) / u, (t.st_c.value - tc) / u);
  for (int it = 0; it < opts.newton_max_iter; ++it) {
    if (r.norm() < opts.newton_tolerance) break;
    Eigen::Matrix2d jac;
    jac << t.st_a.de, t.st_a.dl, t.st_c.de, t.st_c.dl;
    const Eigen::Vector2d step = -jac.partialPivLu().solve(r * u);
    double damping = 1.0;
    bool accepted = false;
    for (int h = 0; h < 12 && !accepted; ++h, damping *= 0.5) {
      try {
        const ActionTable trial = action_derivatives(pot, e + damping * step(0), l + damping * step(1), opts.semi);
        const Eigen::Vector2d rt((trial.st_a.value - ta) / u, (trial.st_c.value - tc) / u);
        if (rt.allFinite() && rt.norm() < r.norm()) {
          e += damping * step(0);
          l += damping * step(1);
          t = trial;
          r = rt;
          accepted = true;
        }
      } catch (const Error&) {
      }
    }
    if (!accepted) break;
  }
  if (!(r.norm() < opts.newton_tolerance))
    throw Error(ErrorCode::NonConvergence, "crossing (" + std::to_string(m_raw) + ", " + std::to_string(n_raw) +
                                               ") did not converge, residual " + std::to_string(r.norm()));
  CrossingNode node;
  node.m_raw = m_raw;
  node.n_raw = n_raw;
  node.energy = e;
  node.lambda = l;
  node.time = (l - pot.sweep.lambda0) / pot.sweep.rate;
  node.gamma = gap_parameter(t, pot.hbar);
  node.gap = pot.hbar * node.gamma;
  node.log_q = log_exponent(t, pot.hbar, pot.sweep.rate);
  node.probability = std::exp(-std::exp(node.log_q));
  node.table = t;
  return node;
}

CrossingLattice crossing_lattice(const Potential& pot, double lambda_lo, double lambda_hi, double e_lo, double e_hi,
                                 const SpectrumOptions& opts) {
  if (!(lambda_lo < lambda_hi) || !(e_lo < e_hi))
    throw Error(ErrorCode::InvalidArgument, "crossing window must be non-empty");
  const double u = kPi * pot.hbar;
  const double lc = 0.5 * (lambda_lo + lambda_hi), ec = 0.5 * (e_lo + e_hi);
  const ActionTable centre = action_derivatives(pot, ec, lc, opts.semi);

  double a_min = std::numeric_limits<double>::infinity(), a_max = -a_min, c_min = a_min, c_max = -a_min;
  for (double l : {lambda_lo, lambda_hi})
    for (double e : {e_lo, e_hi}) {
      const ActionValues v = action_values(pot, e, l, opts.semi);
      a_min = std::min(a_min, v.st_a / u - 0.5);
      a_max = std::max(a_max, v.st_a / u - 0.5);
      c_min = std::min(c_min, v.st_c / u - 0.5);
      c_max = std::max(c_max, v.st_c / u - 0.5);
    }

  CrossingLattice out;
  Eigen::Matrix2d jac;
  jac << centre.st_a.de, centre.st_a.dl, centre.st_c.de, centre.st_c.dl;
  const auto lu = jac.partialPivLu();
  const double e_margin = 0.1 * (e_hi - e_lo), l_margin = 0.1 * (lambda_hi - lambda_lo);
  for (int m = static_cast<int>(std::floor(a_min)); m <= static_cast<int>(std::ceil(a_max)); ++m) {
    for (int n = static_cast<int>(std::floor(c_min)); n <= static_cast<int>(std::ceil(c_max)); ++n) {
      const Eigen::Vector2d rhs((m + 0.5) * u - centre.st_a.value, (n + 0.5) * u - centre.st_c.value);
      const Eigen::Vector2d d = lu.solve(rhs);
      const double es = ec + d(0), ls = lc + d(1);
      if (es < e_lo - e_margin || es > e_hi + e_margin || ls < lambda_lo - l_margin || ls > lambda_hi + l_margin)
        continue;
      try {
        CrossingNode node = solve_crossing(pot, m, n, es, ls, opts);
        if (node.energy >= e_lo && node.energy <= e_hi && node.lambda >= lambda_lo && node.lambda <= lambda_hi)
          out.nodes.push_back(node);
      } catch (const Error& err) {
        out.failures.push_back({m, n, err.what()});
      }
    }
  }
  if (out.nodes.empty()) throw Error(ErrorCode::EmptyWindow, "no crossing inside the window");

  const CrossingNode* origin = &out.nodes.front();
  for (const auto& node : out.nodes) {
    const double d = std::abs(node.log_q), d0 = std::abs(origin->log_q);
    if (d < d0 - 1e-12 || (std::abs(d - d0) <= 1e-12 && node.energy < origin->energy)) origin = &node;
  }
  out.m0 = origin->m_raw;
  out.n0 = origin->n_raw;
  out.origin_energy = origin->energy;
  out.origin_lambda = origin->lambda;
  for (auto& node : out.nodes) {
    node.m = node.m_raw - out.m0;
    node.n = node.n_raw - out.n0;
  }
  std::sort(out.nodes.begin(), out.nodes.end(), [](const CrossingNode& a, const CrossingNode& b) {
    return a.m != b.m ? a.m < b.m : a.n < b.n;
  });
  return out;
}

RegularityReport lattice_regularity(const Potential& pot, double energy, double lambda, int radius,
                                    const SpectrumOptions& opts) {
  const auto [m0, n0] = label_offsets(pot, energy, lambda, opts);
  const CrossingNode origin = solve_crossing(pot, m0, n0, energy, lambda, opts);
  RegularityReport out;
  for (int m = -radius; m <= radius; ++m)
    for (int n = -radius; n <= radius; ++n) {
      const Eigen::Vector2d d = lattice_step(origin.table, pot.hbar, m, n);
      const double e = origin.energy + d(0), l = origin.lambda + d(1);
      try {
        const CrossingNode node = solve_crossing(pot, m0 + m, n0 + n, e, l, opts);
        out.max_energy_error = std::max(out.max_energy_error, std::abs(node.energy - e));
        out.max_lambda_error = std::max(out.max_lambda_error, std::abs(node.lambda - l));
        ++out.nodes;
      } catch (const Error&) {
        ++out.failures;
      }
    }
  return out;
}

}  // namespace qknh
