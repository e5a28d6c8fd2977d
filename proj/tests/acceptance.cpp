#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "qknh/error.hpp"
#include "qknh/knh.hpp"
#include "qknh/lznet.hpp"
#include "qknh/oracle.hpp"

using namespace qknh;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof buf, f, args);
  va_end(args);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

SyntheticLattice reference_lattice() { return SyntheticLattice{}; }

Potential tilted(double hbar) { return quartic_double_well(1.0, {4.0, 0.5}, {0.0, 1.0}, 1.0, hbar); }

Outcome strong_reproduction() {
  const auto t0 = std::chrono::steady_clock::now();
  const EnsembleSetup s = ensemble_setup(reference_lattice(), 10, 80);
  EvolveOptions opts;
  opts.n_c_max = 80;
  const EvolutionResult r = evolve_incoherent(s.network, s.initial_a_lines, opts);
  const double dt = seconds_since(t0);
  const bool ok = std::abs(r.p_minus - 0.4) < 1e-3 && std::abs(r.p_plus - 0.6) < 1e-3 && dt < 1.0;
  return {ok, fmt("p- = %.6f, p+ = %.6f, %.3f s", r.p_minus, r.p_plus, dt)};
}

Outcome coherent_agreement() {
  const auto t0 = std::chrono::steady_clock::now();
  const EnsembleSetup s = ensemble_setup(reference_lattice(), 10, 80);
  const SweepStatistics st = sweep_realizations(s.network, s.initial_a_lines, 1000, 20240601, {}, 4);
  const double dt = seconds_since(t0);
  const double d = classify_levels(reference_lattice(), 1e-3).width;
  const double bound = (d + 1) / 10.0;
  double worst = 0;
  for (double p : st.p_minus) worst = std::max(worst, std::abs(p - 0.4));
  const double z = std::abs(st.mean - st.incoherent_p_minus) / st.std_error;
  const bool ok = z < 3 && worst <= bound && dt < 30.0;
  return {ok, fmt("mean %.5f vs incoherent %.5f (%.2f sigma), worst |p- - 0.4| = %.4f <= %.3f, %.1f s", st.mean,
                  st.incoherent_p_minus, z, worst, bound, dt)};
}

Outcome zone_width_check() {
  const double d = classify_levels(reference_lattice(), 1e-3).width;
  return {d >= 8 && d <= 14, fmt("D = %.4f", d)};
}

Outcome weak_scaling() {
  std::vector<double> spread;
  std::string detail;
  bool ok = true;
  for (int m : {20, 40, 80}) {
    const EnsembleSetup s = ensemble_setup(reference_lattice(), m, 80 + 2 * m);
    EvolveOptions opts;
    opts.n_c_max = 80 + 2 * m;
    const SweepStatistics st = sweep_realizations(s.network, s.initial_a_lines, 200, 4242, opts, 4);
    ok = ok && std::abs(st.incoherent_p_minus - 0.4) < 1e-3;
    if (!spread.empty()) ok = ok && st.stddev < spread.back();
    spread.push_back(st.stddev);
    detail += fmt("%sM=%d: p- = %.5f, std = %.5f", detail.empty() ? "" : "; ", m, st.incoherent_p_minus, st.stddev);
  }
  return {ok, detail};
}

Outcome gap_correspondence() {
  const auto t0 = std::chrono::steady_clock::now();
  const Potential pot = tilted(0.1);
  const CrossingLattice lat = crossing_lattice(pot, -0.25, 0.25, -2.0, -0.4);
  std::vector<const CrossingNode*> nodes;
  for (const auto& n : lat.nodes)
    if (std::exp(-2 * n.table.t_b.value / pot.hbar) <= 1e-3) nodes.push_back(&n);
  std::sort(nodes.begin(), nodes.end(), [](const CrossingNode* a, const CrossingNode* b) {
    return std::abs(a->m) + std::abs(a->n) < std::abs(b->m) + std::abs(b->n);
  });
  if (nodes.size() > 4) nodes.resize(4);
  int good = 0;
  std::string detail;
  for (const CrossingNode* n : nodes) {
    const GridSpec grid = default_grid(pot, n->lambda, -0.4);
    const GapScan g = gap_scan(pot, *n, grid, 0.02, 10);
    const double ratio = g.gap / (pot.hbar * gap_parameter(n->table, pot.hbar));
    if (ratio >= 0.85 && ratio <= 1.15) ++good;
    detail += fmt("(%d,%d) %.4f ", n->m, n->n, ratio);
  }
  const double dt = seconds_since(t0);
  return {good >= 3 && dt < 120, fmt("%d/%zu nodes in range: %s, %.1f s", good, nodes.size(), detail.c_str(), dt)};
}

double bohr_sommerfeld_error(double hbar) {
  const Potential pot = tilted(hbar);
  const double lambda = 0.07;
  const auto levels = branch_levels(pot, lambda, Branch::A, -3.6, -1.5);
  const GridSpec grid = default_grid(pot, lambda, -1.4);
  const Tridiagonal tri = discretize(pot, lambda, grid);
  double total = 0;
  for (double target : {-3.0, -2.75, -2.5, -2.25, -2.0}) {
    std::size_t k = 1;
    for (std::size_t j = 1; j + 1 < levels.size(); ++j)
      if (std::abs(levels[j].energy - target) < std::abs(levels[k].energy - target)) k = j;
    const double e = levels[k].energy;
    const double spacing = 0.5 * (levels[k + 1].energy - levels[k - 1].energy);
    const int first = std::max(0, sturm_count(tri, e) - 2);
    const Eigen::VectorXd near = exact_spectrum(pot, lambda, grid, 4, first);
    double best = std::abs(near(0) - e);
    for (Eigen::Index j = 1; j < near.size(); ++j) best = std::min(best, std::abs(near(j) - e));
    total += best / spacing;
  }
  return total / 5;
}

Outcome bohr_sommerfeld() {
  const double e1 = bohr_sommerfeld_error(0.1), e2 = bohr_sommerfeld_error(0.05), e3 = bohr_sommerfeld_error(0.025);
  const double r1 = e1 / e2, r2 = e2 / e3;
  const bool ok = r1 >= 1.4 && r1 <= 2.6 && r2 >= 1.4 && r2 <= 2.6;
  return {ok, fmt("error/spacing %.3e, %.3e, %.3e; ratios %.3f, %.3f", e1, e2, e3, r1, r2)};
}

Outcome lattice_regularity_check() {
  std::vector<double> scaled;
  std::string detail;
  for (double h : {0.1, 0.05, 0.025}) {
    const RegularityReport r = lattice_regularity(tilted(h), -1.0, 0.0, 5);
    scaled.push_back(std::max(r.max_energy_error, r.max_lambda_error) / (h * h));
    detail += fmt("hbar=%.3f: err/hbar^2 = %.4f (%d nodes); ", h, scaled.back(), r.nodes);
  }
  const auto [lo, hi] = std::minmax_element(scaled.begin(), scaled.end());
  return {*hi / *lo <= 2.0, detail + fmt("spread %.3f", *hi / *lo)};
}

double unitarity_error(const Matrix2c<double>& u) {
  return (u.adjoint() * u - Matrix2c<double>::Identity()).cwiseAbs().maxCoeff();
}

Outcome invariants() {
  std::vector<std::string> failed;
  auto check = [&](bool ok, const char* name) {
    if (!ok) failed.push_back(name);
  };

  const PhaseSource src{99};
  double unit = 0;
  for (int m = -30; m <= 30; ++m)
    for (int n = -30; n <= 30; ++n) {
      const auto ph = src.phases(m, n, 0);
      unit = std::max(unit, unitarity_error(crossing_unitary(transmission_from_log_q(lattice_log_q(reference_lattice(), m, n)),
                                                             ph[0], ph[1], ph[2])));
    }
  check(unit <= 1e-14, "unitarity");

  const EnsembleSetup s = ensemble_setup(reference_lattice(), 10, 80);
  double norm = 0;
  for (std::uint64_t r = 0; r < 20; ++r)
    for (const auto& step : evolve_unitary(s.network, s.initial_a_lines, src, r).trajectory)
      norm = std::max(norm, step.norm_error);
  check(norm <= 1e-12, "norm");

  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> u(-3, 3);
  bool sums = true, rows = true;
  for (int i = 0; i < 2000; ++i) {
    LatticeParams p;
    p.x = u(gen), p.y = u(gen), p.de_st_a = std::abs(u(gen)) + 0.1, p.de_st_c = std::abs(u(gen)) + 0.1;
    p.bracket = u(gen);
    const double denom = p.x * p.de_st_a + p.y * p.de_st_c;
    if (std::abs(denom) < 1e-3 || std::abs(p.bracket) < 1e-3) continue;
    p.big_gamma = p.bracket / (kPi * 0.1 * denom);
    p.k = p.de_st_a / (p.de_st_a + p.de_st_c);
    const GrowthRates g = growth_rates(p);
    sums = sums && (g.d_a + g.d_c) + g.d_b == 0.0;
    try {
      const TransitionMap map = knh_predict(p);
      for (int r = 0; r < 3; ++r) rows = rows && std::abs(map.row(r).sum() - 1) <= 1e-12;
    } catch (const Error&) {
    }
  }
  check(sums, "growth-rate sum");
  check(rows, "stochastic rows");

  bool anti = true;
  const Potential pot = tilted(0.1);
  for (double e : {-1.6, -1.2, -0.8})
    for (double l : {-0.1, 0.0, 0.15}) {
      const ActionTable t = action_derivatives(pot, e, l);
      const Symbol all[] = {Symbol::SA, Symbol::SC, Symbol::StA, Symbol::StC, Symbol::Tb};
      for (Symbol f : all)
        for (Symbol g : all) anti = anti && bracket(t, f, g) == -bracket(t, g, f);
    }
  check(anti, "bracket antisymmetry");

  double resid = 0;
  for (double l : {-0.1, 0.0, 0.1}) {
    const double rate = rate_for_separatrix(pot, -1.0, 0.0);
    const double es = separatrix_energy(pot, l, rate);
    resid = std::max(resid, std::abs(diabatic_probability(pot, es, l, rate) - std::exp(-1.0)));
  }
  check(resid < 1e-10, "P(E_s) = 1/e");

  SyntheticLattice toy;
  toy.z = 0.7;
  toy.m_lo = toy.m_hi = 0;
  toy.n_lo = 0, toy.n_hi = 1;
  const Network net = schedule(toy, 0, 1);
  EvolveOptions opts;
  opts.early_stop = false;
  opts.overflow_tolerance = 2;
  const EvolutionResult inc = evolve_incoherent(net, {0}, opts);
  PhaseSource fixed;
  fixed.mode = PhaseMode::Fixed;
  const int g = 8;
  Eigen::MatrixXd avg = Eigen::MatrixXd::Zero(net.line_count(), 1);
  long count = 0;
  for (int i = 0; i < g * g * g * g * g * g; ++i) {
    int rest = i;
    std::array<double, 6> ph{};
    for (double& v : ph) v = 2 * kPi * (rest % g) / g, rest /= g;
    fixed.fixed[{0, 0}] = {ph[0], ph[1], ph[2]};
    fixed.fixed[{0, 1}] = {ph[3], ph[4], ph[5]};
    avg += evolve_unitary(net, {0}, fixed, 0, opts).final_probability;
    ++count;
  }
  avg /= static_cast<double>(count);
  const double dev = (avg - inc.final_probability).cwiseAbs().maxCoeff();
  check(net.columns.size() == 2 && dev < 1e-3, "phase average");

  std::string detail = fmt("unitarity %.1e, norm %.1e, P(E_s) residual %.1e, phase-average %.1e", unit, norm, resid, dev);
  for (const auto& f : failed) detail += "; FAILED " + f;
  return {failed.empty(), detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"strong theorem reproduction", strong_reproduction},
      {"coherent/incoherent agreement", coherent_agreement},
      {"zone width", zone_width_check},
      {"weak theorem scaling", weak_scaling},
      {"gap correspondence", gap_correspondence},
      {"Bohr-Sommerfeld accuracy", bohr_sommerfeld},
      {"lattice regularity", lattice_regularity_check},
      {"invariant suite", invariants},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
