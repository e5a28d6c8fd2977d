#include "qknh/semiclassics.hpp"

#include <cmath>
#include <limits>
#include <map>

#include "qknh/error.hpp"
#include "qknh/special.hpp"

namespace qknh {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Kernel { Action, Inverse, Weighted };

const GaussLegendre<double>& gauss_rule(int order) {
  thread_local std::map<int, GaussLegendre<double>> cache;
  auto it = cache.find(order);
  if (it == cache.end()) it = cache.emplace(order, GaussLegendre<double>(order)).first;
  return it->second;
}

// Integral over [a, b] where sign * (E - V) > 0 in the interior and vanishes at both ends.
// Each half is mapped by x = a + u^2 or x = b - u^2, which removes the square-root endpoint behaviour.
double region_integral(const Potential& pot, double a, double b, double energy, double lambda, double sign,
                       Kernel kernel, const SemiclassicsOptions& opts) {
  (void)energy;
  const auto& rule = gauss_rule(opts.quadrature.order);
  const int levels = opts.quadrature.grading_levels;
  const double ratio = opts.quadrature.grading_ratio;
  const double mid = 0.5 * (a + b);
  const double two_mu = 2 * pot.mu;

  auto integrand = [&](double u, double g, double x) {
    g = std::max(g, std::numeric_limits<double>::min());
    switch (kernel) {
      case Kernel::Action: return 2 * u * u * std::sqrt(two_mu * g);
      case Kernel::Inverse: return 2 * pot.mu / std::sqrt(two_mu * g);
      case Kernel::Weighted: return 2 * pot.mu * potential_dlambda(pot, x, lambda) / std::sqrt(two_mu * g);
    }
    return 0.0;
  };
  auto left = [&](double u) {
    const double s = u * u;
    return integrand(u, -sign * difference_quotient(pot, a, s, lambda), a + s);
  };
  auto right = [&](double u) {
    const double s = u * u;
    return integrand(u, sign * difference_quotient(pot, b, -s, lambda), b - s);
  };
  return integrate_graded(left, std::sqrt(mid - a), rule, levels, ratio) +
         integrate_graded(right, std::sqrt(b - mid), rule, levels, ratio);
}

struct RawActions {
  Partials s_a, s_c, t_b;
};

RawActions raw_actions(const Potential& pot, double energy, double lambda, bool lambda_integrand,
                       const SemiclassicsOptions& opts) {
  const Regions r = classify_regions(pot, energy, lambda);
  RawActions out;
  auto well = [&](double lo, double hi) {
    Partials p;
    p.value = region_integral(pot, lo, hi, energy, lambda, 1.0, Kernel::Action, opts);
    p.de = region_integral(pot, lo, hi, energy, lambda, 1.0, Kernel::Inverse, opts);
    if (lambda_integrand) p.dl = -region_integral(pot, lo, hi, energy, lambda, 1.0, Kernel::Weighted, opts);
    return p;
  };
  if (r.has_a) out.s_a = well(r.a_lo, r.a_hi);
  if (r.has_c) out.s_c = well(r.c_lo, r.c_hi);
  if (r.has_barrier) {
    out.t_b.value = region_integral(pot, r.b_lo, r.b_hi, energy, lambda, -1.0, Kernel::Action, opts);
    out.t_b.de = -region_integral(pot, r.b_lo, r.b_hi, energy, lambda, -1.0, Kernel::Inverse, opts);
    if (lambda_integrand)
      out.t_b.dl = region_integral(pot, r.b_lo, r.b_hi, energy, lambda, -1.0, Kernel::Weighted, opts);
  } else {
    out.t_b.value = kInf;
  }
  return out;
}

double values_only(const Potential& pot, double energy, double lambda, int which, const SemiclassicsOptions& opts) {
  const Regions r = classify_regions(pot, energy, lambda);
  switch (which) {
    case 0: return r.has_a ? region_integral(pot, r.a_lo, r.a_hi, energy, lambda, 1.0, Kernel::Action, opts) : 0.0;
    case 1: return r.has_c ? region_integral(pot, r.c_lo, r.c_hi, energy, lambda, 1.0, Kernel::Action, opts) : 0.0;
    default:
      return r.has_barrier ? region_integral(pot, r.b_lo, r.b_hi, energy, lambda, -1.0, Kernel::Action, opts) : kInf;
  }
}

}  // namespace

Symbol parse_symbol(const std::string& name) {
  if (name == "S_A") return Symbol::SA;
  if (name == "S_C") return Symbol::SC;
  if (name == "St_A") return Symbol::StA;
  if (name == "St_C") return Symbol::StC;
  if (name == "T_b") return Symbol::Tb;
  throw Error(ErrorCode::UnknownSymbol, "unknown action symbol '" + name + "'");
}

std::string to_string(Symbol s) {
  switch (s) {
    case Symbol::SA: return "S_A";
    case Symbol::SC: return "S_C";
    case Symbol::StA: return "St_A";
    case Symbol::StC: return "St_C";
    case Symbol::Tb: return "T_b";
  }
  return "?";
}

const Partials& ActionTable::operator[](Symbol s) const {
  switch (s) {
    case Symbol::SA: return s_a;
    case Symbol::SC: return s_c;
    case Symbol::StA: return st_a;
    case Symbol::StC: return st_c;
    case Symbol::Tb: return t_b;
  }
  throw Error(ErrorCode::UnknownSymbol, "unknown action symbol");
}

Regions classify_regions(const Potential& pot, double energy, double lambda) {
  const auto tp = turning_points(pot, energy, lambda);
  Regions r{0, 0, 0, 0, 0, 0, false, false, false};
  BarrierInfo bi{};
  bool barrier = true;
  try {
    bi = barrier_top(pot, lambda);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NoBarrier) throw;
    barrier = false;
  }
  if (!barrier) {
    if (tp.size() != 2) throw Error(ErrorCode::InvalidArgument, "energy outside the single-well band");
    r.a_lo = r.c_lo = tp[0];
    r.a_hi = r.c_hi = tp[1];
    r.has_a = r.has_c = true;
    return r;
  }
  if (energy > bi.vb) throw Error(ErrorCode::InvalidArgument, "energy above the barrier top");
  if (tp.size() == 4) {
    r.a_lo = tp[0], r.a_hi = tp[1];
    r.b_lo = tp[1], r.b_hi = tp[2];
    r.c_lo = tp[2], r.c_hi = tp[3];
    r.has_a = r.has_c = r.has_barrier = true;
  } else if (tp.size() == 2) {
    if (tp[1] < bi.x0) {
      r.a_lo = tp[0], r.a_hi = tp[1];
      r.has_a = true;
    } else if (tp[0] > bi.x0) {
      r.c_lo = tp[0], r.c_hi = tp[1];
      r.has_c = true;
    } else {
      r.b_lo = tp[0], r.b_hi = tp[1];
      r.has_barrier = true;
    }
  } else {
    throw Error(ErrorCode::InvalidArgument, "unexpected turning-point count " + std::to_string(tp.size()));
  }
  return r;
}

double well_action(const Potential& pot, double energy, double lambda, Branch side, const SemiclassicsOptions& opts) {
  return values_only(pot, energy, lambda, side == Branch::A ? 0 : 1, opts);
}

double well_period(const Potential& pot, double energy, double lambda, Branch side, const SemiclassicsOptions& opts) {
  const Regions r = classify_regions(pot, energy, lambda);
  if (side == Branch::A)
    return r.has_a ? region_integral(pot, r.a_lo, r.a_hi, energy, lambda, 1.0, Kernel::Inverse, opts) : 0.0;
  return r.has_c ? region_integral(pot, r.c_lo, r.c_hi, energy, lambda, 1.0, Kernel::Inverse, opts) : 0.0;
}

double tunneling_action(const Potential& pot, double energy, double lambda, const SemiclassicsOptions& opts) {
  return values_only(pot, energy, lambda, 2, opts);
}

double barrier_phase(const Potential& pot, double energy, double lambda, const SemiclassicsOptions& opts) {
  return phase_correction(tunneling_action(pot, energy, lambda, opts) / (kPi * pot.hbar));
}

double corrected_action(const Potential& pot, double energy, double lambda, Branch side,
                        const SemiclassicsOptions& opts) {
  return well_action(pot, energy, lambda, side, opts) - 0.5 * pot.hbar * barrier_phase(pot, energy, lambda, opts);
}

ActionValues action_values(const Potential& pot, double energy, double lambda, const SemiclassicsOptions& opts) {
  const Regions r = classify_regions(pot, energy, lambda);
  ActionValues v;
  if (r.has_a) v.s_a = region_integral(pot, r.a_lo, r.a_hi, energy, lambda, 1.0, Kernel::Action, opts);
  if (r.has_c) v.s_c = region_integral(pot, r.c_lo, r.c_hi, energy, lambda, 1.0, Kernel::Action, opts);
  v.t_b = r.has_barrier ? region_integral(pot, r.b_lo, r.b_hi, energy, lambda, -1.0, Kernel::Action, opts) : kInf;
  v.phi = phase_correction(v.t_b / (kPi * pot.hbar));
  v.st_a = v.s_a - 0.5 * pot.hbar * v.phi;
  v.st_c = v.s_c - 0.5 * pot.hbar * v.phi;
  return v;
}

ActionTable action_derivatives(const Potential& pot, double energy, double lambda, const SemiclassicsOptions& opts) {
  const bool integrand = opts.lambda_scheme == LambdaScheme::Integrand;
  RawActions raw = raw_actions(pot, energy, lambda, integrand, opts);

  if (!integrand) {
    const double h = opts.lambda_step * pot.sweep.scale;
    double acc[3] = {0, 0, 0};
    const double weights[4] = {1, -8, 8, -1};
    const double offsets[4] = {-2, -1, 1, 2};
    for (int k = 0; k < 4; ++k) {
      const ActionValues v = action_values(pot, energy, lambda + offsets[k] * h, opts);
      acc[0] += weights[k] * v.s_a;
      acc[1] += weights[k] * v.s_c;
      if (std::isfinite(raw.t_b.value)) acc[2] += weights[k] * v.t_b;
    }
    raw.s_a.dl = acc[0] / (12 * h);
    raw.s_c.dl = acc[1] / (12 * h);
    raw.t_b.dl = std::isfinite(raw.t_b.value) ? acc[2] / (12 * h) : 0.0;
  }

  ActionTable t;
  t.energy = energy;
  t.lambda = lambda;
  t.s_a = raw.s_a;
  t.s_c = raw.s_c;
  t.t_b = raw.t_b;
  if (std::isfinite(raw.t_b.value)) {
    const double scale = kPi * pot.hbar;
    const double y = raw.t_b.value / scale;
    const double dphi = phase_correction_derivative(y);
    t.phi.value = phase_correction(y);
    t.phi.de = dphi * raw.t_b.de / scale;
    t.phi.dl = dphi * raw.t_b.dl / scale;
  }
  auto corrected = [&](const Partials& s) {
    return Partials{s.value - 0.5 * pot.hbar * t.phi.value, s.de - 0.5 * pot.hbar * t.phi.de,
                    s.dl - 0.5 * pot.hbar * t.phi.dl};
  };
  t.st_a = corrected(t.s_a);
  t.st_c = corrected(t.s_c);
  return t;
}

double bracket(const Partials& f, const Partials& g) { return f.de * g.dl - g.de * f.dl; }

double bracket(const ActionTable& table, Symbol f, Symbol g) { return bracket(table[f], table[g]); }

}  // namespace qknh
