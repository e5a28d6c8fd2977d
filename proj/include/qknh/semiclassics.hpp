#ifndef QKNH_SEMICLASSICS_HPP
#define QKNH_SEMICLASSICS_HPP

#include <string>

#include "qknh/potential.hpp"
#include "qknh/quadrature.hpp"

namespace qknh {

enum class LambdaScheme { CentralDifference, Integrand };

struct SemiclassicsOptions {
  QuadratureOptions quadrature;
  double lambda_step = 1e-4;  // in units of the sweep's lambda scale
  LambdaScheme lambda_scheme = LambdaScheme::CentralDifference;
};

/// A quantity with its partial derivatives in E and lambda.
struct Partials {
  double value = 0;
  double de = 0;
  double dl = 0;
};

enum class Symbol { SA, SC, StA, StC, Tb };

Symbol parse_symbol(const std::string& name);
std::string to_string(Symbol s);

struct ActionTable {
  double energy = 0;
  double lambda = 0;
  Partials s_a, s_c;
  Partials t_b;
  Partials phi;
  Partials st_a, st_c;

  const Partials& operator[](Symbol s) const;
};

/// Allowed/forbidden intervals at energy E. A well that is absent has lo == hi.
/// When E lies below the second well, the barrier extends to infinity (T_b = inf).
struct Regions {
  double a_lo, a_hi;
  double c_lo, c_hi;
  double b_lo, b_hi;
  bool has_a, has_c, has_barrier;
};

Regions classify_regions(const Potential& pot, double energy, double lambda);

double well_action(const Potential& pot, double energy, double lambda, Branch side,
                   const SemiclassicsOptions& opts = {});
/// dS/dE: the period integral of the well.
double well_period(const Potential& pot, double energy, double lambda, Branch side,
                   const SemiclassicsOptions& opts = {});
double tunneling_action(const Potential& pot, double energy, double lambda,
                        const SemiclassicsOptions& opts = {});
double barrier_phase(const Potential& pot, double energy, double lambda,
                     const SemiclassicsOptions& opts = {});
double corrected_action(const Potential& pot, double energy, double lambda, Branch side,
                        const SemiclassicsOptions& opts = {});

struct ActionValues {
  double s_a = 0, s_c = 0;
  double t_b = 0;
  double phi = 0;
  double st_a = 0, st_c = 0;
};

/// All action values at one point from a single turning-point solve.
ActionValues action_values(const Potential& pot, double energy, double lambda, const SemiclassicsOptions& opts = {});

ActionTable action_derivatives(const Potential& pot, double energy, double lambda,
                               const SemiclassicsOptions& opts = {});

/// [F, G] = dF/dE dG/dlambda - dG/dE dF/dlambda
double bracket(const ActionTable& table, Symbol f, Symbol g);
double bracket(const Partials& f, const Partials& g);

}  // namespace qknh

#endif  // QKNH_SEMICLASSICS_HPP
