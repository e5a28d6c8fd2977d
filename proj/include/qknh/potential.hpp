#ifndef QKNH_POTENTIAL_HPP
#define QKNH_POTENTIAL_HPP

#include <string>
#include <vector>

#include "qknh/types.hpp"

namespace qknh {

enum class PotentialFamily { QuarticDoubleWell, Harmonic, Sampled };

std::string to_string(PotentialFamily family);
PotentialFamily parse_family(const std::string& name);

/// Affine sweep lambda(t) = lambda0 + rate * t. `scale` sets the finite-difference
/// step for lambda derivatives.
struct Sweep {
  double lambda0 = 0.0;
  double rate = 1.0;
  double scale = 1.0;
};

/// Quartic: V = alpha x^4 - beta(lambda) x^2 + gamma(lambda) x, with beta and gamma
/// polynomials in lambda (ascending coefficients).
/// Harmonic: V = offset + stiffness/2 (x - center)^2; stiffness may be zero or negative.
/// Sampled: values on a uniform x grid at each lambda node (rows = lambda nodes),
/// natural cubic spline in x, Catmull-Rom in lambda.
struct Potential {
  PotentialFamily family = PotentialFamily::QuarticDoubleWell;

  double alpha = 1.0;
  std::vector<double> beta{2.0};
  std::vector<double> gamma{0.0};

  double stiffness = 1.0;
  double center = 0.0;
  double offset = 0.0;

  std::vector<double> grid_x;
  std::vector<double> grid_lambda;
  MatrixXd values;
  MatrixXd curvatures;  // spline second derivatives, same shape as values

  double mu = 1.0;
  double hbar = 1.0;
  Sweep sweep;
};

Potential quartic_double_well(double alpha, std::vector<double> beta, std::vector<double> gamma,
                              double mu = 1.0, double hbar = 1.0);
Potential harmonic(double stiffness, double center = 0.0, double offset = 0.0, double mu = 1.0,
                   double hbar = 1.0);
Potential sampled(std::vector<double> grid_x, std::vector<double> grid_lambda, MatrixXd values,
                  double mu = 1.0, double hbar = 1.0);

/// Throws InvalidArgument when the family invariants fail.
void check_potential(const Potential& pot);

double polynomial(const std::vector<double>& coeffs, double lambda);
double polynomial_derivative(const std::vector<double>& coeffs, double lambda);

double eval_potential(const Potential& pot, double x, double lambda);
double potential_dx(const Potential& pot, double x, double lambda);
double potential_dxx(const Potential& pot, double x, double lambda);
double potential_dlambda(const Potential& pot, double x, double lambda);

/// (V(x0 + s) - V(x0)) / s without cancellation for small s.
double difference_quotient(const Potential& pot, double x0, double s, double lambda);

struct BarrierInfo {
  double x0;
  double vb;
  double kappa;
};

/// Sorted stationary points of V(., lambda).
std::vector<double> critical_points(const Potential& pot, double lambda);
/// Positions of the local minima, sorted.
std::vector<double> well_minima(const Potential& pot, double lambda);
BarrierInfo barrier_top(const Potential& pot, double lambda);
/// Energy of the higher of the two wells (the lower edge of the four-turning-point band).
double upper_well_minimum(const Potential& pot, double lambda);
/// Spread of the critical values; sets the tolerance scale for degeneracy checks.
double energy_scale(const Potential& pot, double lambda);

std::vector<double> turning_points(const Potential& pot, double energy, double lambda);

}  // namespace qknh

#endif  // QKNH_POTENTIAL_HPP
