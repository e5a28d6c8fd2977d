#ifndef QKNH_ORACLE_HPP
#define QKNH_ORACLE_HPP

#include <vector>

#include "qknh/spectrum.hpp"

namespace qknh {

/// Hard-wall box [x_min, x_max] with n_x interior points.
struct GridSpec {
  double x_min = 0;
  double x_max = 0;
  int n_x = 4000;
};

struct OracleOptions {
  bool richardson = true;
  double tail_tolerance = 1e-8;
  double penetration = 12.0;   // WKB exponent of the margin beyond the outer turning points
  double airy_lengths = 8.0;   // minimum margin in Airy lengths
};

/// Domain covering every classically allowed point at energies up to e_max, plus a decay margin.
GridSpec default_grid(const Potential& pot, double lambda, double e_max, int n_x = 4000,
                      const OracleOptions& opts = {});

/// Symmetric tridiagonal finite-difference Hamiltonian (3-point Laplacian).
struct Tridiagonal {
  Eigen::VectorXd diag;
  double off = 0;
};

Tridiagonal discretize(const Potential& pot, double lambda, const GridSpec& grid);

/// Number of eigenvalues strictly below sigma (Sturm sequence).
int sturm_count(const Tridiagonal& t, double sigma);
/// Eigenvalues with indices [first, first + count) by bisection.
Eigen::VectorXd tridiagonal_eigenvalues(const Tridiagonal& t, int first, int count);

/// WKB estimate of the probability weight beyond the grid boundary at energy E.
double boundary_weight(const Potential& pot, double lambda, const GridSpec& grid, double energy);

/// Sorted eigenvalues with indices [first, first + count), extrapolated from n_x and 2 n_x + 1 points.
Eigen::VectorXd exact_spectrum(const Potential& pot, double lambda, const GridSpec& grid, int count, int first = 0,
                               const OracleOptions& opts = {});

struct GapScan {
  double gap = 0;
  double lambda = 0;
  double energy = 0;     // midpoint of the pair at the minimum
  int lower_index = 0;
  int evaluations = 0;
};

GapScan gap_scan(const Potential& pot, const CrossingNode& node, const GridSpec& grid, double lambda_halfwidth,
                 int steps, const OracleOptions& opts = {});

struct SpectrumSheet {
  std::vector<double> lambdas;
  Eigen::MatrixXd energies;           // lambdas x count
  std::vector<double> barrier_energy; // V_b(lambda), NaN where there is no barrier
};

SpectrumSheet spectrum_sheet(const Potential& pot, const std::vector<double>& lambdas, const GridSpec& grid,
                             int count, const OracleOptions& opts = {});

}  // namespace qknh

#endif  // QKNH_ORACLE_HPP
