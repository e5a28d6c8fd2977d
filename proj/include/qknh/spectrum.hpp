#ifndef QKNH_SPECTRUM_HPP
#define QKNH_SPECTRUM_HPP

#include <string>
#include <vector>

#include "qknh/semiclassics.hpp"

namespace qknh {

struct BranchLevel {
  Branch branch;
  int label;       // quantum number minus the branch offset
  double lambda;
  double energy;
  double slope;    // dE/dlambda along the level
};

struct SpectrumOptions {
  SemiclassicsOptions semi;
  double newton_tolerance = 1e-11;  // residual in units of pi hbar
  int newton_max_iter = 50;
};

/// Roots of St_side(E) = (k + 1/2) pi hbar inside [e_lo, e_hi]; label = k - offset.
std::vector<BranchLevel> branch_levels(const Potential& pot, double lambda, Branch side, double e_lo, double e_hi,
                                       int offset = 0, const SpectrumOptions& opts = {});

/// G(E) = cos((St_A - St_C)/hbar) + sqrt(1 + exp(-2 T_b/hbar)) cos((St_A + St_C)/hbar)
double quantization_function(const Potential& pot, double energy, double lambda, const SpectrumOptions& opts = {});

std::vector<double> modified_levels(const Potential& pot, double lambda, double e_lo, double e_hi,
                                    const SpectrumOptions& opts = {});

struct CrossingNode {
  int m = 0, n = 0;
  int m_raw = 0, n_raw = 0;  // unshifted quantum numbers
  double energy = 0;
  double lambda = 0;
  double time = 0;
  double gamma = 0;
  double gap = 0;            // hbar * gamma
  double probability = 0;
  double log_q = 0;          // ln(-ln P)
  ActionTable table;
};

struct NodeFailure {
  int m_raw, n_raw;
  std::string reason;
};

struct CrossingLattice {
  std::vector<CrossingNode> nodes;
  std::vector<NodeFailure> failures;
  int m0 = 0, n0 = 0;
  double origin_energy = 0, origin_lambda = 0;
};

/// All crossings of A and C branch levels inside the (lambda, E) window. Labels are shifted so
/// that the node closest to the quantum separatrix (smallest |ln(-ln P)|, ties to lower E) is (0, 0).
CrossingLattice crossing_lattice(const Potential& pot, double lambda_lo, double lambda_hi, double e_lo, double e_hi,
                                 const SpectrumOptions& opts = {});

/// Single node solve from a seed.
CrossingNode solve_crossing(const Potential& pot, int m_raw, int n_raw, double e_seed, double lambda_seed,
                            const SpectrumOptions& opts = {});

struct RegularityReport {
  double max_energy_error = 0;  // |E_mn - affine prediction|
  double max_lambda_error = 0;
  int nodes = 0;
  int failures = 0;
};

/// Solves every node with |m|, |n| <= radius around the crossing nearest (energy, lambda) and compares it with
/// the affine prediction from that crossing.
RegularityReport lattice_regularity(const Potential& pot, double energy, double lambda, int radius,
                                    const SpectrumOptions& opts = {});

/// Affine displacement of node (m, n) relative to an origin table (lattice prediction).
Eigen::Vector2d lattice_step(const ActionTable& origin, double hbar, int m, int n);

struct LatticeParams {
  double e00 = 0, lambda00 = 0;
  double x = 0, y = 0, z = 0;
  double bracket = 0;          // [St_A, St_C]
  double de_st_a = 0, de_st_c = 0;
  double big_gamma = 0;        // levels per unit lambda
  double k = 0;
  double rate = 0;
};

LatticeParams local_params(const Potential& pot, double energy, double lambda, double rate,
                           const SpectrumOptions& opts = {});
LatticeParams local_params(const Potential& pot, const CrossingNode& node, double rate,
                           const SpectrumOptions& opts = {});
LatticeParams params_from_table(const ActionTable& t, double hbar, double rate);

double diabatic_probability(const ActionTable& t, double hbar, double rate);
double diabatic_probability(const Potential& pot, double energy, double lambda, double rate,
                            const SpectrumOptions& opts = {});
/// ln(-ln P); zero on the quantum separatrix.
double log_exponent(const ActionTable& t, double hbar, double rate);

double separatrix_energy(const Potential& pot, double lambda, double rate, const SpectrumOptions& opts = {});
/// The sweep rate that places the quantum separatrix at energy E.
double rate_for_separatrix(const Potential& pot, double energy, double lambda, const SpectrumOptions& opts = {});

double min_gap(const CrossingNode& node);
double gap_parameter(const ActionTable& t, double hbar);

/// Branch quantum numbers of the levels nearest to energy E (floor of St/(pi hbar) - 1/2 rounded).
std::pair<int, int> label_offsets(const Potential& pot, double energy, double lambda, const SpectrumOptions& opts = {});

}  // namespace qknh

#endif  // QKNH_SPECTRUM_HPP
