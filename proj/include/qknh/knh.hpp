#ifndef QKNH_KNH_HPP
#define QKNH_KNH_HPP

#include <array>
#include <string>
#include <vector>

#include "qknh/spectrum.hpp"

namespace qknh {

/// Subspace order used by every map below: A (shrinking well), B (above the separatrix), C (other well).
enum class Subspace { A = 0, B = 1, C = 2 };

/// 3x3 row-stochastic map; entry (i, j) is the probability to go from subspace i to subspace j.
using TransitionMap = Eigen::Matrix3d;

/// Map implied by growth rates: shrinking subspaces empty into growing ones in proportion to their rates.
TransitionMap transition_map(const std::array<double, 3>& rates, double tolerance = 0);

struct ClassicalKnh {
  std::array<double, 3> rates{};  // d/dlambda of the A, B, C phase-space areas at E = V_b(lambda)
  TransitionMap map = TransitionMap::Identity();
  double probability = 0;         // clamped -(dS_C/dl)/(dS_A/dl)
  bool case_violation = false;
};

/// Phase-space areas of the two wells bounded by the separatrix E = V_b(lambda).
std::array<double, 2> separatrix_areas(const Potential& pot, double lambda, const SemiclassicsOptions& opts = {});

/// With strict = true a sign pattern that forbids A -> C raises CaseViolation instead of being flagged.
ClassicalKnh classical_knh(const Potential& pot, double lambda, const SemiclassicsOptions& opts = {},
                           bool strict = false);

struct GrowthRates {
  double d_a = 0, d_b = 0, d_c = 0;  // levels per unit lambda
  double big_gamma = 0;
  std::array<int, 3> signs{};

  std::string tag() const;  // e.g. "(-,+,+)"
};

GrowthRates growth_rates(const LatticeParams& params, double tolerance = 1e-14);

/// Transition map from the lattice growth rates. Throws AllGrowing when no subspace shrinks.
TransitionMap knh_predict(const LatticeParams& params);

struct GeometrySummary {
  int m = 0;
  double d = 0;
  int n = 0, big_k = 0;
  double delta_n = 0, delta_k = 0;
  double k = 0;
};

GeometrySummary subspace_geometry(int ensemble_size, double zone_width, const LatticeParams& params);

struct Interval {
  double lo = 0, hi = 0;
};

Interval weak_bounds(int ensemble_size, double zone_width, const LatticeParams& params);

struct StrongPrediction {
  long q = 0, p = 0;
  double value = 0;                // X / Y
  std::vector<int> ensemble_sizes; // multiples of q up to the requested limit
};

/// Smallest-denominator convergent (q, p) of X / Y within tol.
StrongPrediction strong_prediction(const LatticeParams& params, double tol, int max_ensemble = 100);

/// Continued-fraction convergents of a value in (0, 1), as (numerator, denominator).
std::vector<std::pair<long, long>> convergents(double value, int max_terms = 40);

}  // namespace qknh

#endif  // QKNH_KNH_HPP
