#ifndef QKNH_LZNET_HPP
#define QKNH_LZNET_HPP

#include <array>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "qknh/spectrum.hpp"
#include "qknh/types.hpp"

namespace qknh {

/// P_mn = exp(-Z e^{mX} e^{nY}) on integer (m, n) windows.
struct SyntheticLattice {
  double x = 0.5;
  double y = 1.25;
  double z = 1.0;
  double slope_ratio = 1.0;  // dE St_A / dE St_C
  double epsilon = 1e-3;
  int m_lo = 0, m_hi = 0;
  int n_lo = 0, n_hi = 0;
};

void check_lattice(const SyntheticLattice& lat);

/// ln(-ln P_mn) = ln Z + mX + nY
double lattice_log_q(const SyntheticLattice& lat, int m, int n);
double p_lattice(const SyntheticLattice& lat, int m, int n);

/// sqrt(P) and sqrt(1 - P) from q = -ln P without cancellation.
struct Transmission {
  double p = 1;
  double root_p = 1;
  double root_q = 0;
};
Transmission transmission_from_log_q(double log_q);

Matrix2c<double> crossing_unitary(double p, double a, double b, double c);
Matrix2c<double> crossing_unitary(const Transmission& t, double a, double b, double c);

struct CrossingEvent {
  int m = 0, n = 0;
  double position = 0;  // sweep coordinate of the crossing
  double energy = 0;    // energy coordinate of the crossing, used to order lines
  double log_q = 0;
};

struct Column {
  double position = 0;
  std::vector<CrossingEvent> events;
};

struct LineCrossing {
  int column = 0;
  double position = 0;
  double energy = 0;
  double log_q = 0;
};

/// Time-ordered crossing columns over explicit line windows (A, m_lo..m_hi) and (C, n_lo..n_hi).
struct Network {
  int m_lo = 0, m_hi = -1;
  int n_lo = 0, n_hi = -1;
  double epsilon = 1e-3;
  std::vector<Column> columns;
  std::vector<std::vector<LineCrossing>> crossings;  // per line, in column order

  int line_count() const { return (m_hi - m_lo + 1) + (n_hi - n_lo + 1); }
  int a_line(int m) const { return m - m_lo; }
  int c_line(int n) const { return (m_hi - m_lo + 1) + n - n_lo; }
  std::pair<Branch, int> line_label(int line) const;
};

/// Synthetic columns at positions l = n r - m, with r the slope ratio, restricted to [l_begin, l_end].
Network schedule(const SyntheticLattice& lat, double l_begin, double l_end);
/// Physical columns ordered by the sweep parameter of each node.
Network schedule(const std::vector<CrossingNode>& nodes, double epsilon);

enum class PhaseMode { Random, Zero, Fixed };

struct PhaseSource {
  std::uint64_t seed = 0;
  PhaseMode mode = PhaseMode::Random;
  std::map<std::pair<int, int>, std::array<double, 3>> fixed;  // (m, n) -> (a, b, c); missing nodes get zeros

  /// Phases (a, b, c) in [0, 2 pi), a pure function of (seed, m, n, realization).
  std::array<double, 3> phases(int m, int n, std::uint64_t realization) const;
};

enum class Zone { Below, Inside, Above };

struct NetworkSummary {
  int n_c = 0;
  double p_minus = 0;
  double p_plus = 0;
  double p_zone = 0;
  double pending = 0;  // A-line weight below the zone
  double norm_error = 0;
};

struct EvolveOptions {
  int n_c_max = 80;
  bool early_stop = true;        // stop once p_S and pending both fall below stop_tolerance
  double stop_tolerance = 1e-6;
  double overflow_tolerance = 1e-8;
};

struct EvolutionResult {
  std::vector<NetworkSummary> trajectory;  // entry 0 is the initial state
  Eigen::MatrixXd final_probability;       // lines x initial lines
  int columns_applied = 0;
  double p_minus = 0, p_plus = 0, p_zone = 0;
};

/// Zone of a line at a point between columns, from the next crossing it will meet.
Zone line_zone(const Network& net, int line, int next_column);

EvolutionResult evolve_incoherent(const Network& net, const std::vector<int>& initial_a_lines,
                                  const EvolveOptions& opts = {});
EvolutionResult evolve_unitary(const Network& net, const std::vector<int>& initial_a_lines, const PhaseSource& phases,
                               std::uint64_t realization, const EvolveOptions& opts = {});

/// Lines ordered by energy after the last applied column; index 1 is the lowest reachable line.
struct FinalMatrix {
  std::vector<std::pair<Branch, int>> final_lines;
  Eigen::MatrixXd probability;  // initial (lowest first) x final
};
FinalMatrix final_matrix(const Network& net, const std::vector<int>& initial_a_lines, const EvolutionResult& result,
                         double threshold = 1e-14);

struct ZoneLabel {
  int m = 0, n = 0;
  Zone zone = Zone::Below;
};

struct ZoneClassification {
  std::vector<ZoneLabel> labels;
  double width = 0;  // D, levels crossed by a line of constant sweep parameter inside the zone
};

ZoneClassification classify_levels(const SyntheticLattice& lat, double epsilon);
double zone_width(double x, double y, double slope_ratio, double epsilon);

/// Lattice windows and initial lines for an M-line ensemble starting just below the zone.
struct EnsembleSetup {
  SyntheticLattice lattice;
  Network network;
  std::vector<int> initial_a_lines;  // highest first
};
EnsembleSetup ensemble_setup(SyntheticLattice lat, int ensemble_size, int n_c_max);

struct SweepStatistics {
  std::vector<double> p_minus;  // per realization
  double mean = 0, stddev = 0, std_error = 0, min = 0, max = 0;
  double incoherent_p_minus = 0;
  double max_norm_error = 0;
};

/// Coherent realizations run on up to `threads` workers; the result does not depend on the thread count.
SweepStatistics sweep_realizations(const Network& net, const std::vector<int>& initial_a_lines, int realizations,
                                   std::uint64_t seed, const EvolveOptions& opts = {}, int threads = 1);

}  // namespace qknh

#endif  // QKNH_LZNET_HPP
