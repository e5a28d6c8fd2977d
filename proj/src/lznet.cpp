#include "qknh/lznet.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

#include "qknh/error.hpp"
#include "qknh/rng.hpp"

namespace qknh {

namespace {

constexpr double kTwoPi = 2 * kPi;

// Boundaries in ln(-ln P) for P = 1 - eps and P = eps.
double diabatic_edge(double eps) { return std::log(-std::log1p(-eps)); }
double adiabatic_edge(double eps) { return std::log(-std::log(eps)); }

Zone zone_of(double log_q, double eps) {
  if (log_q < diabatic_edge(eps)) return Zone::Below;
  if (log_q > adiabatic_edge(eps)) return Zone::Above;
  return Zone::Inside;
}

void finalize(Network& net) {
  net.crossings.assign(static_cast<std::size_t>(net.line_count()), {});
  for (std::size_t c = 0; c < net.columns.size(); ++c) {
    for (const auto& ev : net.columns[c].events) {
      const LineCrossing lc{static_cast<int>(c), ev.position, ev.energy, ev.log_q};
      net.crossings[static_cast<std::size_t>(net.a_line(ev.m))].push_back(lc);
      net.crossings[static_cast<std::size_t>(net.c_line(ev.n))].push_back(lc);
    }
  }
}

void group_columns(Network& net, std::vector<CrossingEvent> events) {
  std::sort(events.begin(), events.end(), [](const CrossingEvent& a, const CrossingEvent& b) {
    return a.position != b.position ? a.position < b.position : a.m < b.m;
  });
  for (const auto& ev : events) {
    const double tol = 1e-9 * std::max(1.0, std::abs(ev.position));
    if (net.columns.empty() || ev.position - net.columns.back().position > tol)
      net.columns.push_back(Column{ev.position, {}});
    net.columns.back().events.push_back(ev);
  }
  for (const auto& col : net.columns) {
    std::vector<int> used;
    for (const auto& ev : col.events) {
      used.push_back(net.a_line(ev.m));
      used.push_back(net.c_line(ev.n));
    }
    std::sort(used.begin(), used.end());
    if (std::adjacent_find(used.begin(), used.end()) != used.end())
      throw Error(ErrorCode::InvalidArgument, "two crossings in one column share a line");
  }
  finalize(net);
}

NetworkSummary summarize(const Network& net, const Eigen::VectorXd& weight, int next_column) {
  NetworkSummary s;
  const int na = net.m_hi - net.m_lo + 1;
  for (int line = 0; line < net.line_count(); ++line) {
    const double w = weight(line);
    if (w == 0) continue;
    switch (line_zone(net, line, next_column)) {
      case Zone::Below:
        s.p_minus += w;
        if (line < na) s.pending += w;
        break;
      case Zone::Inside: s.p_zone += w; break;
      case Zone::Above: s.p_plus += w; break;
    }
  }
  s.n_c = next_column;
  return s;
}

void check_overflow(const Network& net, const Eigen::VectorXd& weight, double tol) {
  const int edges[4] = {net.a_line(net.m_lo), net.a_line(net.m_hi), net.c_line(net.n_lo), net.c_line(net.n_hi)};
  for (int e : edges)
    if (weight(e) > tol) {
      const auto [b, idx] = net.line_label(e);
      throw Error(ErrorCode::WindowOverflow, std::string("weight ") + std::to_string(weight(e)) + " on edge line (" +
                                                 branch_char(b) + "," + std::to_string(idx) + ")");
    }
}

std::vector<int> initial_rows(const Network& net, const std::vector<int>& initial) {
  if (initial.empty()) throw Error(ErrorCode::InvalidArgument, "empty initial ensemble");
  std::vector<int> rows;
  for (int m : initial) {
    if (m < net.m_lo || m > net.m_hi) throw Error(ErrorCode::InvalidArgument, "initial line outside the A window");
    rows.push_back(net.a_line(m));
  }
  return rows;
}

template <typename State, typename Step>
EvolutionResult run(const Network& net, const std::vector<int>& initial, const EvolveOptions& opts, State state,
                    Step&& apply_column) {
  const int count = static_cast<int>(initial.size());
  auto weights = [&]() -> Eigen::VectorXd {
    if constexpr (std::is_same_v<typename State::Scalar, double>) return state.rowwise().sum() / count;
    else return state.cwiseAbs2().rowwise().sum() / count;
  };
  auto norm_error = [&]() {
    if constexpr (std::is_same_v<typename State::Scalar, double>)
      return (state.colwise().sum().array() - 1.0).abs().maxCoeff();
    else return (state.cwiseAbs2().colwise().sum().array() - 1.0).abs().maxCoeff();
  };

  EvolutionResult out;
  out.trajectory.push_back(summarize(net, weights(), 0));
  const int limit = std::min<int>(opts.n_c_max, static_cast<int>(net.columns.size()));
  std::vector<char> active(static_cast<std::size_t>(net.line_count()), 0);
  for (int r : initial_rows(net, initial)) active[static_cast<std::size_t>(r)] = 1;
  for (int c = 0; c < limit; ++c) {
    apply_column(state, net.columns[static_cast<std::size_t>(c)], active);
    const Eigen::VectorXd w = weights();
    check_overflow(net, w, opts.overflow_tolerance);
    NetworkSummary s = summarize(net, w, c + 1);
    s.norm_error = norm_error();
    out.trajectory.push_back(s);
    out.columns_applied = c + 1;
    if (opts.early_stop && s.p_zone < opts.stop_tolerance && s.pending < opts.stop_tolerance) break;
  }
  if constexpr (std::is_same_v<typename State::Scalar, double>) out.final_probability = state;
  else out.final_probability = state.cwiseAbs2();
  const auto& last = out.trajectory.back();
  out.p_minus = last.p_minus;
  out.p_plus = last.p_plus;
  out.p_zone = last.p_zone;
  return out;
}

double interpolate_energy(const std::vector<LineCrossing>& cr, double position) {
  if (cr.empty()) return std::numeric_limits<double>::quiet_NaN();
  if (cr.size() == 1) return cr.front().energy;
  std::size_t j = 1;
  while (j + 1 < cr.size() && cr[j].position < position) ++j;
  const auto& a = cr[j - 1];
  const auto& b = cr[j];
  if (b.position == a.position) return b.energy;
  return a.energy + (b.energy - a.energy) * (position - a.position) / (b.position - a.position);
}

}  // namespace

void check_lattice(const SyntheticLattice& lat) {
  if (!(lat.z > 0) || !std::isfinite(lat.z)) throw Error(ErrorCode::InvalidArgument, "Z must be positive");
  if (!std::isfinite(lat.x) || !std::isfinite(lat.y)) throw Error(ErrorCode::InvalidArgument, "X and Y must be finite");
  if (!(lat.slope_ratio > 0)) throw Error(ErrorCode::InvalidArgument, "slope ratio must be positive");
  if (!(lat.epsilon > 0 && lat.epsilon < 0.5)) throw Error(ErrorCode::InvalidArgument, "epsilon must lie in (0, 1/2)");
  if (lat.m_hi < lat.m_lo || lat.n_hi < lat.n_lo) throw Error(ErrorCode::InvalidArgument, "empty index window");
}

double lattice_log_q(const SyntheticLattice& lat, int m, int n) { return std::log(lat.z) + m * lat.x + n * lat.y; }

double p_lattice(const SyntheticLattice& lat, int m, int n) {
  return transmission_from_log_q(lattice_log_q(lat, m, n)).p;
}

Transmission transmission_from_log_q(double log_q) {
  const double q = std::exp(log_q);
  Transmission t;
  t.p = std::exp(-q);
  t.root_p = std::exp(-0.5 * q);
  t.root_q = std::sqrt(-std::expm1(-q));
  return t;
}

Matrix2c<double> crossing_unitary(const Transmission& t, double a, double b, double c) {
  using C = std::complex<double>;
  const C ea = std::polar(1.0, -a);
  const C eb = std::polar(1.0, -b), ec = std::polar(1.0, -c);
  Matrix2c<double> u;
  u(0, 0) = ea * eb * ec * t.root_p;
  u(0, 1) = ea * eb * std::conj(ec) * t.root_q;
  u(1, 0) = -ea * std::conj(eb) * ec * t.root_q;
  u(1, 1) = ea * std::conj(eb) * std::conj(ec) * t.root_p;
  return u;
}

Matrix2c<double> crossing_unitary(double p, double a, double b, double c) {
  if (!(p >= 0 && p <= 1)) throw Error(ErrorCode::InvalidArgument, "probability outside [0, 1]");
  Transmission t;
  t.p = p;
  t.root_p = std::sqrt(p);
  t.root_q = std::sqrt(1 - p);
  return crossing_unitary(t, a, b, c);
}

std::pair<Branch, int> Network::line_label(int line) const {
  const int na = m_hi - m_lo + 1;
  if (line < na) return {Branch::A, m_lo + line};
  return {Branch::C, n_lo + line - na};
}

Network schedule(const SyntheticLattice& lat, double l_begin, double l_end) {
  check_lattice(lat);
  Network net;
  net.m_lo = lat.m_lo, net.m_hi = lat.m_hi;
  net.n_lo = lat.n_lo, net.n_hi = lat.n_hi;
  net.epsilon = lat.epsilon;
  std::vector<CrossingEvent> events;
  for (int m = lat.m_lo; m <= lat.m_hi; ++m)
    for (int n = lat.n_lo; n <= lat.n_hi; ++n) {
      const double l = n * lat.slope_ratio - m;
      if (l < l_begin || l > l_end) continue;
      events.push_back(CrossingEvent{m, n, l, static_cast<double>(n), lattice_log_q(lat, m, n)});
    }
  group_columns(net, std::move(events));
  return net;
}

Network schedule(const std::vector<CrossingNode>& nodes, double epsilon) {
  if (nodes.empty()) throw Error(ErrorCode::InvalidArgument, "no crossing nodes");
  Network net;
  net.epsilon = epsilon;
  net.m_lo = net.m_hi = nodes.front().m;
  net.n_lo = net.n_hi = nodes.front().n;
  std::vector<CrossingEvent> events;
  for (const auto& node : nodes) {
    net.m_lo = std::min(net.m_lo, node.m), net.m_hi = std::max(net.m_hi, node.m);
    net.n_lo = std::min(net.n_lo, node.n), net.n_hi = std::max(net.n_hi, node.n);
    events.push_back(CrossingEvent{node.m, node.n, node.lambda, node.energy, node.log_q});
  }
  group_columns(net, std::move(events));
  return net;
}

std::array<double, 3> PhaseSource::phases(int m, int n, std::uint64_t realization) const {
  switch (mode) {
    case PhaseMode::Zero: return {0, 0, 0};
    case PhaseMode::Fixed: {
      const auto it = fixed.find({m, n});
      return it == fixed.end() ? std::array<double, 3>{0, 0, 0} : it->second;
    }
    case PhaseMode::Random: break;
  }
  const Philox4x32 gen(seed);
  const auto hi = static_cast<std::uint32_t>(realization >> 32);
  const auto lo = static_cast<std::uint32_t>(realization);
  const auto w0 = gen({static_cast<std::uint32_t>(m), static_cast<std::uint32_t>(n), lo, hi << 1});
  const auto w1 = gen({static_cast<std::uint32_t>(m), static_cast<std::uint32_t>(n), lo, hi << 1 | 1u});
  return {kTwoPi * Philox4x32::to_unit(w0[0], w0[1]), kTwoPi * Philox4x32::to_unit(w0[2], w0[3]),
          kTwoPi * Philox4x32::to_unit(w1[0], w1[1])};
}

Zone line_zone(const Network& net, int line, int next_column) {
  const auto& cr = net.crossings[static_cast<std::size_t>(line)];
  if (cr.empty()) return Zone::Below;
  auto it = std::lower_bound(cr.begin(), cr.end(), next_column,
                             [](const LineCrossing& c, int col) { return c.column < col; });
  if (it == cr.end()) --it;
  return zone_of(it->log_q, net.epsilon);
}

EvolutionResult evolve_incoherent(const Network& net, const std::vector<int>& initial_a_lines,
                                  const EvolveOptions& opts) {
  Eigen::MatrixXd state = Eigen::MatrixXd::Zero(net.line_count(), static_cast<Eigen::Index>(initial_a_lines.size()));
  const auto rows = initial_rows(net, initial_a_lines);
  for (std::size_t k = 0; k < rows.size(); ++k) state(rows[k], static_cast<Eigen::Index>(k)) += 1.0;
  return run(net, initial_a_lines, opts, std::move(state),
             [&](Eigen::MatrixXd& s, const Column& col, std::vector<char>& active) {
               for (const auto& ev : col.events) {
                 const int ia = net.a_line(ev.m), ic = net.c_line(ev.n);
                 if (!active[static_cast<std::size_t>(ia)] && !active[static_cast<std::size_t>(ic)]) continue;
                 active[static_cast<std::size_t>(ia)] = active[static_cast<std::size_t>(ic)] = 1;
                 const double q = std::exp(ev.log_q);
                 const double p = std::exp(-q), pq = -std::expm1(-q);
                 const Eigen::RowVectorXd a = s.row(ia), c = s.row(ic);
                 s.row(ia) = p * a + pq * c;
                 s.row(ic) = pq * a + p * c;
               }
             });
}

EvolutionResult evolve_unitary(const Network& net, const std::vector<int>& initial_a_lines, const PhaseSource& phases,
                               std::uint64_t realization, const EvolveOptions& opts) {
  Eigen::MatrixXcd state =
      Eigen::MatrixXcd::Zero(net.line_count(), static_cast<Eigen::Index>(initial_a_lines.size()));
  const auto rows = initial_rows(net, initial_a_lines);
  for (std::size_t k = 0; k < rows.size(); ++k) state(rows[k], static_cast<Eigen::Index>(k)) += 1.0;
  return run(net, initial_a_lines, opts, std::move(state),
             [&](Eigen::MatrixXcd& s, const Column& col, std::vector<char>& active) {
               for (const auto& ev : col.events) {
                 const int ia = net.a_line(ev.m), ic = net.c_line(ev.n);
                 if (!active[static_cast<std::size_t>(ia)] && !active[static_cast<std::size_t>(ic)]) continue;
                 active[static_cast<std::size_t>(ia)] = active[static_cast<std::size_t>(ic)] = 1;
                 const auto ph = phases.phases(ev.m, ev.n, realization);
                 const Matrix2c<double> u = crossing_unitary(transmission_from_log_q(ev.log_q), ph[0], ph[1], ph[2]);
                 const Eigen::RowVectorXcd a = s.row(ia), c = s.row(ic);
                 s.row(ia) = u(0, 0) * a + u(0, 1) * c;
                 s.row(ic) = u(1, 0) * a + u(1, 1) * c;
               }
             });
}

FinalMatrix final_matrix(const Network& net, const std::vector<int>& initial_a_lines, const EvolutionResult& result,
                         double threshold) {
  if (result.columns_applied == 0 || net.columns.empty())
    throw Error(ErrorCode::InvalidArgument, "no columns were applied");
  const auto& cols = net.columns;
  const std::size_t last = static_cast<std::size_t>(result.columns_applied - 1);
  const double gap = last + 1 < cols.size() ? cols[last + 1].position - cols[last].position : 1.0;
  const double position = cols[last].position + 0.5 * gap;

  std::vector<std::pair<double, int>> order;
  for (int line = 0; line < net.line_count(); ++line) {
    const double e = interpolate_energy(net.crossings[static_cast<std::size_t>(line)], position);
    if (std::isfinite(e)) order.emplace_back(e, line);
  }
  std::sort(order.begin(), order.end());
  const Eigen::VectorXd reach = result.final_probability.rowwise().sum();
  std::size_t lo = order.size(), hi = 0;
  for (std::size_t j = 0; j < order.size(); ++j)
    if (reach(order[j].second) > threshold) {
      lo = std::min(lo, j);
      hi = j;
    }
  FinalMatrix out;
  if (lo > hi) return out;

  std::vector<int> init_order(initial_a_lines.size());
  std::iota(init_order.begin(), init_order.end(), 0);
  std::sort(init_order.begin(), init_order.end(),
            [&](int a, int b) { return initial_a_lines[static_cast<std::size_t>(a)] < initial_a_lines[static_cast<std::size_t>(b)]; });
  out.probability.resize(static_cast<Eigen::Index>(init_order.size()), static_cast<Eigen::Index>(hi - lo + 1));
  for (std::size_t j = lo; j <= hi; ++j) {
    out.final_lines.push_back(net.line_label(order[j].second));
    for (std::size_t i = 0; i < init_order.size(); ++i)
      out.probability(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j - lo)) =
          result.final_probability(order[j].second, init_order[i]);
  }
  return out;
}

double zone_width(double x, double y, double slope_ratio, double epsilon) {
  const double w = adiabatic_edge(epsilon) - diabatic_edge(epsilon);
  return (1 + slope_ratio) * w / std::abs(slope_ratio * x + y);
}

ZoneClassification classify_levels(const SyntheticLattice& lat, double epsilon) {
  if (!(epsilon > 0 && epsilon < 0.5)) throw Error(ErrorCode::InvalidArgument, "epsilon must lie in (0, 1/2)");
  ZoneClassification out;
  for (int m = lat.m_lo; m <= lat.m_hi; ++m)
    for (int n = lat.n_lo; n <= lat.n_hi; ++n) out.labels.push_back({m, n, zone_of(lattice_log_q(lat, m, n), epsilon)});
  out.width = zone_width(lat.x, lat.y, lat.slope_ratio, epsilon);
  return out;
}

EnsembleSetup ensemble_setup(SyntheticLattice lat, int ensemble_size, int n_c_max) {
  if (ensemble_size < 1 || n_c_max < 1) throw Error(ErrorCode::InvalidArgument, "ensemble size and n_c_max must be positive");
  const double r = lat.slope_ratio;
  lat.m_lo = lat.n_lo = 0;
  lat.m_hi = lat.n_hi = 0;
  check_lattice(lat);
  if (!(lat.x + lat.y / r > 0))
    throw Error(ErrorCode::InvalidArgument, "A lines never enter the zone unless X + Y/r > 0");
  const double edge = diabatic_edge(lat.epsilon);
  auto first_log_q = [&](int m) { return lattice_log_q(lat, m, static_cast<int>(std::ceil(m / r - 1e-12))); };
  int m = 0;
  for (int it = 0; first_log_q(m) < edge; ++it, ++m)
    if (it > 10000000) throw Error(ErrorCode::InvalidArgument, "zone not found");
  for (int it = 0; first_log_q(m) >= edge; ++it, --m)
    if (it > 10000000) throw Error(ErrorCode::InvalidArgument, "zone not found");
  const int m_top = m, m_low = m_top - ensemble_size + 1;
  const double l_end = n_c_max;
  const int pad = 5;
  lat.n_lo = static_cast<int>(std::floor(m_low / r)) - pad;
  lat.n_hi = static_cast<int>(std::ceil((m_top + l_end) / r)) + pad;
  lat.m_lo = static_cast<int>(std::floor(lat.n_lo * r - l_end)) - pad;
  lat.m_hi = static_cast<int>(std::ceil(lat.n_hi * r)) + pad;

  EnsembleSetup out;
  out.lattice = lat;
  out.network = schedule(lat, 0.0, l_end);
  for (int k = 0; k < ensemble_size; ++k) out.initial_a_lines.push_back(m_top - k);
  return out;
}

SweepStatistics sweep_realizations(const Network& net, const std::vector<int>& initial_a_lines, int realizations,
                                   std::uint64_t seed, const EvolveOptions& opts, int threads) {
  if (realizations < 2) throw Error(ErrorCode::InvalidArgument, "need at least two realizations");
  SweepStatistics st;
  st.p_minus.assign(static_cast<std::size_t>(realizations), 0.0);
  std::vector<double> norm(static_cast<std::size_t>(realizations), 0.0);
  PhaseSource src;
  src.seed = seed;
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  auto worker = [&]() {
    for (int r = next++; r < realizations && !failed; r = next++) {
      try {
        const EvolutionResult res = evolve_unitary(net, initial_a_lines, src, static_cast<std::uint64_t>(r), opts);
        st.p_minus[static_cast<std::size_t>(r)] = res.p_minus;
        double worst = 0;
        for (const auto& s : res.trajectory) worst = std::max(worst, s.norm_error);
        norm[static_cast<std::size_t>(r)] = worst;
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
      }
    }
  };
  const int workers = std::clamp(threads, 1, realizations);
  std::vector<std::thread> pool;
  for (int t = 1; t < workers; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);

  const double n = realizations;
  st.mean = std::accumulate(st.p_minus.begin(), st.p_minus.end(), 0.0) / n;
  double ss = 0;
  for (double v : st.p_minus) ss += (v - st.mean) * (v - st.mean);
  st.stddev = std::sqrt(ss / (n - 1));
  st.std_error = st.stddev / std::sqrt(n);
  st.min = *std::min_element(st.p_minus.begin(), st.p_minus.end());
  st.max = *std::max_element(st.p_minus.begin(), st.p_minus.end());
  st.max_norm_error = *std::max_element(norm.begin(), norm.end());
  st.incoherent_p_minus = evolve_incoherent(net, initial_a_lines, opts).p_minus;
  return st;
}

}  // namespace qknh
