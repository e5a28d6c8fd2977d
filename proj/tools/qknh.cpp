#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "qknh/error.hpp"
#include "qknh/knh.hpp"
#include "qknh/lznet.hpp"
#include "qknh/oracle.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace qknh;

namespace {

constexpr int kSchemaVersion = 1;
constexpr const char* kVersion = "1.0.0";

enum ExitCode { kOk = 0, kInvalid = 1, kConfigError = 2, kExperimentError = 3 };

struct ConfigFailure : std::runtime_error {
  std::string key;
  ConfigFailure(std::string k, const std::string& what) : std::runtime_error(what), key(std::move(k)) {}
};

struct ExperimentFailure : std::runtime_error {
  std::string module;
  std::string code;
  ExperimentFailure(std::string m, std::string c, const std::string& what)
      : std::runtime_error(what), module(std::move(m)), code(std::move(c)) {}
};

template <typename F>
auto stage(const char* module, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw ExperimentFailure(module, std::string(to_string(e.code())), e.what());
  }
}

json default_config() {
  json synthetic = {{"enabled", true}, {"X", 0.5}, {"Y", 1.25}, {"Z", 1.0}, {"slope_ratio", 1.0}};
  json experiment = {{"mode", "evolve"},
                     {"M", 10},
                     {"M_values", json::array()},
                     {"R", 100},
                     {"n_c_max", 80},
                     {"epsilon", 1e-3},
                     {"seed", 0},
                     {"energy_window", json::array({-2.0, -0.4})},
                     {"separatrix_energy", -1.0},
                     {"levels", 12},
                     {"lambda_points", 21},
                     {"grid_points", 4000},
                     {"gap_nodes", 3},
                     {"gap_halfwidth", 0.02},
                     {"gap_steps", 10},
                     {"synthetic", synthetic}};
  json potential = {{"family", "quartic-double-well"},
                    {"alpha", 1.0},
                    {"beta", json::array({4.0, 0.5})},
                    {"gamma", json::array({0.0, 1.0})},
                    {"stiffness", 1.0},
                    {"center", 0.0},
                    {"offset", 0.0},
                    {"mu", 1.0},
                    {"hbar", 0.1}};
  json sweep = {{"lambda0", 0.0}, {"rate", 0.0}, {"window", json::array({-0.25, 0.25})}};
  json output = {{"directory", "qknh_out"}, {"formats", json::array({"csv", "json"})}};
  return {{"schema_version", kSchemaVersion},
          {"potential", potential},
          {"sweep", sweep},
          {"experiment", experiment},
          {"output", output}};
}

// ---------------------------------------------------------------------------
// Schema: the defaults double as the schema. Keys must exist there and values must
// have the same JSON kind; integers stay integers.

void check_kind(const json& ref, const json& value, const std::string& key) {
  auto fail = [&](const char* want) { throw ConfigFailure(key, "'" + key + "' must be " + want); };
  if (ref.is_boolean()) {
    if (!value.is_boolean()) fail("a boolean");
  } else if (ref.is_number_integer()) {
    if (!value.is_number_integer()) fail("an integer");
  } else if (ref.is_number()) {
    if (!value.is_number()) fail("a number");
  } else if (ref.is_string()) {
    if (!value.is_string()) fail("a string");
  } else if (ref.is_array()) {
    if (!value.is_array()) fail("an array");
    const bool want_string = !ref.empty() && ref.front().is_string();
    const bool want_int = ref.empty() || ref.front().is_number_integer();
    for (const auto& v : value) {
      if (want_string && !v.is_string()) fail("an array of strings");
      if (!want_string && want_int && !v.is_number_integer()) fail("an array of integers");
      if (!want_string && !want_int && !v.is_number()) fail("an array of numbers");
    }
  }
}

void merge_checked(json& base, const json& patch, const std::string& path) {
  if (!patch.is_object()) throw ConfigFailure(path, "'" + (path.empty() ? "config" : path) + "' must be an object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) throw ConfigFailure(key, "unknown key '" + key + "'");
    json& slot = base[it.key()];
    if (slot.is_object()) {
      merge_checked(slot, it.value(), key);
    } else {
      check_kind(slot, it.value(), key);
      slot = slot.is_number_float() ? json(it.value().get<double>()) : it.value();
    }
  }
}

json load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigFailure("", "cannot open config file '" + path + "'");
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigFailure("", "config file '" + path + "' is not valid JSON");
  if (!j.is_object()) throw ConfigFailure("", "config file must hold a JSON object");
  if (!j.contains("schema_version")) throw ConfigFailure("schema_version", "missing 'schema_version'");
  if (!j["schema_version"].is_number_integer() || j["schema_version"].get<int>() != kSchemaVersion)
    throw ConfigFailure("schema_version", "unsupported schema_version (expected " + std::to_string(kSchemaVersion) + ")");
  return j;
}

json parse_assignment(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigFailure("", "--set expects key=value, got '" + text + "'");
  const std::string key = text.substr(0, eq), raw = text.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  json patch = value;
  std::string rest = key;
  std::vector<std::string> parts;
  for (std::size_t pos; (pos = rest.find('.')) != std::string::npos; rest = rest.substr(pos + 1))
    parts.push_back(rest.substr(0, pos));
  parts.push_back(rest);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = json{{*it, patch}};
  return patch;
}

struct Issue {
  std::string level;
  std::string key;
  std::string message;
};

void to_json(json& j, const Issue& i) { j = {{"level", i.level}, {"key", i.key}, {"message", i.message}}; }

bool is_double_well_mode(const std::string& mode) { return mode != "spectrum"; }

Potential make_potential(const json& cfg) {
  const json& p = cfg["potential"];
  Potential pot;
  const PotentialFamily family = parse_family(p["family"].get<std::string>());
  if (family == PotentialFamily::QuarticDoubleWell)
    pot = quartic_double_well(p["alpha"], p["beta"].get<std::vector<double>>(), p["gamma"].get<std::vector<double>>(),
                              p["mu"], p["hbar"]);
  else if (family == PotentialFamily::Harmonic)
    pot = harmonic(p["stiffness"], p["center"], p["offset"], p["mu"], p["hbar"]);
  else
    throw Error(ErrorCode::InvalidArgument, "sampled potentials cannot be configured from JSON");
  pot.sweep.lambda0 = cfg["sweep"]["lambda0"];
  const double rate = cfg["sweep"]["rate"];
  pot.sweep.rate = rate > 0 ? rate : 1.0;
  return pot;
}

std::vector<Issue> check_config(const json& cfg) {
  std::vector<Issue> issues;
  auto error = [&](const std::string& key, const std::string& msg) { issues.push_back({"error", key, msg}); };
  auto warn = [&](const std::string& key, const std::string& msg) { issues.push_back({"warning", key, msg}); };
  const json& p = cfg["potential"];
  const json& s = cfg["sweep"];
  const json& e = cfg["experiment"];
  const json& syn = e["synthetic"];

  const std::string family = p["family"];
  if (family == "sampled")
    error("potential.family", "sampled potentials need tabulated data and cannot be configured from JSON");
  else if (family != "quartic-double-well" && family != "harmonic")
    error("potential.family", "family must be 'quartic-double-well' or 'harmonic'");
  if (family == "quartic-double-well") {
    if (!(p["alpha"].get<double>() > 0)) error("potential.alpha", "alpha must be positive");
    if (p["beta"].empty()) error("potential.beta", "beta needs at least one coefficient");
    if (p["gamma"].empty()) error("potential.gamma", "gamma needs at least one coefficient");
  }
  if (!(p["mu"].get<double>() > 0)) error("potential.mu", "mu must be positive");
  if (!(p["hbar"].get<double>() > 0)) error("potential.hbar", "hbar must be positive");

  const auto window = s["window"].get<std::vector<double>>();
  if (window.size() != 2 || !(window[0] < window[1])) error("sweep.window", "window must be [lo, hi] with lo < hi");
  if (s["rate"].get<double>() < 0) error("sweep.rate", "rate must be positive, or 0 to place the separatrix");
  const auto ewin = e["energy_window"].get<std::vector<double>>();
  if (ewin.size() != 2 || !(ewin[0] < ewin[1]))
    error("experiment.energy_window", "energy_window must be [lo, hi] with lo < hi");

  const std::string mode = e["mode"];
  static const std::vector<std::string> modes{"spectrum", "lattice", "separatrix", "evolve", "sweep", "oracle"};
  if (std::find(modes.begin(), modes.end(), mode) == modes.end()) error("experiment.mode", "unknown mode '" + mode + "'");
  if (e["M"].get<long>() < 1) error("experiment.M", "M must be at least 1");
  for (const auto& m : e["M_values"])
    if (m.get<long>() < 1) error("experiment.M_values", "every M must be at least 1");
  if (e["R"].get<long>() < 2) error("experiment.R", "R must be at least 2");
  if (e["n_c_max"].get<long>() < 1) error("experiment.n_c_max", "n_c_max must be at least 1");
  if (e["seed"].get<long double>() < 0) error("experiment.seed", "seed must be non-negative");
  const double eps = e["epsilon"];
  if (!(eps > 0 && eps < 0.5)) error("experiment.epsilon", "epsilon must lie in (0, 1/2)");
  if (e["levels"].get<long>() < 1) error("experiment.levels", "levels must be at least 1");
  if (e["lambda_points"].get<long>() < 2) error("experiment.lambda_points", "lambda_points must be at least 2");
  if (e["grid_points"].get<long>() < 100) error("experiment.grid_points", "grid_points must be at least 100");
  if (e["gap_nodes"].get<long>() < 1) error("experiment.gap_nodes", "gap_nodes must be at least 1");
  if (!(e["gap_halfwidth"].get<double>() > 0)) error("experiment.gap_halfwidth", "gap_halfwidth must be positive");
  if (e["gap_steps"].get<long>() < 2) error("experiment.gap_steps", "gap_steps must be at least 2");
  if (!(syn["Z"].get<double>() > 0)) error("experiment.synthetic.Z", "Z must be positive");
  if (!(syn["slope_ratio"].get<double>() > 0)) error("experiment.synthetic.slope_ratio", "slope_ratio must be positive");
  if (!std::isfinite(syn["X"].get<double>()) || !std::isfinite(syn["Y"].get<double>()))
    error("experiment.synthetic", "X and Y must be finite");
  for (const auto& f : cfg["output"]["formats"])
    if (f != "csv" && f != "json") error("output.formats", "formats may contain only 'csv' and 'json'");
  if (cfg["output"]["directory"].get<std::string>().empty()) error("output.directory", "directory must not be empty");

  const bool synthetic_run = (mode == "evolve" || mode == "sweep") && syn["enabled"].get<bool>();
  if (!issues.empty() || synthetic_run) return issues;

  if (family == "harmonic" && is_double_well_mode(mode))
    error("potential.family", "mode '" + mode + "' needs a double-well potential");
  if (family != "quartic-double-well") return issues;

  const Potential pot = make_potential(cfg);
  const double l0 = s["lambda0"];
  if (l0 < window[0] || l0 > window[1]) warn("sweep.lambda0", "lambda0 lies outside the sweep window");
  const int probes = 41;
  std::optional<double> first_bad, first_high;
  for (int k = 0; k < probes; ++k) {
    const double lam = window[0] + (window[1] - window[0]) * k / (probes - 1);
    if (critical_points(pot, lam).size() != 3) {
      if (!first_bad) first_bad = lam;
      continue;
    }
    if (ewin[1] >= barrier_top(pot, lam).vb && !first_high) first_high = lam;
  }
  auto str = [](double v) {
    std::ostringstream os;
    os << v;
    return os.str();
  };
  if (first_bad) warn("sweep.window", "lambda = " + str(*first_bad) + " leaves the double-well regime");
  if (first_high)
    warn("experiment.energy_window", "energy window reaches the barrier top at lambda = " + str(*first_high));
  return issues;
}

bool has_errors(const std::vector<Issue>& issues) {
  return std::any_of(issues.begin(), issues.end(), [](const Issue& i) { return i.level == "error"; });
}

// ---------------------------------------------------------------------------
// Output

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class Output {
 public:
  Output(fs::path dir, const json& formats) : dir_(std::move(dir)) {
    for (const auto& f : formats) {
      if (f == "csv") csv_ = true;
      if (f == "json") json_ = true;
    }
  }

  const fs::path& dir() const { return dir_; }
  const std::vector<std::string>& files() const { return files_; }
  bool csv() const { return csv_; }

  class Csv {
   public:
    Csv(const fs::path& path, const std::vector<std::string>& header) : out_(path) {
      if (!out_) throw std::runtime_error("cannot write " + path.string());
      row(header);
    }
    void row(const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
      out_ << '\n';
    }

   private:
    std::ofstream out_;
  };

  std::optional<Csv> csv_file(const std::string& name, const std::vector<std::string>& header) {
    if (!csv_) return std::nullopt;
    files_.push_back(name);
    return std::optional<Csv>(std::in_place, dir_ / name, header);
  }

  void report(const std::string& name, const json& body) {
    if (!json_) return;
    files_.push_back(name);
    write_json(dir_ / name, body);
  }

  static void write_json(const fs::path& path, const json& body) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << body.dump(2) << '\n';
  }

 private:
  fs::path dir_;
  bool csv_ = false, json_ = false;
  std::vector<std::string> files_;
};

int thread_cap() {
  const int hw = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  const char* env = std::getenv("QKNH_THREADS");
  if (!env || !*env) return hw;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) throw ConfigFailure("QKNH_THREADS", "QKNH_THREADS must be a positive integer");
  return static_cast<int>(std::min<long>(v, hw));
}

template <typename F>
void parallel_for(int count, int threads, F&& body) {
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  auto worker = [&]() {
    for (int i = next++; i < count && !failed; i = next++) {
      try {
        body(i);
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < std::clamp(threads, 1, std::max(count, 1)); ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

std::vector<double> linspace(const json& window, int points) {
  const double lo = window[0], hi = window[1];
  std::vector<double> out;
  for (int k = 0; k < points; ++k) out.push_back(lo + (hi - lo) * k / (points - 1));
  return out;
}

// ---------------------------------------------------------------------------
// Experiments

struct Context {
  json cfg;
  Potential pot;
  double rate = 0;
  std::uint64_t seed = 0;
  int threads = 1;
  Output* out = nullptr;
  json resolved = json::object();
};

double resolve_rate(const json& cfg, const Potential& pot) {
  const double rate = cfg["sweep"]["rate"];
  if (rate > 0) return rate;
  if (pot.family != PotentialFamily::QuarticDoubleWell) return 1.0;
  return stage("spectrum", [&] {
    return rate_for_separatrix(pot, cfg["experiment"]["separatrix_energy"], cfg["sweep"]["lambda0"]);
  });
}

json params_json(const LatticeParams& p) {
  return {{"E00", p.e00}, {"lambda00", p.lambda00}, {"X", p.x},
          {"Y", p.y},     {"Z", p.z},               {"bracket", p.bracket},
          {"Gamma", p.big_gamma}, {"k", p.k},       {"dE_St_A", p.de_st_a},
          {"dE_St_C", p.de_st_c}, {"rate", p.rate}};
}

json map_json(const TransitionMap& m) {
  json rows = json::array();
  for (int i = 0; i < 3; ++i) rows.push_back({m(i, 0), m(i, 1), m(i, 2)});
  return rows;
}

json prediction_json(const LatticeParams& p, int ensemble, double width) {
  json j;
  const GrowthRates g = stage("knh", [&] { return growth_rates(p); });
  j["case"] = g.tag();
  j["rates"] = {{"dD_A", g.d_a}, {"dD_B", g.d_b}, {"dD_C", g.d_c}, {"Gamma", g.big_gamma}};
  j["P_map"] = map_json(stage("knh", [&] { return knh_predict(p); }));
  const Interval w = weak_bounds(ensemble, width, p);
  j["weak_interval"] = {w.lo, w.hi};
  j["M"] = ensemble;
  j["D"] = width;
  if (p.x > 0 && p.y > p.x) {
    const StrongPrediction s = stage("knh", [&] { return strong_prediction(p, 1e-6, 100); });
    j["strong"] = {{"q", s.q}, {"p", s.p}, {"value", s.value}, {"ensemble_sizes", s.ensemble_sizes}};
    const GeometrySummary geo = subspace_geometry(ensemble, width, p);
    j["geometry"] = {{"N", geo.n}, {"K", geo.big_k}, {"delta_N", geo.delta_n}, {"delta_K", geo.delta_k}, {"k", geo.k}};
  } else {
    j["strong"] = nullptr;
  }
  return j;
}

LatticeParams synthetic_params(const json& syn) {
  LatticeParams p;
  p.x = syn["X"];
  p.y = syn["Y"];
  p.z = syn["Z"];
  const double r = syn["slope_ratio"];
  p.de_st_a = r;
  p.de_st_c = 1.0;
  p.k = r / (1 + r);
  p.bracket = 1.0;
  p.big_gamma = 1.0 / (p.x * p.de_st_a + p.y * p.de_st_c);
  return p;
}

SyntheticLattice synthetic_lattice(const json& e) {
  SyntheticLattice lat;
  lat.x = e["synthetic"]["X"];
  lat.y = e["synthetic"]["Y"];
  lat.z = e["synthetic"]["Z"];
  lat.slope_ratio = e["synthetic"]["slope_ratio"];
  lat.epsilon = e["epsilon"];
  return lat;
}

CrossingLattice build_lattice(const Context& ctx) {
  const json& e = ctx.cfg["experiment"];
  const json& s = ctx.cfg["sweep"];
  Potential pot = ctx.pot;
  pot.sweep.rate = ctx.rate;
  CrossingLattice lat = stage("spectrum", [&] {
    return crossing_lattice(pot, s["window"][0], s["window"][1], e["energy_window"][0], e["energy_window"][1]);
  });
  if (lat.nodes.empty()) throw ExperimentFailure("spectrum", "EmptyWindow", "no crossings inside the window");
  return lat;
}

const CrossingNode& origin_node(const CrossingLattice& lat) {
  const auto it = std::find_if(lat.nodes.begin(), lat.nodes.end(), [](const CrossingNode& n) { return n.m == 0 && n.n == 0; });
  if (it == lat.nodes.end()) throw ExperimentFailure("spectrum", "EmptyWindow", "origin crossing not found");
  return *it;
}

void run_spectrum(Context& ctx) {
  const json& e = ctx.cfg["experiment"];
  const double elo = e["energy_window"][0], ehi = e["energy_window"][1];
  const bool quartic = ctx.pot.family == PotentialFamily::QuarticDoubleWell;
  const auto lambdas = linspace(ctx.cfg["sweep"]["window"], e["lambda_points"]);
  const int levels = e["levels"];
  auto csv = ctx.out->csv_file("spectrum.csv", {"lambda [1]", "kind", "index", "energy [V]"});
  json counts = {{"A", 0}, {"C", 0}, {"modified", 0}, {"exact", 0}};
  std::vector<std::vector<std::vector<std::string>>> rows(lambdas.size());
  parallel_for(static_cast<int>(lambdas.size()), ctx.threads, [&](int i) {
    const double lam = lambdas[static_cast<std::size_t>(i)];
    auto& r = rows[static_cast<std::size_t>(i)];
    const std::vector<Branch> sides = quartic ? std::vector<Branch>{Branch::A, Branch::C} : std::vector<Branch>{Branch::A};
    for (Branch b : sides)
      for (const auto& lv : stage("spectrum", [&] { return branch_levels(ctx.pot, lam, b, elo, ehi); }))
        r.push_back({num(lam), std::string(1, branch_char(b)), std::to_string(lv.label), num(lv.energy)});
    if (quartic) {
      const auto mod = stage("spectrum", [&] { return modified_levels(ctx.pot, lam, elo, ehi); });
      for (std::size_t j = 0; j < mod.size(); ++j) r.push_back({num(lam), "modified", std::to_string(j), num(mod[j])});
    }
    const Eigen::VectorXd ex = stage("oracle", [&] {
      const GridSpec grid = default_grid(ctx.pot, lam, ehi, e["grid_points"]);
      return exact_spectrum(ctx.pot, lam, grid, levels);
    });
    for (Eigen::Index j = 0; j < ex.size(); ++j) r.push_back({num(lam), "exact", std::to_string(j), num(ex(j))});
  });
  for (const auto& block : rows)
    for (const auto& r : block) {
      counts[r[1]] = counts[r[1]].get<int>() + 1;
      if (csv) csv->row(r);
    }
  ctx.out->report("spectrum.json", {{"lambda_points", lambdas.size()}, {"rows", counts}});
}

void run_lattice(Context& ctx) {
  const CrossingLattice lat = build_lattice(ctx);
  if (auto csv = ctx.out->csv_file("lattice.csv", {"m", "n", "m_raw", "n_raw", "lambda [1]", "energy [V]", "time [t]",
                                                    "gap [V]", "probability [1]", "log_q [1]"})) {
    for (const auto& n : lat.nodes)
      csv->row({std::to_string(n.m), std::to_string(n.n), std::to_string(n.m_raw), std::to_string(n.n_raw),
                num(n.lambda), num(n.energy), num(n.time), num(n.gap), num(n.probability), num(n.log_q)});
  }
  const CrossingNode& o = origin_node(lat);
  const LatticeParams p = stage("spectrum", [&] { return local_params(ctx.pot, o, ctx.rate); });
  const double width = zone_width(p.x, p.y, p.de_st_a / p.de_st_c, ctx.cfg["experiment"]["epsilon"]);
  json failures = json::array();
  for (const auto& f : lat.failures) failures.push_back({{"m_raw", f.m_raw}, {"n_raw", f.n_raw}, {"reason", f.reason}});
  ctx.out->report("lattice.json", {{"nodes", lat.nodes.size()},
                                   {"origin", {{"m_raw", lat.m0}, {"n_raw", lat.n0}, {"energy", o.energy},
                                               {"lambda", o.lambda}, {"probability", o.probability}}},
                                   {"params", params_json(p)},
                                   {"zone_width", width},
                                   {"failures", failures}});
}

void run_separatrix(Context& ctx) {
  const json& e = ctx.cfg["experiment"];
  const auto lambdas = linspace(ctx.cfg["sweep"]["window"], e["lambda_points"]);
  std::vector<std::array<double, 3>> rows(lambdas.size());
  parallel_for(static_cast<int>(lambdas.size()), ctx.threads, [&](int i) {
    const double lam = lambdas[static_cast<std::size_t>(i)];
    double es = std::numeric_limits<double>::quiet_NaN();
    try {
      es = separatrix_energy(ctx.pot, lam, ctx.rate);
    } catch (const Error& err) {
      if (err.code() != ErrorCode::NoRoot) throw ExperimentFailure("spectrum", std::string(to_string(err.code())), err.what());
    }
    const double vb = stage("potential", [&] { return barrier_top(ctx.pot, lam).vb; });
    const double floor = stage("potential", [&] { return upper_well_minimum(ctx.pot, lam); });
    rows[static_cast<std::size_t>(i)] = {vb, es, floor};
  });
  if (auto csv = ctx.out->csv_file("separatrix.csv",
                                   {"lambda [1]", "barrier_energy [V]", "separatrix_energy [V]", "upper_well_minimum [V]"}))
    for (std::size_t i = 0; i < lambdas.size(); ++i)
      csv->row({num(lambdas[i]), num(rows[i][0]), num(rows[i][1]), num(rows[i][2])});

  const double l0 = ctx.cfg["sweep"]["lambda0"];
  const ClassicalKnh ck = stage("knh", [&] { return classical_knh(ctx.pot, l0); });
  const double es0 = stage("spectrum", [&] { return separatrix_energy(ctx.pot, l0, ctx.rate); });
  const LatticeParams p = stage("spectrum", [&] { return local_params(ctx.pot, es0, l0, ctx.rate); });
  const double width = zone_width(p.x, p.y, p.de_st_a / p.de_st_c, e["epsilon"]);
  json report = {{"lambda0", l0}, {"separatrix_energy", es0}, {"params", params_json(p)}};
  report["classical"] = {{"rates", {{"dS_A", ck.rates[0]}, {"dS_B", ck.rates[1]}, {"dS_C", ck.rates[2]}}},
                         {"P_A_to_C", ck.probability},
                         {"case_violation", ck.case_violation},
                         {"P_map", map_json(ck.map)}};
  report["quantum"] = prediction_json(p, e["M"], width);
  ctx.out->report("prediction.json", report);
}

std::vector<int> physical_initial_lines(const Network& net, int count) {
  std::vector<int> lines;
  for (int m = net.m_hi - 1; m > net.m_lo && static_cast<int>(lines.size()) < count; --m) {
    const auto& cr = net.crossings[static_cast<std::size_t>(net.a_line(m))];
    if (!cr.empty() && line_zone(net, net.a_line(m), 0) == Zone::Below) lines.push_back(m);
  }
  if (static_cast<int>(lines.size()) < count)
    throw ExperimentFailure("lznet", "EmptyWindow", "fewer than M A-lines start below the separatrix zone");
  return lines;
}

struct Ensemble {
  Network network;
  std::vector<int> initial;
  LatticeParams params;
  double width = 0;
  bool synthetic = true;
};

Ensemble make_ensemble(const Context& ctx, int ensemble_size) {
  const json& e = ctx.cfg["experiment"];
  Ensemble out;
  if (e["synthetic"]["enabled"].get<bool>()) {
    const EnsembleSetup s = stage("lznet", [&] { return ensemble_setup(synthetic_lattice(e), ensemble_size, e["n_c_max"]); });
    out.network = s.network;
    out.initial = s.initial_a_lines;
    out.params = synthetic_params(e["synthetic"]);
  } else {
    const CrossingLattice lat = build_lattice(ctx);
    out.network = stage("lznet", [&] { return schedule(lat.nodes, e["epsilon"]); });
    out.initial = physical_initial_lines(out.network, ensemble_size);
    out.params = stage("spectrum", [&] { return local_params(ctx.pot, origin_node(lat), ctx.rate); });
    out.synthetic = false;
  }
  out.width = zone_width(out.params.x, out.params.y, out.params.de_st_a / out.params.de_st_c, e["epsilon"]);
  return out;
}

void run_evolve(Context& ctx) {
  const json& e = ctx.cfg["experiment"];
  const int ensemble_size = e["M"], realizations = e["R"];
  const Ensemble ens = make_ensemble(ctx, ensemble_size);
  EvolveOptions opts;
  opts.n_c_max = e["n_c_max"];
  const EvolutionResult inc = stage("lznet", [&] { return evolve_incoherent(ens.network, ens.initial, opts); });
  std::vector<EvolutionResult> coherent(static_cast<std::size_t>(realizations));
  PhaseSource src;
  src.seed = ctx.seed;
  parallel_for(realizations, ctx.threads, [&](int r) {
    coherent[static_cast<std::size_t>(r)] =
        stage("lznet", [&] { return evolve_unitary(ens.network, ens.initial, src, static_cast<std::uint64_t>(r), opts); });
  });

  if (auto csv = ctx.out->csv_file("trajectory.csv", {"realization", "n_c", "p_minus [1]", "p_plus [1]", "p_zone [1]"})) {
    auto dump = [&](const std::string& label, const EvolutionResult& res) {
      for (const auto& s : res.trajectory) csv->row({label, std::to_string(s.n_c), num(s.p_minus), num(s.p_plus), num(s.p_zone)});
    };
    dump("incoherent", inc);
    for (int r = 0; r < realizations; ++r) dump(std::to_string(r), coherent[static_cast<std::size_t>(r)]);
  }
  const FinalMatrix fm = stage("lznet", [&] { return final_matrix(ens.network, ens.initial, inc); });
  if (auto csv = ctx.out->csv_file("final_matrix.csv",
                                   {"initial_index", "final_index", "final_branch", "final_label", "probability [1]"})) {
    for (Eigen::Index i = 0; i < fm.probability.rows(); ++i)
      for (Eigen::Index j = 0; j < fm.probability.cols(); ++j) {
        const auto& [b, label] = fm.final_lines[static_cast<std::size_t>(j)];
        csv->row({std::to_string(i + 1), std::to_string(j + 1), std::string(1, branch_char(b)), std::to_string(label),
                  num(fm.probability(i, j))});
      }
  }
  double mean_minus = 0, mean_plus = 0;
  for (const auto& c : coherent) mean_minus += c.p_minus, mean_plus += c.p_plus;
  mean_minus /= realizations;
  mean_plus /= realizations;
  json report = {{"synthetic", ens.synthetic},
                 {"M", ensemble_size},
                 {"R", realizations},
                 {"columns_applied", inc.columns_applied},
                 {"incoherent", {{"p_minus", inc.p_minus}, {"p_plus", inc.p_plus}, {"p_zone", inc.p_zone}}},
                 {"coherent_mean", {{"p_minus", mean_minus}, {"p_plus", mean_plus}}},
                 {"prediction", prediction_json(ens.params, ensemble_size, ens.width)}};
  ctx.out->report("evolve.json", report);
}

void run_sweep(Context& ctx) {
  const json& e = ctx.cfg["experiment"];
  std::vector<int> sizes = e["M_values"].get<std::vector<int>>();
  if (sizes.empty()) sizes.push_back(e["M"]);
  const int realizations = e["R"];
  EvolveOptions opts;
  opts.n_c_max = e["n_c_max"];
  auto csv = ctx.out->csv_file("sweep.csv", {"M", "realization", "p_minus [1]"});
  json runs = json::array();
  for (int m : sizes) {
    const Ensemble ens = make_ensemble(ctx, m);
    const SweepStatistics st = stage("lznet", [&] {
      return sweep_realizations(ens.network, ens.initial, realizations, ctx.seed, opts, ctx.threads);
    });
    if (csv)
      for (int r = 0; r < realizations; ++r)
        csv->row({std::to_string(m), std::to_string(r), num(st.p_minus[static_cast<std::size_t>(r)])});
    runs.push_back({{"M", m},
                    {"mean", st.mean},
                    {"stddev", st.stddev},
                    {"std_error", st.std_error},
                    {"min", st.min},
                    {"max", st.max},
                    {"incoherent_p_minus", st.incoherent_p_minus},
                    {"max_norm_error", st.max_norm_error},
                    {"prediction", prediction_json(ens.params, m, ens.width)}});
  }
  ctx.out->report("sweep.json", {{"R", realizations}, {"runs", runs}});
}

void run_oracle(Context& ctx) {
  const json& e = ctx.cfg["experiment"];
  const CrossingLattice lat = build_lattice(ctx);
  std::vector<const CrossingNode*> nodes;
  for (const auto& n : lat.nodes)
    if (std::exp(-2 * n.table.t_b.value / ctx.pot.hbar) <= 1e-3) nodes.push_back(&n);
  std::sort(nodes.begin(), nodes.end(), [](const CrossingNode* a, const CrossingNode* b) {
    const int da = std::abs(a->m) + std::abs(a->n), db = std::abs(b->m) + std::abs(b->n);
    if (da != db) return da < db;
    return a->energy != b->energy ? a->energy < b->energy : a->lambda < b->lambda;
  });
  const int count = std::min(e["gap_nodes"].get<int>(), static_cast<int>(nodes.size()));
  if (count == 0) throw ExperimentFailure("oracle", "EmptyWindow", "no semiclassical crossings in the window");
  const double ehi = e["energy_window"][1];
  std::vector<GapScan> scans(static_cast<std::size_t>(count));
  parallel_for(count, ctx.threads, [&](int i) {
    const CrossingNode& n = *nodes[static_cast<std::size_t>(i)];
    scans[static_cast<std::size_t>(i)] = stage("oracle", [&] {
      const GridSpec grid = default_grid(ctx.pot, n.lambda, ehi, e["grid_points"]);
      return gap_scan(ctx.pot, n, grid, e["gap_halfwidth"], e["gap_steps"]);
    });
  });
  auto csv = ctx.out->csv_file("oracle.csv", {"m", "n", "lambda_node [1]", "energy_node [V]", "predicted_gap [V]",
                                              "scan_lambda [1]", "scan_gap [V]", "ratio [1]"});
  json rows = json::array();
  for (int i = 0; i < count; ++i) {
    const CrossingNode& n = *nodes[static_cast<std::size_t>(i)];
    const GapScan& g = scans[static_cast<std::size_t>(i)];
    const double ratio = g.gap / n.gap;
    if (csv)
      csv->row({std::to_string(n.m), std::to_string(n.n), num(n.lambda), num(n.energy), num(n.gap), num(g.lambda),
                num(g.gap), num(ratio)});
    rows.push_back({{"m", n.m}, {"n", n.n}, {"ratio", ratio}, {"evaluations", g.evaluations}});
  }
  ctx.out->report("oracle.json", {{"nodes", rows}});
}

// ---------------------------------------------------------------------------

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> realizations;
  std::string out;
  std::vector<std::string> sets;
};

json resolve_config(const Flags& flags, const std::string& mode) {
  json cfg = default_config();
  if (!flags.config.empty()) merge_checked(cfg, load_file(flags.config), "");
  for (const auto& s : flags.sets) merge_checked(cfg, parse_assignment(s), "");
  if (flags.seed) cfg["experiment"]["seed"] = *flags.seed;
  if (flags.realizations) cfg["experiment"]["R"] = *flags.realizations;
  if (!flags.out.empty()) cfg["output"]["directory"] = flags.out;
  if (mode != "validate" && mode != "run") cfg["experiment"]["mode"] = mode;
  return cfg;
}

json error_report(const std::string& kind, const std::string& module, const std::string& code, const std::string& key,
                  const std::string& message) {
  json j = {{"status", "error"}, {"error", kind}, {"message", message}};
  if (!module.empty()) j["module"] = module;
  if (!code.empty()) j["code"] = code;
  if (!key.empty()) j["key"] = key;
  return j;
}

std::string timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

int execute(const std::string& command, const Flags& flags) {
  fs::path dir = flags.out.empty() ? fs::path("qknh_out") : fs::path(flags.out);
  auto fail = [&](int code, const json& report) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (!ec) Output::write_json(dir / "error.json", report);
    std::cerr << report.dump() << '\n';
    return code;
  };
  try {
    json cfg = resolve_config(flags, command);
    dir = cfg["output"]["directory"].get<std::string>();
    const std::vector<Issue> issues = check_config(cfg);

    if (command == "validate") {
      const json report = {{"status", has_errors(issues) ? "invalid" : "valid"}, {"issues", issues}, {"config", cfg}};
      std::cout << report.dump(2) << '\n';
      return has_errors(issues) ? kInvalid : kOk;
    }
    for (const auto& i : issues)
      if (i.level == "error") throw ConfigFailure(i.key, i.message);

    fs::create_directories(dir);
    Output out(dir, cfg["output"]["formats"]);
    Context ctx;
    ctx.cfg = cfg;
    ctx.pot = stage("potential", [&] { return make_potential(cfg); });
    ctx.seed = cfg["experiment"]["seed"].get<std::uint64_t>();
    ctx.threads = thread_cap();
    ctx.out = &out;
    const std::string mode = cfg["experiment"]["mode"];
    const bool needs_rate = mode != "spectrum" && !((mode == "evolve" || mode == "sweep") &&
                                                    cfg["experiment"]["synthetic"]["enabled"].get<bool>());
    ctx.rate = needs_rate ? resolve_rate(cfg, ctx.pot) : 0.0;
    ctx.pot.sweep.rate = needs_rate ? ctx.rate : ctx.pot.sweep.rate;

    if (mode == "spectrum") run_spectrum(ctx);
    else if (mode == "lattice") run_lattice(ctx);
    else if (mode == "separatrix") run_separatrix(ctx);
    else if (mode == "evolve") run_evolve(ctx);
    else if (mode == "sweep") run_sweep(ctx);
    else if (mode == "oracle") run_oracle(ctx);

    json warnings = json::array();
    for (const auto& i : issues) warnings.push_back(i);
    json manifest = {{"tool", "qknh"},
                     {"version", kVersion},
                     {"command", command},
                     {"schema_version", kSchemaVersion},
                     {"seed", ctx.seed},
                     {"threads", ctx.threads},
                     {"config", cfg},
                     {"resolved", {{"sweep_rate", needs_rate ? json(ctx.rate) : json(nullptr)}}},
                     {"warnings", warnings},
                     {"outputs", out.files()},
                     {"created", timestamp()}};
    Output::write_json(dir / "manifest.json", manifest);
    return kOk;
  } catch (const ConfigFailure& e) {
    return fail(kConfigError, error_report("ConfigError", "cli", "", e.key, e.what()));
  } catch (const ExperimentFailure& e) {
    return fail(kExperimentError, error_report("ExperimentError", e.module, e.code, "", e.what()));
  } catch (const Error& e) {
    return fail(kExperimentError, error_report("ExperimentError", "qknh", std::string(to_string(e.code())), "", e.what()));
  } catch (const json::exception& e) {
    return fail(kConfigError, error_report("ConfigError", "cli", "", "", e.what()));
  } catch (const std::exception& e) {
    return fail(kExperimentError, error_report("ExperimentError", "cli", "", "", e.what()));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantum separatrix crossing: level lattices, Landau-Zener networks and KNH predictions"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  Flags flags;
  std::uint64_t seed = 0;
  int realizations = 0;

  const std::vector<std::pair<std::string, std::string>> commands{
      {"spectrum", "Semiclassical branch levels, modified levels and exact levels over the sweep window"},
      {"lattice", "Crossing lattice with local X, Y, Z parameters"},
      {"separatrix", "Quantum separatrix E_s(lambda) with classical and quantum KNH predictions"},
      {"evolve", "Landau-Zener network evolution: trajectories and final-state matrix"},
      {"sweep", "Random-phase realization statistics for one or more ensemble sizes"},
      {"oracle", "Finite-difference gap scans at lattice nodes"},
      {"validate", "Schema and physics checks without running"},
      {"run", "Run the mode named in the configuration"}};
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", flags.config, "JSON configuration file")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Random-phase seed (overrides experiment.seed)");
    sub->add_option("--out", flags.out, "Output directory (overrides output.directory)");
    sub->add_option("--realizations", realizations, "Number of phase realizations (overrides experiment.R)");
    sub->add_option("--set", flags.sets, "Override a config value, e.g. experiment.M=20 (repeatable)")
        ->take_all()
        ->allow_extra_args(false);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  CLI::App* sub = app.get_subcommands().front();
  if (sub->count("--seed")) flags.seed = seed;
  if (sub->count("--realizations")) flags.realizations = realizations;
  return execute(sub->get_name(), flags);
}
