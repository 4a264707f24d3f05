#pragma once

// Experiment configuration: a YAML document with nested sections, parsed with
// line-precise diagnostics and emitted back losslessly.

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mfgraph/common.hpp"
#include "mfgraph/graph.hpp"
#include "mfgraph/kernel.hpp"
#include "mfgraph/laws.hpp"
#include "mfgraph/metrics.hpp"
#include "mfgraph/observables.hpp"
#include "mfgraph/particles.hpp"
#include "mfgraph/pde.hpp"
#include "mfgraph/rearrange.hpp"

namespace mfgraph {

enum class GraphGenerator { uniform, class_permutation, graphon, edge_list };
enum class GraphonPreset { constant, product, cosine, two_block };
enum class KernelPreset { linear_attraction, linear, kuramoto, hodgkin_huxley };

struct GraphConfig {
  GraphGenerator generator = GraphGenerator::uniform;
  std::size_t n = 0;
  double w_bar = 1.0;
  bool include_diagonal = false;
  /// Class size for class_permutation; 0 picks the divisor of n nearest sqrt(n).
  std::size_t m = 0;
  /// Explicit 0-based class map; empty draws one from the seed.
  std::vector<std::size_t> perm;
  GraphonPreset graphon = GraphonPreset::constant;
  std::vector<double> graphon_params{1.0};
  GraphonSampling sampling = GraphonSampling::midpoint;
  std::string path;

  friend bool operator==(const GraphConfig&, const GraphConfig&) = default;
};

struct KernelConfig {
  KernelPreset preset = KernelPreset::linear_attraction;
  double strength = 1.0;
  /// Kuramoto natural frequencies (empty, or one per agent).
  std::vector<double> omega;
  HodgkinHuxleyParams hh;
  /// Initial (n, m, h) gates for hodgkin_huxley.
  std::vector<double> gates;

  friend bool operator==(const KernelConfig&, const KernelConfig&) = default;
};

struct MeanProfile {
  double from = 0.0;
  double to = 0.0;
  double std = 1.0;

  friend bool operator==(const MeanProfile&, const MeanProfile&) = default;
};

/// Either explicit mixtures (one for all agents, or one per agent) or a
/// gaussian per agent with mean from + (to - from) xi_i, xi_i = (i + 1/2) / N.
struct InitialConfig {
  std::vector<GaussianMixture> laws;
  std::optional<MeanProfile> mean_profile;

  friend bool operator==(const InitialConfig&, const InitialConfig&) = default;
};

struct TimeConfig {
  double t_end = 1.0;
  /// Particle step.
  double dt = 0.01;
  /// Output times; empty means {0, t_end}.
  std::vector<double> snapshots;
  /// PDE step; 0 selects it from the CFL limits.
  double pde_dt = 0.0;
  /// Cap on automatic PDE steps; 0 means none.
  double pde_max_dt = 0.0;

  friend bool operator==(const TimeConfig&, const TimeConfig&) = default;
};

struct ObservablesConfig {
  std::size_t n_max = 2;
  double lambda = 4.0;
  bool residual = true;
  TransportRoute route = TransportRoute::fused;
  std::size_t memory_budget_mb = 1024;

  friend bool operator==(const ObservablesConfig&, const ObservablesConfig&) = default;
};

enum class RearrangeSource { random, values };

struct RearrangeConfig {
  std::size_t functions = 2;
  std::size_t cells = 64;
  NormalizationMode mode = NormalizationMode::strict;
  RearrangeSource source = RearrangeSource::random;
  /// K rows of P values when source = values.
  std::vector<std::vector<double>> values;
  /// Shifts in cells; empty means powers of two below P.
  std::vector<std::size_t> shifts;
  /// Also relabel the configured graph (requires graph.n = cells).
  bool apply_to_graph = false;

  friend bool operator==(const RearrangeConfig&, const RearrangeConfig&) = default;
};

enum class SweepGraph { class_permutation, uniform };

struct ConvergenceConfig {
  std::vector<std::size_t> n_values;
  SweepGraph graph = SweepGraph::class_permutation;
  /// Class size; 0 picks the divisor of each N nearest sqrt(N).
  std::size_t m = 0;
  std::size_t replicas = 200;
  std::size_t seeds = 200;
  /// Report times; empty means {0, t_end}.
  std::vector<double> times;

  friend bool operator==(const ConvergenceConfig&, const ConvergenceConfig&) = default;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  GraphConfig graph;
  KernelConfig kernel;
  InitialConfig initial;
  Grid1D grid{-4.0, 4.0, 256};
  TimeConfig time;
  double nu = 0.0;
  double sigma = 0.0;
  Integrator integrator = Integrator::rk4;
  ConvolutionMethod convolution = ConvolutionMethod::fft;
  McKeanEval mckean = McKeanEval::interpolated;
  ObservablesConfig observables;
  RearrangeConfig rearrange;
  ConvergenceConfig convergence;

  friend bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
    return a.seed == b.seed && a.output_dir == b.output_dir && a.graph == b.graph &&
           a.kernel == b.kernel && a.initial == b.initial && a.grid.x_min == b.grid.x_min &&
           a.grid.x_max == b.grid.x_max && a.grid.n_cells == b.grid.n_cells &&
           a.grid.topology == b.grid.topology && a.time == b.time && a.nu == b.nu &&
           a.sigma == b.sigma && a.integrator == b.integrator && a.convolution == b.convolution &&
           a.mckean == b.mckean && a.observables == b.observables && a.rearrange == b.rearrange &&
           a.convergence == b.convergence;
  }
};

// ---------------------------------------------------------------------------
// Enum names

namespace detail {

template <class E>
struct EnumNames;

#define MFGRAPH_ENUM_NAMES(E, ...)                                             \
  template <>                                                                  \
  struct EnumNames<E> {                                                        \
    static const std::vector<std::pair<E, std::string>>& list() {              \
      static const std::vector<std::pair<E, std::string>> v{__VA_ARGS__};      \
      return v;                                                                \
    }                                                                          \
  };

MFGRAPH_ENUM_NAMES(GraphGenerator, {GraphGenerator::uniform, "uniform"},
                   {GraphGenerator::class_permutation, "class_permutation"},
                   {GraphGenerator::graphon, "graphon"}, {GraphGenerator::edge_list, "edge_list"})
MFGRAPH_ENUM_NAMES(GraphonPreset, {GraphonPreset::constant, "constant"},
                   {GraphonPreset::product, "product"}, {GraphonPreset::cosine, "cosine"},
                   {GraphonPreset::two_block, "two_block"})
MFGRAPH_ENUM_NAMES(GraphonSampling, {GraphonSampling::midpoint, "midpoint"},
                   {GraphonSampling::bernoulli, "bernoulli"})
MFGRAPH_ENUM_NAMES(KernelPreset, {KernelPreset::linear_attraction, "linear_attraction"},
                   {KernelPreset::linear, "linear"}, {KernelPreset::kuramoto, "kuramoto"},
                   {KernelPreset::hodgkin_huxley, "hodgkin_huxley"})
MFGRAPH_ENUM_NAMES(RateFunction::Form, {RateFunction::Form::exponential, "exponential"},
                   {RateFunction::Form::linoid, "linoid"}, {RateFunction::Form::sigmoid, "sigmoid"})
MFGRAPH_ENUM_NAMES(Topology, {Topology::line, "line"}, {Topology::torus, "torus"})
MFGRAPH_ENUM_NAMES(Integrator, {Integrator::rk4, "rk4"}, {Integrator::euler, "euler"})
MFGRAPH_ENUM_NAMES(ConvolutionMethod, {ConvolutionMethod::fft, "fft"},
                   {ConvolutionMethod::direct, "direct"})
MFGRAPH_ENUM_NAMES(McKeanEval, {McKeanEval::interpolated, "interpolated"},
                   {McKeanEval::quadrature, "quadrature"})
MFGRAPH_ENUM_NAMES(TransportRoute, {TransportRoute::fused, "fused"}, {TransportRoute::lattice, "lattice"})
MFGRAPH_ENUM_NAMES(NormalizationMode, {NormalizationMode::strict, "strict"},
                   {NormalizationMode::general, "general"})
MFGRAPH_ENUM_NAMES(RearrangeSource, {RearrangeSource::random, "random"},
                   {RearrangeSource::values, "values"})
MFGRAPH_ENUM_NAMES(SweepGraph, {SweepGraph::class_permutation, "class_permutation"},
                   {SweepGraph::uniform, "uniform"})

#undef MFGRAPH_ENUM_NAMES

template <class E>
std::string enum_name(E v) {
  for (const auto& [e, s] : EnumNames<E>::list())
    if (e == v) return s;
  return "?";
}

template <class E>
std::string enum_choices() {
  std::string out;
  for (const auto& [e, s] : EnumNames<E>::list()) out += (out.empty() ? "" : "|") + s;
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Parsing

/// Line/column (1-based) of every parsed field, keyed by JSON-pointer path.
struct SourceMap {
  std::string name = "config";
  std::map<std::string, std::pair<int, int>> marks;

  /// "name:line:col: " for the path or its nearest recorded ancestor.
  std::string where(std::string path) const {
    while (true) {
      auto it = marks.find(path);
      if (it != marks.end())
        return name + ":" + std::to_string(it->second.first) + ":" + std::to_string(it->second.second) + ": ";
      if (path.empty()) return name + ": ";
      path = path.substr(0, path.rfind('/'));
    }
  }
};

namespace detail {

class ConfigReader {
 public:
  explicit ConfigReader(SourceMap& map) : map_(map) {}

  [[noreturn]] void fail(const std::string& path, const std::string& msg) const {
    throw ConfigError(map_.where(path) + (path.empty() ? "/" : path) + ": " + msg);
  }

  void mark(const YAML::Node& n, const std::string& path) {
    const auto m = n.Mark();
    if (m.line >= 0) map_.marks[path] = {m.line + 1, m.column + 1};
  }

  void expect_map(const YAML::Node& n, const std::string& path) {
    mark(n, path);
    if (!n.IsMap()) fail(path, "expected a mapping");
  }

  void expect_keys(const YAML::Node& n, const std::string& path, std::initializer_list<const char*> keys) {
    for (const auto& kv : n) {
      const auto key = kv.first.as<std::string>();
      bool ok = false;
      for (const char* k : keys) ok = ok || key == k;
      if (!ok) {
        mark(kv.first, path + "/" + key);
        fail(path + "/" + key, "unknown key");
      }
    }
  }

  template <class T>
  T scalar(const YAML::Node& n, const std::string& path, const char* what) {
    mark(n, path);
    if (!n.IsScalar()) fail(path, std::string("expected ") + what);
    try {
      return n.as<T>();
    } catch (const YAML::Exception&) {
      fail(path, std::string("expected ") + what + ", got '" + n.Scalar() + "'");
    }
  }

  double number(const YAML::Node& n, const std::string& path) {
    const double v = scalar<double>(n, path, "a number");
    if (!std::isfinite(v)) fail(path, "must be finite");
    return v;
  }

  std::size_t count(const YAML::Node& n, const std::string& path) {
    mark(n, path);
    if (n.IsScalar() && !n.Scalar().empty() && n.Scalar()[0] == '-') fail(path, "must be >= 0");
    return static_cast<std::size_t>(scalar<std::uint64_t>(n, path, "a non-negative integer"));
  }

  template <class E>
  E enumeration(const YAML::Node& n, const std::string& path) {
    const auto s = scalar<std::string>(n, path, "a string");
    for (const auto& [e, name] : EnumNames<E>::list())
      if (name == s) return e;
    fail(path, "unknown value '" + s + "' (expected " + enum_choices<E>() + ")");
  }

  template <class T, class F>
  std::vector<T> list(const YAML::Node& n, const std::string& path, F item) {
    mark(n, path);
    if (!n.IsSequence()) fail(path, "expected a list");
    std::vector<T> out;
    for (std::size_t i = 0; i < n.size(); ++i) out.push_back(item(n[i], path + "/" + std::to_string(i)));
    return out;
  }

  std::vector<double> numbers(const YAML::Node& n, const std::string& path) {
    return list<double>(n, path, [this](const YAML::Node& x, const std::string& p) { return number(x, p); });
  }

  std::vector<std::size_t> counts(const YAML::Node& n, const std::string& path) {
    return list<std::size_t>(n, path, [this](const YAML::Node& x, const std::string& p) { return count(x, p); });
  }

 private:
  SourceMap& map_;
};

#define MFGRAPH_FIELD(node, key) if (const auto& field = node[key]; field)

inline GaussianMixture read_mixture(ConfigReader& r, const YAML::Node& n, const std::string& path) {
  GaussianMixture g;
  g.components = r.list<GaussianComponent>(n, path, [&r](const YAML::Node& c, const std::string& p) {
    r.expect_map(c, p);
    r.expect_keys(c, p, {"mean", "std", "weight"});
    GaussianComponent out;
    if (!c["mean"]) r.fail(p, "missing 'mean'");
    if (!c["std"]) r.fail(p, "missing 'std'");
    out.mean = r.number(c["mean"], p + "/mean");
    out.std = r.number(c["std"], p + "/std");
    MFGRAPH_FIELD(c, "weight") out.weight = r.number(field, p + "/weight");
    return out;
  });
  return g;
}

inline RateFunction read_rate(ConfigReader& r, const YAML::Node& n, const std::string& path) {
  r.expect_map(n, path);
  r.expect_keys(n, path, {"form", "scale", "v_half", "slope"});
  RateFunction f;
  MFGRAPH_FIELD(n, "form") f.form = r.enumeration<RateFunction::Form>(field, path + "/form");
  MFGRAPH_FIELD(n, "scale") f.scale = r.number(field, path + "/scale");
  MFGRAPH_FIELD(n, "v_half") f.v_half = r.number(field, path + "/v_half");
  MFGRAPH_FIELD(n, "slope") f.slope = r.number(field, path + "/slope");
  return f;
}

}  // namespace detail

/// Range and cross-field checks; messages carry the field path and, when a
/// source map is supplied, its line and column.
inline void validate(const ExperimentConfig& c, const SourceMap* map = nullptr) {
  const SourceMap empty;
  const SourceMap& m = map ? *map : empty;
  auto fail = [&](const std::string& path, const std::string& msg) {
    throw ConfigError(m.where(path) + path + ": " + msg);
  };
  auto check = [&](bool ok, const std::string& path, const std::string& msg) {
    if (!ok) fail(path, msg);
  };

  const auto& g = c.graph;
  check(!c.output_dir.empty(), "/output_dir", "must not be empty");
  if (g.generator != GraphGenerator::edge_list) {
    check(g.n >= 1, "/graph/n", "must be >= 1");
    check(g.n <= 1'000'000, "/graph/n", "must be <= 1000000");
  } else {
    check(!g.path.empty(), "/graph/path", "edge_list needs a path");
  }
  check(std::isfinite(g.w_bar), "/graph/w_bar", "must be finite");
  if (g.generator == GraphGenerator::class_permutation) {
    if (g.m != 0) check(g.n % g.m == 0, "/graph/m", "must divide n=" + std::to_string(g.n));
    if (!g.perm.empty()) {
      const std::size_t m_eff = g.m != 0 ? g.m : 1;
      check(g.m != 0, "/graph/perm", "an explicit perm needs an explicit m");
      check(g.perm.size() == g.n / m_eff && is_permutation_of_range(g.perm), "/graph/perm",
            "must be a bijection on 0.." + std::to_string(g.n / m_eff - 1));
    }
  }
  if (g.generator == GraphGenerator::graphon) {
    const std::size_t want = g.graphon == GraphonPreset::cosine || g.graphon == GraphonPreset::two_block ? 2 : 1;
    check(g.graphon_params.size() == want, "/graph/graphon_params",
          detail::enum_name(g.graphon) + " takes " + std::to_string(want) + " parameter(s)");
  }

  const auto& k = c.kernel;
  check(std::isfinite(k.strength), "/kernel/strength", "must be finite");
  if (!k.omega.empty()) {
    check(k.preset == KernelPreset::kuramoto, "/kernel/omega", "only the kuramoto preset takes omega");
    check(g.generator == GraphGenerator::edge_list || k.omega.size() == g.n, "/kernel/omega",
          "needs one frequency per agent (n=" + std::to_string(g.n) + ")");
  }
  if (k.preset == KernelPreset::hodgkin_huxley) {
    check(k.hh.c_m > 0.0, "/kernel/hh/c_m", "must be positive");
    for (const auto* rf : {&k.hh.alpha_n, &k.hh.beta_n, &k.hh.alpha_m, &k.hh.beta_m, &k.hh.alpha_h, &k.hh.beta_h})
      check(rf->slope != 0.0, "/kernel/hh", "rate slopes must be non-zero");
    check(k.gates.size() == 3, "/kernel/gates", "needs the initial (n, m, h) gates");
    for (std::size_t q = 0; q < k.gates.size(); ++q)
      check(k.gates[q] >= 0.0 && k.gates[q] <= 1.0, "/kernel/gates/" + std::to_string(q), "must lie in [0, 1]");
  } else {
    check(k.gates.empty(), "/kernel/gates", "only the hodgkin_huxley preset takes gates");
  }

  const auto& in = c.initial;
  check(in.laws.empty() != !in.mean_profile.has_value(), "/initial",
        "give exactly one of 'laws' or 'mean_profile'");
  for (std::size_t i = 0; i < in.laws.size(); ++i) {
    const std::string p = "/initial/laws/" + std::to_string(i);
    check(!in.laws[i].components.empty(), p, "needs at least one component");
    double total = 0.0;
    for (std::size_t q = 0; q < in.laws[i].components.size(); ++q) {
      const auto& comp = in.laws[i].components[q];
      const std::string cp = p + "/" + std::to_string(q);
      check(comp.std > 0.0, cp + "/std", "must be positive");
      check(comp.weight >= 0.0, cp + "/weight", "must be >= 0");
      total += comp.weight;
    }
    check(total > 0.0, p, "total weight must be positive");
  }
  if (!in.laws.empty() && g.generator != GraphGenerator::edge_list)
    check(in.laws.size() == 1 || in.laws.size() == g.n, "/initial/laws",
          "needs 1 or n=" + std::to_string(g.n) + " mixtures, got " + std::to_string(in.laws.size()));
  if (in.mean_profile) check(in.mean_profile->std > 0.0, "/initial/mean_profile/std", "must be positive");

  check(c.grid.x_max > c.grid.x_min, "/grid/x_max", "must exceed x_min");
  check(c.grid.n_cells >= 8, "/grid/cells", "must be >= 8");
  check(c.grid.n_cells <= (1u << 22), "/grid/cells", "must be <= 4194304");
  if (k.preset == KernelPreset::kuramoto) {
    check(c.grid.topology == Topology::torus, "/grid/topology", "the kuramoto preset needs a torus grid");
    check(std::abs(c.grid.x_max - c.grid.x_min - 2.0 * std::numbers::pi) < 1e-9, "/grid/x_max",
          "the kuramoto torus must have length 2*pi");
  }

  const auto& t = c.time;
  check(t.t_end >= 0.0, "/time/t_end", "must be >= 0");
  check(t.dt > 0.0, "/time/dt", "must be positive");
  check(t.pde_dt >= 0.0, "/time/pde_dt", "must be >= 0");
  check(t.pde_max_dt >= 0.0, "/time/pde_max_dt", "must be >= 0");
  for (std::size_t q = 0; q < t.snapshots.size(); ++q) {
    const std::string p = "/time/snapshots/" + std::to_string(q);
    check(t.snapshots[q] >= 0.0 && t.snapshots[q] <= t.t_end, p, "must lie in [0, t_end]");
    if (q > 0) check(t.snapshots[q] > t.snapshots[q - 1], p, "snapshots must be strictly increasing");
  }
  check(c.nu >= 0.0, "/nu", "must be >= 0");
  check(c.sigma >= 0.0, "/sigma", "must be >= 0");

  const auto& o = c.observables;
  check(o.n_max >= 1 && o.n_max <= kMaxObservableOrder, "/observables/n_max",
        "must lie in [1, " + std::to_string(kMaxObservableOrder) + "]");
  check(o.lambda > 0.0, "/observables/lambda", "must be positive");
  check(o.memory_budget_mb >= 1, "/observables/memory_budget_mb", "must be >= 1");

  const auto& r = c.rearrange;
  check(r.functions >= 1 && r.functions <= 4, "/rearrange/functions", "must lie in [1, 4]");
  if (r.functions >= 1 && r.functions <= 4) {
    const std::size_t nk = pieces_at_level(r.functions);
    check(r.cells >= 1 && r.cells % nk == 0, "/rearrange/cells",
          "must be a multiple of n_K=" + std::to_string(nk) + "; nearest admissible is " +
              std::to_string(nearest_admissible_cells(r.cells, r.functions)));
  }
  if (r.source == RearrangeSource::values) {
    check(r.values.size() == r.functions, "/rearrange/values", "needs one row per function");
    for (std::size_t q = 0; q < r.values.size(); ++q)
      check(r.values[q].size() == r.cells, "/rearrange/values/" + std::to_string(q),
            "needs one value per cell (" + std::to_string(r.cells) + ")");
  } else {
    check(r.values.empty(), "/rearrange/values", "only used when source = values");
  }
  for (std::size_t q = 0; q < r.shifts.size(); ++q)
    check(r.shifts[q] < r.cells, "/rearrange/shifts/" + std::to_string(q), "must be < cells");

  const auto& cv = c.convergence;
  for (std::size_t q = 0; q < cv.n_values.size(); ++q) {
    const std::string p = "/convergence/n_values/" + std::to_string(q);
    check(cv.n_values[q] >= 1, p, "must be >= 1");
    if (cv.graph == SweepGraph::class_permutation && cv.m != 0)
      check(cv.n_values[q] % cv.m == 0, p, "must be a multiple of m=" + std::to_string(cv.m));
  }
  check(cv.replicas >= kMinReplicas, "/convergence/replicas", "must be >= 100");
  check(cv.seeds >= 1, "/convergence/seeds", "must be >= 1");
  for (std::size_t q = 0; q < cv.times.size(); ++q) {
    const std::string p = "/convergence/times/" + std::to_string(q);
    check(cv.times[q] >= 0.0 && cv.times[q] <= t.t_end, p, "must lie in [0, t_end]");
    if (q > 0) check(cv.times[q] > cv.times[q - 1], p, "times must be strictly increasing");
  }
}

/// Parses and validates a configuration document.
inline ExperimentConfig parse_config(const std::string& text, const std::string& source_name = "config",
                                     SourceMap* map_out = nullptr) {
  SourceMap map;
  map.name = source_name;
  detail::ConfigReader r(map);
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(source_name + ":" + std::to_string(e.mark.line + 1) + ":" +
                      std::to_string(e.mark.column + 1) + ": syntax error: " + e.msg);
  }
  ExperimentConfig c;
  r.expect_map(root, "");
  r.expect_keys(root, "", {"seed", "output_dir", "graph", "kernel", "initial", "grid", "time", "nu", "sigma",
                           "integrator", "convolution", "mckean", "observables", "rearrange", "convergence"});
  MFGRAPH_FIELD(root, "seed") c.seed = r.scalar<std::uint64_t>(field, "/seed", "a non-negative 64-bit integer");
  MFGRAPH_FIELD(root, "output_dir") c.output_dir = r.scalar<std::string>(field, "/output_dir", "a string");

  if (const auto& n = root["graph"]; n) {
    r.expect_map(n, "/graph");
    r.expect_keys(n, "/graph", {"generator", "n", "w_bar", "include_diagonal", "m", "perm", "graphon",
                                "graphon_params", "sampling", "path"});
    auto& g = c.graph;
    MFGRAPH_FIELD(n, "generator") g.generator = r.enumeration<GraphGenerator>(field, "/graph/generator");
    MFGRAPH_FIELD(n, "n") g.n = r.count(field, "/graph/n");
    MFGRAPH_FIELD(n, "w_bar") g.w_bar = r.number(field, "/graph/w_bar");
    MFGRAPH_FIELD(n, "include_diagonal")
    g.include_diagonal = r.scalar<bool>(field, "/graph/include_diagonal", "true or false");
    MFGRAPH_FIELD(n, "m") g.m = r.count(field, "/graph/m");
    MFGRAPH_FIELD(n, "perm") g.perm = r.counts(field, "/graph/perm");
    MFGRAPH_FIELD(n, "graphon") g.graphon = r.enumeration<GraphonPreset>(field, "/graph/graphon");
    MFGRAPH_FIELD(n, "graphon_params") g.graphon_params = r.numbers(field, "/graph/graphon_params");
    MFGRAPH_FIELD(n, "sampling") g.sampling = r.enumeration<GraphonSampling>(field, "/graph/sampling");
    MFGRAPH_FIELD(n, "path") g.path = r.scalar<std::string>(field, "/graph/path", "a string");
  } else {
    r.fail("/graph", "missing section");
  }

  if (const auto& n = root["kernel"]; n) {
    r.expect_map(n, "/kernel");
    r.expect_keys(n, "/kernel", {"preset", "strength", "omega", "hh", "gates"});
    auto& k = c.kernel;
    MFGRAPH_FIELD(n, "preset") k.preset = r.enumeration<KernelPreset>(field, "/kernel/preset");
    MFGRAPH_FIELD(n, "strength") k.strength = r.number(field, "/kernel/strength");
    MFGRAPH_FIELD(n, "omega") k.omega = r.numbers(field, "/kernel/omega");
    MFGRAPH_FIELD(n, "gates") k.gates = r.numbers(field, "/kernel/gates");
    if (const auto& h = n["hh"]; h) {
      r.expect_map(h, "/kernel/hh");
      r.expect_keys(h, "/kernel/hh", {"c_m", "g_k", "g_na", "g_l", "v_k", "v_na", "v_l", "i_ext", "alpha_n",
                                      "beta_n", "alpha_m", "beta_m", "alpha_h", "beta_h"});
      auto& p = k.hh;
      for (auto [key, dst] : std::initializer_list<std::pair<const char*, double*>>{
               {"c_m", &p.c_m}, {"g_k", &p.g_k}, {"g_na", &p.g_na}, {"g_l", &p.g_l}, {"v_k", &p.v_k},
               {"v_na", &p.v_na}, {"v_l", &p.v_l}, {"i_ext", &p.i_ext}})
        MFGRAPH_FIELD(h, key)* dst = r.number(field, std::string("/kernel/hh/") + key);
      for (auto [key, dst] : std::initializer_list<std::pair<const char*, RateFunction*>>{
               {"alpha_n", &p.alpha_n}, {"beta_n", &p.beta_n}, {"alpha_m", &p.alpha_m},
               {"beta_m", &p.beta_m}, {"alpha_h", &p.alpha_h}, {"beta_h", &p.beta_h}})
        MFGRAPH_FIELD(h, key)* dst = detail::read_rate(r, field, std::string("/kernel/hh/") + key);
    }
  } else {
    r.fail("/kernel", "missing section");
  }

  if (const auto& n = root["initial"]; n) {
    r.expect_map(n, "/initial");
    r.expect_keys(n, "/initial", {"laws", "mean_profile"});
    MFGRAPH_FIELD(n, "laws")
    c.initial.laws = r.list<GaussianMixture>(field, "/initial/laws", [&r](const YAML::Node& x, const std::string& p) {
      return detail::read_mixture(r, x, p);
    });
    if (const auto& mp = n["mean_profile"]; mp) {
      r.expect_map(mp, "/initial/mean_profile");
      r.expect_keys(mp, "/initial/mean_profile", {"from", "to", "std"});
      MeanProfile prof;
      MFGRAPH_FIELD(mp, "from") prof.from = r.number(field, "/initial/mean_profile/from");
      MFGRAPH_FIELD(mp, "to") prof.to = r.number(field, "/initial/mean_profile/to");
      MFGRAPH_FIELD(mp, "std") prof.std = r.number(field, "/initial/mean_profile/std");
      c.initial.mean_profile = prof;
    }
  } else {
    r.fail("/initial", "missing section");
  }

  if (const auto& n = root["grid"]; n) {
    r.expect_map(n, "/grid");
    r.expect_keys(n, "/grid", {"x_min", "x_max", "cells", "topology"});
    MFGRAPH_FIELD(n, "x_min") c.grid.x_min = r.number(field, "/grid/x_min");
    MFGRAPH_FIELD(n, "x_max") c.grid.x_max = r.number(field, "/grid/x_max");
    MFGRAPH_FIELD(n, "cells") c.grid.n_cells = r.count(field, "/grid/cells");
    MFGRAPH_FIELD(n, "topology") c.grid.topology = r.enumeration<Topology>(field, "/grid/topology");
  }

  if (const auto& n = root["time"]; n) {
    r.expect_map(n, "/time");
    r.expect_keys(n, "/time", {"t_end", "dt", "snapshots", "pde_dt", "pde_max_dt"});
    MFGRAPH_FIELD(n, "t_end") c.time.t_end = r.number(field, "/time/t_end");
    MFGRAPH_FIELD(n, "dt") c.time.dt = r.number(field, "/time/dt");
    MFGRAPH_FIELD(n, "snapshots") c.time.snapshots = r.numbers(field, "/time/snapshots");
    MFGRAPH_FIELD(n, "pde_dt") c.time.pde_dt = r.number(field, "/time/pde_dt");
    MFGRAPH_FIELD(n, "pde_max_dt") c.time.pde_max_dt = r.number(field, "/time/pde_max_dt");
  }

  MFGRAPH_FIELD(root, "nu") c.nu = r.number(field, "/nu");
  MFGRAPH_FIELD(root, "sigma") c.sigma = r.number(field, "/sigma");
  MFGRAPH_FIELD(root, "integrator") c.integrator = r.enumeration<Integrator>(field, "/integrator");
  MFGRAPH_FIELD(root, "convolution") c.convolution = r.enumeration<ConvolutionMethod>(field, "/convolution");
  MFGRAPH_FIELD(root, "mckean") c.mckean = r.enumeration<McKeanEval>(field, "/mckean");

  if (const auto& n = root["observables"]; n) {
    r.expect_map(n, "/observables");
    r.expect_keys(n, "/observables", {"n_max", "lambda", "residual", "route", "memory_budget_mb"});
    auto& o = c.observables;
    MFGRAPH_FIELD(n, "n_max") o.n_max = r.count(field, "/observables/n_max");
    MFGRAPH_FIELD(n, "lambda") o.lambda = r.number(field, "/observables/lambda");
    MFGRAPH_FIELD(n, "residual") o.residual = r.scalar<bool>(field, "/observables/residual", "true or false");
    MFGRAPH_FIELD(n, "route") o.route = r.enumeration<TransportRoute>(field, "/observables/route");
    MFGRAPH_FIELD(n, "memory_budget_mb") o.memory_budget_mb = r.count(field, "/observables/memory_budget_mb");
  }

  if (const auto& n = root["rearrange"]; n) {
    r.expect_map(n, "/rearrange");
    r.expect_keys(n, "/rearrange", {"functions", "cells", "mode", "source", "values", "shifts", "apply_to_graph"});
    auto& q = c.rearrange;
    MFGRAPH_FIELD(n, "functions") q.functions = r.count(field, "/rearrange/functions");
    MFGRAPH_FIELD(n, "cells") q.cells = r.count(field, "/rearrange/cells");
    MFGRAPH_FIELD(n, "mode") q.mode = r.enumeration<NormalizationMode>(field, "/rearrange/mode");
    MFGRAPH_FIELD(n, "source") q.source = r.enumeration<RearrangeSource>(field, "/rearrange/source");
    MFGRAPH_FIELD(n, "values")
    q.values = r.list<std::vector<double>>(field, "/rearrange/values", [&r](const YAML::Node& x, const std::string& p) {
      return r.numbers(x, p);
    });
    MFGRAPH_FIELD(n, "shifts") q.shifts = r.counts(field, "/rearrange/shifts");
    MFGRAPH_FIELD(n, "apply_to_graph")
    q.apply_to_graph = r.scalar<bool>(field, "/rearrange/apply_to_graph", "true or false");
  }

  if (const auto& n = root["convergence"]; n) {
    r.expect_map(n, "/convergence");
    r.expect_keys(n, "/convergence", {"n_values", "graph", "m", "replicas", "seeds", "times"});
    auto& v = c.convergence;
    MFGRAPH_FIELD(n, "n_values") v.n_values = r.counts(field, "/convergence/n_values");
    MFGRAPH_FIELD(n, "graph") v.graph = r.enumeration<SweepGraph>(field, "/convergence/graph");
    MFGRAPH_FIELD(n, "m") v.m = r.count(field, "/convergence/m");
    MFGRAPH_FIELD(n, "replicas") v.replicas = r.count(field, "/convergence/replicas");
    MFGRAPH_FIELD(n, "seeds") v.seeds = r.count(field, "/convergence/seeds");
    MFGRAPH_FIELD(n, "times") v.times = r.numbers(field, "/convergence/times");
  }

  validate(c, &map);
  if (map_out) *map_out = std::move(map);
  return c;
}

#undef MFGRAPH_FIELD

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open configuration file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

// ---------------------------------------------------------------------------
// Emission

namespace detail {

inline void emit_numbers(YAML::Emitter& out, const std::vector<double>& xs) {
  out << YAML::Flow << YAML::BeginSeq;
  for (double x : xs) out << format_double(x);
  out << YAML::EndSeq;
}

inline void emit_counts(YAML::Emitter& out, const std::vector<std::size_t>& xs) {
  out << YAML::Flow << YAML::BeginSeq;
  for (auto x : xs) out << x;
  out << YAML::EndSeq;
}

inline void emit_rate(YAML::Emitter& out, const char* key, const RateFunction& f) {
  out << YAML::Key << key << YAML::Value << YAML::Flow << YAML::BeginMap;
  out << YAML::Key << "form" << YAML::Value << enum_name(f.form);
  out << YAML::Key << "scale" << YAML::Value << format_double(f.scale);
  out << YAML::Key << "v_half" << YAML::Value << format_double(f.v_half);
  out << YAML::Key << "slope" << YAML::Value << format_double(f.slope);
  out << YAML::EndMap;
}

}  // namespace detail

/// Full text form; parse_config(to_yaml(c)) == c.
inline std::string to_yaml(const ExperimentConfig& c) {
  using detail::enum_name;
  YAML::Emitter out;
  auto num = [](double v) { return format_double(v); };
  out << YAML::BeginMap;
  out << YAML::Key << "seed" << YAML::Value << c.seed;
  out << YAML::Key << "output_dir" << YAML::Value << YAML::DoubleQuoted << c.output_dir;

  const auto& g = c.graph;
  out << YAML::Key << "graph" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "generator" << YAML::Value << enum_name(g.generator);
  out << YAML::Key << "n" << YAML::Value << g.n;
  out << YAML::Key << "w_bar" << YAML::Value << num(g.w_bar);
  out << YAML::Key << "include_diagonal" << YAML::Value << g.include_diagonal;
  out << YAML::Key << "m" << YAML::Value << g.m;
  out << YAML::Key << "perm" << YAML::Value;
  detail::emit_counts(out, g.perm);
  out << YAML::Key << "graphon" << YAML::Value << enum_name(g.graphon);
  out << YAML::Key << "graphon_params" << YAML::Value;
  detail::emit_numbers(out, g.graphon_params);
  out << YAML::Key << "sampling" << YAML::Value << enum_name(g.sampling);
  out << YAML::Key << "path" << YAML::Value << YAML::DoubleQuoted << g.path;
  out << YAML::EndMap;

  const auto& k = c.kernel;
  out << YAML::Key << "kernel" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "preset" << YAML::Value << enum_name(k.preset);
  out << YAML::Key << "strength" << YAML::Value << num(k.strength);
  out << YAML::Key << "omega" << YAML::Value;
  detail::emit_numbers(out, k.omega);
  out << YAML::Key << "gates" << YAML::Value;
  detail::emit_numbers(out, k.gates);
  out << YAML::Key << "hh" << YAML::Value << YAML::BeginMap;
  const auto& p = k.hh;
  for (auto [key, v] : std::initializer_list<std::pair<const char*, double>>{
           {"c_m", p.c_m}, {"g_k", p.g_k}, {"g_na", p.g_na}, {"g_l", p.g_l}, {"v_k", p.v_k},
           {"v_na", p.v_na}, {"v_l", p.v_l}, {"i_ext", p.i_ext}})
    out << YAML::Key << key << YAML::Value << num(v);
  detail::emit_rate(out, "alpha_n", p.alpha_n);
  detail::emit_rate(out, "beta_n", p.beta_n);
  detail::emit_rate(out, "alpha_m", p.alpha_m);
  detail::emit_rate(out, "beta_m", p.beta_m);
  detail::emit_rate(out, "alpha_h", p.alpha_h);
  detail::emit_rate(out, "beta_h", p.beta_h);
  out << YAML::EndMap << YAML::EndMap;

  out << YAML::Key << "initial" << YAML::Value << YAML::BeginMap;
  if (!c.initial.laws.empty()) {
    out << YAML::Key << "laws" << YAML::Value << YAML::BeginSeq;
    for (const auto& law : c.initial.laws) {
      out << YAML::Flow << YAML::BeginSeq;
      for (const auto& comp : law.components)
        out << YAML::Flow << YAML::BeginMap << YAML::Key << "mean" << YAML::Value << num(comp.mean)
            << YAML::Key << "std" << YAML::Value << num(comp.std) << YAML::Key << "weight" << YAML::Value
            << num(comp.weight) << YAML::EndMap;
      out << YAML::EndSeq;
    }
    out << YAML::EndSeq;
  }
  if (c.initial.mean_profile) {
    const auto& mp = *c.initial.mean_profile;
    out << YAML::Key << "mean_profile" << YAML::Value << YAML::Flow << YAML::BeginMap << YAML::Key << "from"
        << YAML::Value << num(mp.from) << YAML::Key << "to" << YAML::Value << num(mp.to) << YAML::Key << "std"
        << YAML::Value << num(mp.std) << YAML::EndMap;
  }
  out << YAML::EndMap;

  out << YAML::Key << "grid" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "x_min" << YAML::Value << num(c.grid.x_min);
  out << YAML::Key << "x_max" << YAML::Value << num(c.grid.x_max);
  out << YAML::Key << "cells" << YAML::Value << c.grid.n_cells;
  out << YAML::Key << "topology" << YAML::Value << enum_name(c.grid.topology);
  out << YAML::EndMap;

  out << YAML::Key << "time" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "t_end" << YAML::Value << num(c.time.t_end);
  out << YAML::Key << "dt" << YAML::Value << num(c.time.dt);
  out << YAML::Key << "snapshots" << YAML::Value;
  detail::emit_numbers(out, c.time.snapshots);
  out << YAML::Key << "pde_dt" << YAML::Value << num(c.time.pde_dt);
  out << YAML::Key << "pde_max_dt" << YAML::Value << num(c.time.pde_max_dt);
  out << YAML::EndMap;

  out << YAML::Key << "nu" << YAML::Value << num(c.nu);
  out << YAML::Key << "sigma" << YAML::Value << num(c.sigma);
  out << YAML::Key << "integrator" << YAML::Value << enum_name(c.integrator);
  out << YAML::Key << "convolution" << YAML::Value << enum_name(c.convolution);
  out << YAML::Key << "mckean" << YAML::Value << enum_name(c.mckean);

  const auto& o = c.observables;
  out << YAML::Key << "observables" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "n_max" << YAML::Value << o.n_max;
  out << YAML::Key << "lambda" << YAML::Value << num(o.lambda);
  out << YAML::Key << "residual" << YAML::Value << o.residual;
  out << YAML::Key << "route" << YAML::Value << enum_name(o.route);
  out << YAML::Key << "memory_budget_mb" << YAML::Value << o.memory_budget_mb;
  out << YAML::EndMap;

  const auto& r = c.rearrange;
  out << YAML::Key << "rearrange" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "functions" << YAML::Value << r.functions;
  out << YAML::Key << "cells" << YAML::Value << r.cells;
  out << YAML::Key << "mode" << YAML::Value << enum_name(r.mode);
  out << YAML::Key << "source" << YAML::Value << enum_name(r.source);
  out << YAML::Key << "values" << YAML::Value << YAML::BeginSeq;
  for (const auto& row : r.values) detail::emit_numbers(out, row);
  out << YAML::EndSeq;
  out << YAML::Key << "shifts" << YAML::Value;
  detail::emit_counts(out, r.shifts);
  out << YAML::Key << "apply_to_graph" << YAML::Value << r.apply_to_graph;
  out << YAML::EndMap;

  const auto& v = c.convergence;
  out << YAML::Key << "convergence" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "n_values" << YAML::Value;
  detail::emit_counts(out, v.n_values);
  out << YAML::Key << "graph" << YAML::Value << enum_name(v.graph);
  out << YAML::Key << "m" << YAML::Value << v.m;
  out << YAML::Key << "replicas" << YAML::Value << v.replicas;
  out << YAML::Key << "seeds" << YAML::Value << v.seeds;
  out << YAML::Key << "times" << YAML::Value;
  detail::emit_numbers(out, v.times);
  out << YAML::EndMap;

  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

// ---------------------------------------------------------------------------
// Builders

/// Divisor of n nearest sqrt(n); ties go to the smaller divisor.
inline std::size_t divisor_nearest_sqrt(std::size_t n) {
  require(n >= 1, "divisor_nearest_sqrt: n must be >= 1");
  const double r = std::sqrt(static_cast<double>(n));
  std::size_t best = 1;
  for (std::size_t d = 1; d <= n; ++d)
    if (n % d == 0 && std::abs(static_cast<double>(d) - r) < std::abs(static_cast<double>(best) - r)) best = d;
  return best;
}

inline std::function<double(double, double)> graphon_function(GraphonPreset p, const std::vector<double>& a) {
  switch (p) {
    case GraphonPreset::constant:
      return [c = a.at(0)](double, double) { return c; };
    case GraphonPreset::product:
      return [c = a.at(0)](double x, double y) { return c * x * y; };
    case GraphonPreset::cosine:
      return [b0 = a.at(0), b1 = a.at(1)](double x, double y) {
        return b0 + b1 * std::cos(2.0 * std::numbers::pi * (x - y));
      };
    case GraphonPreset::two_block:
      return [in = a.at(0), out = a.at(1)](double x, double y) { return (x < 0.5) == (y < 0.5) ? in : out; };
  }
  return {};
}

/// Weights for the configured graph; n_override replaces graph.n (sweeps).
inline SparseWeights build_weights(const ExperimentConfig& c, std::size_t n_override = 0) {
  const auto& g = c.graph;
  const std::size_t n = n_override ? n_override : g.n;
  switch (g.generator) {
    case GraphGenerator::uniform:
      return gen_uniform(n, g.w_bar, g.include_diagonal);
    case GraphGenerator::class_permutation: {
      const std::size_t m = g.m ? g.m : divisor_nearest_sqrt(n);
      if (!g.perm.empty() && !n_override) return gen_class_permutation(n, m, g.perm);
      return gen_class_permutation_seeded(n, m, c.seed);
    }
    case GraphGenerator::graphon:
      return gen_from_graphon(n, graphon_function(g.graphon, g.graphon_params), g.sampling, c.seed);
    case GraphGenerator::edge_list: {
      std::ifstream in(g.path);
      if (!in) throw ConfigError("/graph/path: cannot open '" + g.path + "'");
      try {
        return read_edge_list(in);
      } catch (const InvalidArgument& e) {
        throw ConfigError("/graph/path: " + std::string(e.what()));
      }
    }
  }
  throw ConfigError("/graph/generator: unsupported");
}

inline Dynamics build_dynamics(const ExperimentConfig& c, std::size_t n) {
  const auto& k = c.kernel;
  switch (k.preset) {
    case KernelPreset::linear_attraction:
      return Dynamics{linear_attraction(k.strength), {}};
    case KernelPreset::linear:
      return Dynamics{linear_kernel(k.strength), {}};
    case KernelPreset::kuramoto:
      if (!k.omega.empty() && k.omega.size() != n)
        throw ConfigError("/kernel/omega: needs one frequency per agent (n=" + std::to_string(n) + ")");
      return kuramoto(k.strength, k.omega);
    case KernelPreset::hodgkin_huxley:
      return hodgkin_huxley(k.hh);
  }
  throw ConfigError("/kernel/preset: unsupported");
}

/// One mixture per agent.
inline std::vector<GaussianMixture> build_initial_laws(const ExperimentConfig& c, std::size_t n) {
  const auto& in = c.initial;
  std::vector<GaussianMixture> out;
  if (in.mean_profile) {
    const auto& p = *in.mean_profile;
    for (std::size_t i = 0; i < n; ++i) {
      const double xi = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
      out.push_back(GaussianMixture{{{p.from + (p.to - p.from) * xi, p.std, 1.0}}});
    }
    return out;
  }
  if (in.laws.size() == 1) return std::vector<GaussianMixture>(n, in.laws.front());
  if (in.laws.size() != n)
    throw ConfigError("/initial/laws: needs 1 or n=" + std::to_string(n) + " mixtures");
  return in.laws;
}

/// Output times: the configured snapshots, or {0, t_end}.
inline std::vector<double> snapshot_times(const ExperimentConfig& c) {
  if (!c.time.snapshots.empty()) return c.time.snapshots;
  if (c.time.t_end == 0.0) return {0.0};
  return {0.0, c.time.t_end};
}

inline SolveOptions solve_options(const ExperimentConfig& c) {
  SolveOptions o;
  o.dt = c.time.pde_dt;
  if (c.time.pde_max_dt > 0.0) o.max_dt = c.time.pde_max_dt;
  o.convolution = c.convolution;
  return o;
}

}  // namespace mfgraph
