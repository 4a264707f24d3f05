#pragma once

// Subcommand pipelines. Each writes its artifacts plus a manifest into one
// output directory; all content depends only on the configuration.

#include <openssl/evp.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "mfgraph/config.hpp"
#include "mfgraph/metrics.hpp"
#include "mfgraph/observables.hpp"
#include "mfgraph/particles.hpp"
#include "mfgraph/pde.hpp"
#include "mfgraph/rearrange.hpp"
#include "mfgraph/trees.hpp"

namespace mfgraph {

inline constexpr const char* kVersion = "1.0.0";

inline std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256: digest failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return os.str();
}

/// Collects the files of one run and writes them with their digests.
class OutputSet {
 public:
  explicit OutputSet(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw ConfigError("output_dir: cannot create '" + dir_.string() + "': " + ec.message());
  }

  const std::filesystem::path& dir() const noexcept { return dir_; }

  void write(const std::string& name, const std::string& content) {
    const auto path = dir_ / name;
    std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    os.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
    files_.push_back({name, sha256_hex(content), content.size()});
  }

  struct Entry {
    std::string name;
    std::string sha256;
    std::size_t bytes = 0;
  };
  const std::vector<Entry>& files() const noexcept { return files_; }

 private:
  std::filesystem::path dir_;
  std::vector<Entry> files_;
};

struct RunOptions {
  /// Overrides the configured seed when set.
  std::optional<std::uint64_t> seed;
  /// Overrides the output directory (then MFGRAPH_OUT, then output_dir).
  std::optional<std::string> out_dir;
};

struct RunResult {
  std::filesystem::path out_dir;
  /// Digest of manifest.json.
  std::string manifest_sha256;
  std::vector<OutputSet::Entry> files;
};

inline std::filesystem::path resolve_output_dir(const ExperimentConfig& c, const RunOptions& o) {
  if (o.out_dir) return *o.out_dir;
  if (const char* env = std::getenv("MFGRAPH_OUT"); env && *env) return env;
  return c.output_dir;
}

namespace detail {

template <class F>
std::string to_text(F&& f) {
  std::ostringstream os;
  f(os);
  return os.str();
}

inline std::string csv_header(std::initializer_list<const char*> cols) {
  std::string s;
  for (const char* c : cols) s += (s.empty() ? "" : ",") + std::string(c);
  return s + "\n";
}

/// Writes config.yaml and manifest.json; the manifest lists every file of the run.
inline RunResult finish_run(const std::string& command, const ExperimentConfig& c, OutputSet& out,
                            const std::vector<std::string>& inputs = {}) {
  const std::string canonical = to_yaml(c);
  out.write("config.yaml", canonical);
  nlohmann::ordered_json m;
  m["command"] = command;
  m["version"] = kVersion;
  m["seed"] = c.seed;
  m["config_sha256"] = sha256_hex(canonical);
  m["inputs"] = nlohmann::ordered_json::array();
  for (const auto& path : inputs) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    m["inputs"].push_back({{"path", path}, {"sha256", sha256_hex(ss.str())}});
  }
  m["outputs"] = nlohmann::ordered_json::array();
  for (const auto& f : out.files()) m["outputs"].push_back({{"file", f.name}, {"sha256", f.sha256}, {"bytes", f.bytes}});
  const std::string text = m.dump(2) + "\n";
  const auto path = out.dir() / "manifest.json";
  std::ofstream os(path, std::ios::binary);
  os << text;
  if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
  return RunResult{out.dir(), sha256_hex(text), out.files()};
}

inline std::vector<std::string> graph_inputs(const ExperimentConfig& c) {
  if (c.graph.generator == GraphGenerator::edge_list) return {c.graph.path};
  return {};
}

/// Particle state at t = 0: sampled scalar positions, plus the configured
/// gates for hodgkin_huxley.
inline ParticleState initial_particles(const ExperimentConfig& c, const Dynamics& dyn, std::size_t n) {
  const auto laws = build_initial_laws(c, n);
  ParticleState x0 = sample_initial(laws, n, c.seed, 0, dyn.kernel.period);
  if (dyn.kernel.dim == 1) return x0;
  ParticleState x(n, dyn.kernel.dim, dyn.kernel.period);
  for (std::size_t i = 0; i < n; ++i) {
    x.at(i, 0) = x0.at(i, 0);
    for (std::size_t q = 1; q < dyn.kernel.dim; ++q) x.at(i, q) = c.kernel.gates.at(q - 1);
  }
  return x;
}

inline Kernel scalar_kernel(const ExperimentConfig& c, std::size_t n, const char* command) {
  if (c.kernel.preset == KernelPreset::hodgkin_huxley)
    throw ConfigError(std::string("/kernel/preset: ") + command +
                      " needs a scalar kernel; hodgkin_huxley is particle-only");
  const Dynamics d = build_dynamics(c, n);
  if (d.self_drift)
    throw ConfigError(std::string("/kernel/omega: ") + command + " does not support natural frequencies");
  return d.kernel;
}

inline void check_grid_matches(const ExperimentConfig& c, const Kernel& k) {
  if (k.on_torus() != c.grid.periodic())
    throw ConfigError("/grid/topology: " + std::string(k.on_torus() ? "torus kernel needs a torus grid"
                                                                    : "line kernel needs a line grid"));
}

inline void write_ledger(OutputSet& out, const TransportLedger& l, const FiberedDensity& f0,
                         const FiberedDensity& f1) {
  out.write("ledger.csv", to_text([&](std::ostream& os) {
              os << csv_header({"steps", "max_mass_drift_per_step", "total_leakage", "clamp_total",
                                "min_value_before_clamp"});
              os << l.steps << ',' << format_double(l.max_mass_drift_per_step) << ','
                 << format_double(l.total_leakage()) << ',' << format_double(l.clamp_total) << ','
                 << format_double(l.min_value_before_clamp) << '\n';
            }));
  out.write("mass.csv", to_text([&](std::ostream& os) {
              os << csv_header({"fiber", "mass_initial", "mass_final", "leaked"});
              for (std::size_t k = 0; k < f0.n_fibers; ++k)
                os << k << ',' << format_double(f0.fiber_mass(k)) << ',' << format_double(f1.fiber_mass(k)) << ','
                   << format_double(k < l.leakage.size() ? l.leakage[k] : 0.0) << '\n';
            }));
}

inline SolveResult run_solver(const ExperimentConfig& c, const SparseWeights& w, const Kernel& k) {
  const auto laws = build_initial_laws(c, w.n_agents());
  const FiberedDensity f0 = density_from_mixtures(c.grid, laws);
  return solve(f0, w, k, c.nu, c.time.t_end, snapshot_times(c), solve_options(c));
}

}  // namespace detail

inline ExperimentConfig apply_options(ExperimentConfig c, const RunOptions& o) {
  if (o.seed) c.seed = *o.seed;
  return c;
}

/// Particle trajectories at the snapshot times, plus the scaling report of w.
inline RunResult cmd_simulate(const ExperimentConfig& cfg, const RunOptions& opts = {}) {
  const ExperimentConfig c = apply_options(cfg, opts);
  OutputSet out(resolve_output_dir(c, opts));
  const SparseWeights w = build_weights(c);
  const std::size_t n = w.n_agents();
  const Dynamics dyn = build_dynamics(c, n);
  if (dyn.kernel.on_torus() && c.kernel.preset != KernelPreset::kuramoto)
    throw ConfigError("/kernel/preset: unsupported torus kernel");

  ParticleState x = detail::initial_particles(c, dyn, n);
  NoiseSource noise(c.seed, 0, n);
  std::vector<ParticleState> snaps;
  const auto times = snapshot_times(c);
  std::size_t next = 0;
  auto emit_due = [&] {
    while (next < times.size() && times[next] <= x.time + 1e-12) {
      ParticleState s = x;
      s.time = times[next++];
      snaps.push_back(std::move(s));
    }
  };
  emit_due();
  for (const auto& [h, report] : detail::step_schedule(times, c.time.dt)) {
    if (h == 0.0) {
      emit_due();
      continue;
    }
    if (c.sigma > 0.0)
      x = step_stochastic(w, dyn, x, h, c.sigma, noise);
    else
      x = step_deterministic(w, dyn, x, h, c.integrator);
    for (double v : x.positions)
      if (!std::isfinite(v)) throw NumericGuardError("simulate: non-finite state at t=" + format_double(x.time));
    if (report) emit_due();
  }
  emit_due();

  out.write("trajectory.csv", detail::to_text([&](std::ostream& os) { write_trajectory_csv(os, snaps); }));
  const ScalingReport s = check_scaling(w);
  out.write("scaling.csv", detail::to_text([&](std::ostream& os) {
              os << detail::csv_header({"n_agents", "nnz", "max_row_abs_sum", "max_col_abs_sum", "max_entry_abs",
                                        "density"});
              os << n << ',' << w.nnz() << ',' << format_double(s.max_row_abs_sum) << ','
                 << format_double(s.max_col_abs_sum) << ',' << format_double(s.max_entry_abs) << ','
                 << format_double(s.density) << '\n';
            }));
  return detail::finish_run("simulate", c, out, detail::graph_inputs(c));
}

/// Fibered density snapshots and the conservation ledger.
inline RunResult cmd_solve(const ExperimentConfig& cfg, const RunOptions& opts = {}) {
  const ExperimentConfig c = apply_options(cfg, opts);
  OutputSet out(resolve_output_dir(c, opts));
  const SparseWeights w = build_weights(c);
  const Kernel k = detail::scalar_kernel(c, w.n_agents(), "solve");
  detail::check_grid_matches(c, k);
  const SolveResult res = detail::run_solver(c, w, k);
  out.write("density.csv", detail::to_text([&](std::ostream& os) { write_density_csv(os, res.snapshots); }));
  detail::write_ledger(out, res.ledger, res.snapshots.front(), res.snapshots.back());
  return detail::finish_run("solve", c, out, detail::graph_inputs(c));
}

/// Observables of every tree of order <= n_max at the final snapshot, the
/// truncated hierarchy norm at every snapshot, and the residual of the
/// hierarchy on consecutive snapshot triples.
inline RunResult cmd_observe(const ExperimentConfig& cfg, const RunOptions& opts = {}) {
  const ExperimentConfig c = apply_options(cfg, opts);
  OutputSet out(resolve_output_dir(c, opts));
  const SparseWeights w = build_weights(c);
  const Kernel k = detail::scalar_kernel(c, w.n_agents(), "observe");
  detail::check_grid_matches(c, k);
  const SolveResult res = detail::run_solver(c, w, k);
  const auto& snaps = res.snapshots;
  TauOptions topts;
  topts.memory_budget_bytes = c.observables.memory_budget_mb << 20;

  std::ostringstream index;
  index << detail::csv_header({"tree", "order", "csv", "binary", "integral", "l2_norm", "tau_density"});
  const HierarchyState final_state = hierarchy(w, snaps.back(), c.observables.n_max, c.observables.lambda, topts);
  std::size_t id = 0;
  for (const auto& [t, obs] : final_state.observables) {
    const std::string stem = "observables/tree_" + std::to_string(id++);
    std::string csv;
    if (obs.order() <= 2) {
      csv = stem + ".csv";
      out.write(csv, detail::to_text([&](std::ostream& os) { write_observable_csv(os, obs); }));
    }
    out.write(stem + ".bin", detail::to_text([&](std::ostream& os) { write_observable_binary(os, obs); }));
    index << '"' << t.to_string() << "\"," << t.order() << ',' << csv << ',' << stem << ".bin,"
          << format_double(obs.integral()) << ',' << format_double(obs.l2_norm()) << ','
          << format_double(tau_density(t, w)) << '\n';
  }
  out.write("observables/index.csv", index.str());

  AdmissibilityInputs in;
  const ScalingReport s = check_scaling(w);
  in.w_norm = in.w_tilde_norm = s.max_row_abs_sum;
  in.t_star = c.time.t_end;
  in.div_k_sup = k.div_sup;
  in.f0_l1 = 0.0;
  for (std::size_t q = 0; q < snaps.front().n_fibers; ++q) in.f0_l1 = std::max(in.f0_l1, snaps.front().fiber_mass(q));
  in.f0_l2 = in.f0_tilde_l2 = fiber_l2_sup(snaps.front());
  const Admissibility adm = lambda_admissibility(c.observables.lambda, in);

  std::ostringstream norms;
  norms << detail::csv_header({"t", "lambda", "norm", "truncation_order", "argmax_tree", "sqrt_lambda_threshold",
                               "admissible"});
  for (const auto& f : snaps) {
    const auto h = hierarchy(w, f, c.observables.n_max, c.observables.lambda, topts);
    const auto nr = hierarchy_norm(h);
    norms << format_double(f.time) << ',' << format_double(c.observables.lambda) << ',' << format_double(nr.value)
          << ',' << nr.truncation_order << ",\"" << nr.argmax_tree << "\","
          << format_double(adm.sqrt_lambda_threshold) << ',' << (adm.admissible ? 1 : 0) << '\n';
  }
  out.write("hierarchy_norms.csv", norms.str());

  if (c.observables.residual) {
    std::ostringstream resid;
    resid << detail::csv_header({"tree", "t", "dt", "dx", "residual"});
    const std::size_t max_order = std::min<std::size_t>(c.observables.n_max, kMaxObservableOrder - 1);
    for (std::size_t q = 0; q + 2 < snaps.size(); ++q) {
      const std::vector<FiberedDensity> triple{snaps[q], snaps[q + 1], snaps[q + 2]};
      for (std::size_t order = 1; order <= max_order; ++order)
        for (const auto& t : enumerate_trees(order)) {
          const auto r = hierarchy_residual(t, w, triple, k, c.nu, c.observables.route, topts);
          resid << '"' << t.to_string() << "\"," << format_double(r.time) << ',' << format_double(r.dt) << ','
                << format_double(r.dx) << ',' << format_double(r.value) << '\n';
        }
    }
    out.write("residual.csv", resid.str());
  }
  detail::write_ledger(out, res.ledger, snaps.front(), snaps.back());
  return detail::finish_run("observe", c, out, detail::graph_inputs(c));
}

/// The cell functions of the rearrange section: the configured values, or
/// seeded uniform draws (strict: (0, 2^{-m+1}], general: [-1, 1]).
inline CellFunctions rearrange_inputs(const ExperimentConfig& c) {
  const auto& r = c.rearrange;
  CellFunctions g(r.functions, r.cells, r.mode);
  if (r.source == RearrangeSource::values) {
    for (std::size_t m = 1; m <= r.functions; ++m)
      for (std::size_t x = 0; x < r.cells; ++x) g.at(m, x) = r.values[m - 1][x];
    return g;
  }
  for (std::size_t m = 1; m <= r.functions; ++m) {
    auto rng = make_engine(c.seed, StreamPurpose::rearrange_input, 0, m);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t x = 0; x < r.cells; ++x) {
      const double v = u(rng);
      g.at(m, x) = r.mode == NormalizationMode::strict ? CellFunctions::cap(m) * (1.0 - v) : 2.0 * v - 1.0;
    }
  }
  return g;
}

/// Rearrangement permutation, its modulus table and, optionally, the relabeled graph.
inline RunResult cmd_rearrange(const ExperimentConfig& cfg, const RunOptions& opts = {}) {
  const ExperimentConfig c = apply_options(cfg, opts);
  OutputSet out(resolve_output_dir(c, opts));
  const CellFunctions g = rearrange_inputs(c);
  RearrangementMap phi;
  try {
    phi = build_phi(g);
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("/rearrange: ") + e.what());
  }
  std::vector<std::size_t> shifts = c.rearrange.shifts;
  if (shifts.empty())
    for (std::size_t h = 1; h < c.rearrange.cells; h *= 2) shifts.push_back(h);
  const ModulusTable table = modulus(g, phi, shifts);

  out.write("permutation.txt", detail::to_text([&](std::ostream& os) { write_permutation(os, phi.perm); }));
  out.write("modulus.csv", detail::to_text([&](std::ostream& os) {
              os << detail::csv_header({"shift", "tau", "value", "raw_value", "level", "bound_fine", "bound"});
              for (const auto& r : table.rows)
                os << r.shift << ',' << format_double(r.tau) << ',' << format_double(r.value) << ','
                   << format_double(r.raw_value) << ',' << r.level << ',' << format_double(r.bound_fine) << ','
                   << format_double(r.bound) << '\n';
            }));
  out.write("modulus_summary.csv", detail::to_text([&](std::ostream& os) {
              bool ok = true;
              for (const auto& r : table.rows) ok = ok && r.value <= r.bound;
              os << detail::csv_header({"functions", "cells", "levels", "fitted_c", "within_bound"});
              os << g.n_funcs << ',' << g.n_cells << ',' << phi.levels << ',' << format_double(table.fitted_c) << ','
                 << (ok ? 1 : 0) << '\n';
            }));
  if (c.rearrange.apply_to_graph) {
    const SparseWeights w = build_weights(c);
    if (w.n_agents() != c.rearrange.cells)
      throw ConfigError("/rearrange/apply_to_graph: graph has " + std::to_string(w.n_agents()) +
                        " agents but rearrange.cells = " + std::to_string(c.rearrange.cells));
    const SparseWeights wp = permute(w, phi.perm);
    out.write("graph_rearranged.txt", detail::to_text([&](std::ostream& os) { write_edge_list(os, wp); }));
  }
  return detail::finish_run("rearrange", c, out, detail::graph_inputs(c));
}

/// Weights of the convergence sweep at size n.
inline SparseWeights sweep_weights(const ExperimentConfig& c, std::size_t n) {
  if (c.convergence.graph == SweepGraph::uniform) return gen_uniform(n, c.graph.w_bar, c.graph.include_diagonal);
  const std::size_t m = c.convergence.m ? c.convergence.m : divisor_nearest_sqrt(n);
  return gen_class_permutation_seeded(n, m, c.seed);
}

inline GapExperiment gap_experiment(const ExperimentConfig& c, std::size_t n) {
  GapExperiment e;
  e.weights = sweep_weights(c, n);
  e.kernel = detail::scalar_kernel(c, n, "convergence");
  detail::check_grid_matches(c, e.kernel);
  e.initial = build_initial_laws(c, n);
  e.grid = c.grid;
  e.sigma = c.sigma;
  e.dt = c.time.dt;
  e.times = c.convergence.times.empty() ? snapshot_times(c) : c.convergence.times;
  e.seed = c.seed;
  e.mckean = c.mckean;
  e.convolution = c.convolution;
  return e;
}

/// Independence and mean-field gaps for every N of the sweep.
inline RunResult cmd_convergence(const ExperimentConfig& cfg, const RunOptions& opts = {}) {
  const ExperimentConfig c = apply_options(cfg, opts);
  if (c.convergence.n_values.empty()) throw ConfigError("/convergence/n_values: empty sweep");
  if (c.initial.laws.size() > 1) throw ConfigError("/initial/laws: the sweep needs one shared law or a mean_profile");
  OutputSet out(resolve_output_dir(c, opts));
  std::ostringstream summary;
  summary << detail::csv_header({"n", "class_size", "independence_sup", "independence_bound_at_sup",
                                 "meanfield_sup", "meanfield_seed_avg_sup", "meanfield_seed_avg_sup_stderr",
                                 "max_mass_drift_per_step"});
  for (std::size_t n : c.convergence.n_values) {
    const GapExperiment e = gap_experiment(c, n);
    TransportLedger ledger_ind, ledger_mf;
    const auto ind = independence_gap(e, c.convergence.replicas, &ledger_ind);
    const auto mf_runs = simulate_meanfield(e, c.convergence.seeds, &ledger_mf);
    const auto mf = meanfield_gap(mf_runs.runs, mf_runs.pde, &e);
    const auto [mf_seed_sup, mf_seed_sup_err] = seed_averaged_sup_gap(mf_runs);
    const double drift = std::max(ledger_ind.max_mass_drift_per_step, ledger_mf.max_mass_drift_per_step);
    out.write("independence_N" + std::to_string(n) + ".csv",
              detail::to_text([&](std::ostream& os) { write_gap_csv(os, ind); }));
    out.write("meanfield_N" + std::to_string(n) + ".csv",
              detail::to_text([&](std::ostream& os) { write_gap_csv(os, mf); }));
    const auto worst_ind = *std::max_element(ind.begin(), ind.end(), [](auto& a, auto& b) { return a.gap < b.gap; });
    double mf_sup = 0.0;
    for (const auto& r : mf) mf_sup = std::max(mf_sup, r.gap);
    const std::size_t m = c.convergence.graph == SweepGraph::uniform ? n
                          : c.convergence.m                          ? c.convergence.m
                                                                     : divisor_nearest_sqrt(n);
    summary << n << ',' << m << ',' << format_double(worst_ind.gap) << ',' << format_double(worst_ind.bound) << ','
            << format_double(mf_sup) << ',' << format_double(mf_seed_sup) << ',' << format_double(mf_seed_sup_err) << ','
            << format_double(drift) << '\n';
  }
  out.write("convergence_summary.csv", summary.str());
  return detail::finish_run("convergence", c, out);
}

enum class Command { simulate, solve, observe, rearrange, convergence };

inline RunResult run_command(Command cmd, const ExperimentConfig& c, const RunOptions& o = {}) {
  switch (cmd) {
    case Command::simulate:
      return cmd_simulate(c, o);
    case Command::solve:
      return cmd_solve(c, o);
    case Command::observe:
      return cmd_observe(c, o);
    case Command::rearrange:
      return cmd_rearrange(c, o);
    case Command::convergence:
      return cmd_convergence(c, o);
  }
  throw InvalidArgument("unknown command");
}

}  // namespace mfgraph
