// Acceptance suite: one PASS/FAIL line per criterion. Every criterion runs
// twice (1 and 3 worker threads); the second pass feeds the determinism check.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <unistd.h>

#include "mfgraph/mfgraph.hpp"

using namespace mfgraph;
namespace fs = std::filesystem;

namespace {

/// Running record of every number a criterion produces.
class Digest {
 public:
  void add(double v) { buf_ << format_double(v) << ';'; }
  void add(std::size_t v) { buf_ << v << ';'; }
  void add(const std::string& s) { buf_ << s << ';'; }
  void add(const std::vector<double>& v) {
    for (double x : v) add(x);
  }
  std::string hex() const { return sha256_hex(buf_.str()); }

 private:
  std::ostringstream buf_;
};

struct TorusRun {
  std::string name;
  std::size_t steps = 0;
  double max_drift = 0.0;
};

struct Context {
  Digest digest;
  /// Filled only on the first pass.
  std::vector<TorusRun>* torus = nullptr;

  void log_torus(const std::string& name, const TransportLedger& l) {
    if (torus) torus->push_back({name, l.steps, l.max_mass_drift_per_step});
  }
};

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double budget_s;
  std::function<Outcome(Context&)> run;
};

std::string fmt(double v, int prec = 3) {
  char b[64];
  std::snprintf(b, sizeof b, "%.*g", prec, v);
  return b;
}

GaussianMixture gaussian(double mean, double std) { return GaussianMixture{{{mean, std, 1.0}}}; }

SparseWeights random_sparse(std::size_t n, double density, Engine& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<SparseWeights::Entry> e;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (u(rng) < density)
        e.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j),
                     (2.0 * u(rng) - 0.7) / static_cast<double>(n)});
  return SparseWeights::from_triplets(n, e);
}

FiberedDensity random_density(const Grid1D& g, std::size_t n, Engine& rng) {
  std::uniform_real_distribution<double> u(-1.5, 1.5), s(0.3, 0.9);
  std::vector<GaussianMixture> laws;
  for (std::size_t k = 0; k < n; ++k) laws.push_back(GaussianMixture{{{u(rng), s(rng), 1.0}, {u(rng), s(rng), 0.5}}});
  return density_from_mixtures(g, laws);
}

/// (1/N) sum over all index tuples of prod_{edges} w prod_v f_{i_v}(x_v).
double brute_force_tau(const LabeledTree& t, const SparseWeights& w, const FiberedDensity& f,
                       const std::vector<std::size_t>& cells) {
  const std::size_t n = w.n_agents(), m = t.order();
  std::vector<std::size_t> idx(m, 0);
  const auto edges = t.edges();
  double total = 0.0;
  for (std::size_t code = 0; code < ipow(n, m); ++code) {
    std::size_t rem = code;
    for (std::size_t v = 0; v < m; ++v) {
      idx[v] = rem % n;
      rem /= n;
    }
    double p = 1.0;
    for (auto [a, b] : edges) p *= w.at(idx[a - 1], idx[b - 1]);
    for (std::size_t v = 0; v < m; ++v) p *= f.at(idx[v], cells[v]);
    total += p;
  }
  return total / static_cast<double>(n);
}

double l1_distance(std::span<const double> a, std::span<const double> b, double dx) {
  double s = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) s += std::abs(a[c] - b[c]);
  return s * dx;
}

std::vector<double> mean_profile(std::size_t n, std::vector<GaussianMixture>& out) {
  std::vector<double> means;
  for (std::size_t i = 0; i < n; ++i) {
    means.push_back(2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(n) - 1.0);
    out.push_back(gaussian(means.back(), 0.5));
  }
  return means;
}

// ---------------------------------------------------------------------------

Outcome tree_counts(Context& ctx) {
  bool ok = true;
  std::size_t fact = 1;
  std::string counts;
  for (std::size_t n = 1; n <= 8; ++n) {
    if (n > 1) fact *= n - 1;
    const auto trees = enumerate_trees(n);
    ok = ok && trees.size() == fact;
    counts += (n > 1 ? "," : "") + std::to_string(trees.size());
    ctx.digest.add(trees.size());
    for (const auto& t : trees) ctx.digest.add(t.to_string());
  }
  return {ok, "|Tree_n| for n=1..8: " + counts};
}

Outcome exchangeable(Context& ctx) {
  struct Case {
    std::string name;
    Grid1D grid;
    Kernel kernel;
    GaussianMixture law;
  };
  const std::vector<Case> cases{
      {"line", Grid1D(-6.0, 6.0, 256), linear_attraction(1.0), gaussian(0.5, 0.7)},
      {"torus", Grid1D(0.0, 2.0 * std::numbers::pi, 256, Topology::torus), kuramoto(1.0).kernel,
       gaussian(std::numbers::pi, 0.6)}};
  double worst_pair = 0.0, worst_single = 0.0;
  for (const auto& c : cases) {
    const auto many = solve(density_from_mixtures(c.grid, std::vector<GaussianMixture>(16, c.law)),
                            gen_uniform(16, 1.0, true), c.kernel, 0.0, 1.0);
    const auto one = solve(density_from_mixtures(c.grid, {c.law}), gen_uniform(1, 1.0, true), c.kernel, 0.0, 1.0);
    const auto& a = many.snapshots.back();
    const auto& b = one.snapshots.back();
    const double dx = c.grid.dx();
    for (std::size_t p = 0; p < 16; ++p) {
      for (std::size_t q = p + 1; q < 16; ++q) worst_pair = std::max(worst_pair, l1_distance(a.fiber(p), a.fiber(q), dx));
      worst_single = std::max(worst_single, l1_distance(a.fiber(p), b.fiber(0), dx));
    }
    ctx.digest.add(a.values);
    ctx.digest.add(b.values);
    if (c.grid.periodic()) {
      ctx.log_torus("exchangeable N=16", many.ledger);
      ctx.log_torus("exchangeable N=1", one.ledger);
    }
  }
  return {worst_pair <= 1e-10 && worst_single <= 1e-10,
          "max pairwise L1 " + fmt(worst_pair) + ", max vs N=1 run " + fmt(worst_single) + " (tol 1e-10, line+torus)"};
}

Outcome brute_force(Context& ctx) {
  auto rng = make_engine(2024, StreamPurpose::test_data, 3);
  const Grid1D g(-2.0, 2.0, 16);
  double worst = 0.0;
  std::size_t checked = 0;
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n = 2 + rep % 7;
    const auto w = random_sparse(n, 0.6, rng);
    const auto f = random_density(g, n, rng);
    for (std::size_t order = 1; order <= 3; ++order)
      for (const auto& t : enumerate_trees(order)) {
        const auto o = tau(t, w, f);
        std::vector<std::size_t> cells(order);
        for (std::size_t idx = 0; idx < o.values.size(); ++idx) {
          std::size_t rem = idx;
          for (std::size_t v = order; v-- > 0;) {
            cells[v] = rem % 16;
            rem /= 16;
          }
          worst = std::max(worst, std::abs(o.values[idx] - brute_force_tau(t, w, f, cells)));
          ++checked;
        }
        ctx.digest.add(o.values);
      }
  }
  return {worst <= 1e-12, "max |tau - dense sum| " + fmt(worst) + " over " + std::to_string(checked) +
                              " lattice values (tol 1e-12)"};
}

std::vector<SparseWeights> sparse_corpus() {
  auto rng = make_engine(2024, StreamPurpose::test_data, 4);
  std::vector<SparseWeights> out;
  for (int rep = 0; rep < 50; ++rep) out.push_back(random_sparse(3 + rep % 8, 0.5, rng));
  return out;
}

Outcome density_bound(Context& ctx) {
  double worst_ratio = 0.0;
  bool ok = true;
  for (const auto& w : sparse_corpus()) {
    const double r = check_scaling(w).max_row_abs_sum;
    for (std::size_t n = 1; n <= 6; ++n)
      for (const auto& t : enumerate_trees(n)) {
        const double d = tau_density(t, w);
        const double bound = std::pow(r, static_cast<double>(n - 1));
        // Rounding slack of the summation only.
        ok = ok && std::abs(d) <= bound * (1.0 + 1e-12);
        if (bound > 0.0) worst_ratio = std::max(worst_ratio, std::abs(d) / bound);
        ctx.digest.add(d);
      }
  }
  return {ok, "max |tau(T,w)| / rowsum^(|T|-1) = " + fmt(worst_ratio, 6) + " over 50 w x 154 trees"};
}

Outcome moment_consistency(Context& ctx) {
  auto rng = make_engine(2024, StreamPurpose::test_data, 5);
  const Grid1D g(-5.0, 5.0, 12);
  double worst = 0.0;
  for (const auto& w : sparse_corpus()) {
    const auto f = random_density(g, w.n_agents(), rng);
    for (std::size_t n = 1; n <= 4; ++n)
      for (const auto& t : enumerate_trees(n)) {
        const auto o = tau(t, w, f);
        const double diff = std::abs(o.integral() - tau_density(t, w));
        worst = std::max(worst, diff);
        ctx.digest.add(o.integral());
      }
  }
  return {worst <= 1e-10, "max |int tau(T,w,f) - tau(T,w)| " + fmt(worst) + " (tol 1e-10, |T|<=4, G=12)"};
}

Outcome relabel_invariance(Context& ctx) {
  auto rng = make_engine(2024, StreamPurpose::test_data, 6);
  const Grid1D g(-2.0, 2.0, 16);
  const std::size_t n = 8;
  const auto w = random_sparse(n, 0.6, rng);
  const auto f = random_density(g, n, rng);
  std::vector<Observable> base;
  for (std::size_t m = 1; m <= 3; ++m)
    for (const auto& t : enumerate_trees(m)) base.push_back(tau(t, w, f));
  double worst = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const auto p = random_permutation(n, 1000 + rep);
    const auto [wp, fp] = rearrange_pair(w, f, RearrangementMap{0, p, {}, {}});
    std::size_t q = 0;
    for (std::size_t m = 1; m <= 3; ++m)
      for (const auto& t : enumerate_trees(m)) {
        const auto b = tau(t, wp, fp);
        for (std::size_t c = 0; c < b.values.size(); ++c)
          worst = std::max(worst, std::abs(b.values[c] - base[q].values[c]) / std::max(1.0, std::abs(base[q].values[c])));
        ++q;
      }
    ctx.digest.add(worst);
  }
  return {worst <= 1e-14, "max |tau - tau after relabeling| " + fmt(worst) + " over 50 permutations (tol 1e-14)"};
}

struct SmoothRun {
  SparseWeights w;
  std::vector<FiberedDensity> snaps;
};

SmoothRun smooth_run(std::size_t cells, double nu, double dt) {
  const std::size_t n = 8;
  std::vector<GaussianMixture> laws;
  for (std::size_t k = 0; k < n; ++k) laws.push_back(gaussian(-0.8 + 1.6 * k / (n - 1.0), 0.6 + 0.05 * k));
  const auto w = gen_from_graphon(n, [](double x, double y) { return 0.5 + x * (1 - y); });
  const auto f0 = density_from_mixtures(Grid1D(-6.0, 6.0, cells), laws);
  SolveOptions o;
  o.dt = dt;
  const double t_mid = 0.5;
  auto res = solve(f0, w, linear_attraction(1.0), nu, t_mid + dt, {t_mid - dt, t_mid, t_mid + dt}, o);
  return {w, std::move(res.snapshots)};
}

Outcome residual_refinement(Context& ctx) {
  double worst = std::numeric_limits<double>::infinity();
  std::string detail;
  for (double nu : {0.0, 0.05}) {
    const auto coarse = smooth_run(128, nu, 0.004);
    const auto fine = smooth_run(256, nu, 0.002);
    std::size_t tree_id = 1;
    for (const auto& t : {LabeledTree(), LabeledTree().add_leaf(1)}) {
      const double a = hierarchy_residual(t, coarse.w, coarse.snaps, linear_attraction(), nu).value;
      const double b = hierarchy_residual(t, fine.w, fine.snaps, linear_attraction(), nu).value;
      worst = std::min(worst, a / b);
      detail += " T" + std::to_string(tree_id++) + ",nu=" + fmt(nu, 2) + ":" + fmt(a / b);
      ctx.digest.add(a);
      ctx.digest.add(b);
    }
  }
  return {worst >= 1.5, "residual ratio coarse/fine (G 128->256, dt 0.004->0.002):" + detail + " (need >= 1.5)"};
}

Outcome modulus_bound(Context& ctx) {
  const std::size_t K = 3, P = 4096;
  std::vector<std::size_t> shifts(P - 1);
  std::iota(shifts.begin(), shifts.end(), 1);
  double worst = 0.0;
  std::size_t checks = 0;
  bool ok = true;
  for (std::uint64_t inst = 0; inst < 20; ++inst) {
    CellFunctions g(K, P);
    for (std::size_t m = 1; m <= K; ++m) {
      auto rng = make_engine(2024, StreamPurpose::rearrange_input, inst, m);
      std::uniform_real_distribution<double> u(0.0, 1.0);
      for (std::size_t c = 0; c < P; ++c) g.at(m, c) = CellFunctions::cap(m) * (1.0 - u(rng));
    }
    const auto phi = build_phi(g);
    const auto table = modulus(g, phi, shifts);
    for (const auto& r : table.rows)
      for (std::size_t k = 0; k <= K; ++k) {
        const double nk = static_cast<double>(pieces_at_level(k));
        if (r.tau > 1.0 / (nk * nk)) continue;
        const double bound = 3.0 * std::ldexp(1.0, -static_cast<int>(k));
        ok = ok && r.value <= bound;
        worst = std::max(worst, r.value / bound);
        ++checks;
      }
    for (const auto& r : table.rows) ctx.digest.add(r.value);
    ctx.digest.add(std::vector<double>(phi.perm.begin(), phi.perm.end()));
  }
  return {ok, "max M(tau) / (3*2^-k) = " + fmt(worst) + " over " + std::to_string(checks) + " (instance, shift, k) checks"};
}

Outcome independence(Context& ctx) {
  std::vector<double> logm, logg;
  bool within = true;
  std::string detail;
  for (std::size_t m : {8u, 32u, 128u}) {
    GapExperiment e;
    e.weights = gen_class_permutation_seeded(256, m, 2024);
    e.kernel = linear_attraction();
    e.grid = Grid1D(-4.0, 4.0, 1024);
    mean_profile(256, e.initial);
    e.dt = 0.01;
    e.times = {1.0};
    e.seed = 2024;
    TransportLedger ledger;
    const auto r = independence_gap(e, 2000, &ledger).front();
    within = within && r.gap <= r.bound + r.tolerance;
    logm.push_back(std::log(static_cast<double>(m)));
    logg.push_back(std::log(r.gap));
    detail += " M=" + std::to_string(m) + ":" + fmt(r.gap) + "<=" + fmt(r.bound) + "+" + fmt(r.tolerance);
    ctx.digest.add(r.gap);
    ctx.digest.add(r.stderr_);
    ctx.digest.add(r.law_gap);
  }
  const double mx = std::accumulate(logm.begin(), logm.end(), 0.0) / 3.0;
  const double my = std::accumulate(logg.begin(), logg.end(), 0.0) / 3.0;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t q = 0; q < 3; ++q) {
    sxy += (logm[q] - mx) * (logg[q] - my);
    sxx += (logm[q] - mx) * (logm[q] - mx);
  }
  const double exponent = -sxy / sxx;
  return {within && exponent >= 0.3 && exponent <= 0.7,
          "gap <= C1*M^-1/2 + tol:" + detail + "; fitted exponent " + fmt(exponent) + " (need [0.3, 0.7])"};
}

Outcome meanfield(Context& ctx) {
  std::vector<double> avg;
  std::string detail;
  for (std::size_t n : {64u, 128u, 256u, 512u}) {
    const std::size_t m = divisor_nearest_sqrt(n);
    GapExperiment e;
    e.weights = gen_class_permutation_seeded(n, m, 2024);
    e.kernel = linear_attraction();
    e.grid = Grid1D(-4.0, 4.0, 1024);
    mean_profile(n, e.initial);
    e.dt = 0.01;
    e.times = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
    e.seed = 2024;
    const auto runs = simulate_meanfield(e, 200);
    const auto [mean, err] = seed_averaged_sup_gap(runs);
    avg.push_back(mean);
    detail += " N=" + std::to_string(n) + "(M=" + std::to_string(m) + "):" + fmt(mean) + "+-" + fmt(err, 2);
    ctx.digest.add(mean);
    ctx.digest.add(err);
  }
  std::size_t decreases = 0;
  for (std::size_t q = 1; q < avg.size(); ++q) decreases += avg[q] < avg[q - 1] ? 1 : 0;
  return {decreases == 3, "seed-averaged sup_t W1:" + detail + "; decreases at " + std::to_string(decreases) + "/3 doublings"};
}

Outcome torus_conservation(Context& ctx) {
  // Dedicated torus runs; the exchangeable criterion contributes its own.
  const Grid1D g(0.0, 2.0 * std::numbers::pi, 256, Topology::torus);
  for (double nu : {0.0, 0.05}) {
    std::vector<GaussianMixture> laws;
    for (std::size_t k = 0; k < 16; ++k) laws.push_back(gaussian(0.5 + 0.35 * k, 0.4));
    const auto res = solve(density_from_mixtures(g, laws), gen_class_permutation_seeded(16, 4, 2024),
                           kuramoto(2.0).kernel, nu, 2.0);
    ctx.log_torus("kuramoto class-permutation nu=" + fmt(nu, 2), res.ledger);
    ctx.digest.add(res.snapshots.back().values);
  }
  GapExperiment e;
  e.weights = gen_class_permutation_seeded(64, 8, 2024);
  e.kernel = kuramoto(1.0).kernel;
  e.grid = g;
  e.initial = {gaussian(std::numbers::pi, 0.8)};
  e.sigma = 0.3;
  e.times = {0.5};
  e.seed = 2024;
  TransportLedger ind, mf;
  ctx.digest.add(independence_gap(e, 100, &ind).front().gap);
  ctx.digest.add(meanfield_gap(e, 20, &mf).front().gap);
  ctx.log_torus("kuramoto independence gap", ind);
  ctx.log_torus("kuramoto mean-field gap", mf);
  return {true, ""};
}

/// Every shipped configuration through its subcommand; digests of all outputs.
Outcome cli_runs(Context& ctx) {
  const fs::path root = fs::temp_directory_path() / ("mfgraph_acceptance_" + std::to_string(::getpid()));
  const std::vector<std::pair<Command, std::string>> runs{
      {Command::simulate, "minimal"},   {Command::simulate, "kuramoto"}, {Command::simulate, "hodgkin_huxley"},
      {Command::solve, "torus_solve"},  {Command::observe, "observe"},   {Command::rearrange, "rearrange"},
      {Command::convergence, "convergence"}};
  for (const auto& [cmd, name] : runs) {
    const auto cfg = load_config(std::string(MFGRAPH_CONFIG_DIR) + "/" + name + ".yaml");
    const auto dir = root / name;
    fs::remove_all(dir);
    const auto r = run_command(cmd, cfg, RunOptions{std::nullopt, dir.string()});
    ctx.digest.add(name + ":" + r.manifest_sha256);
    if (cmd == Command::solve && cfg.grid.periodic()) {
      std::ifstream in(dir / "ledger.csv");
      std::string header, row;
      std::getline(in, header);
      std::getline(in, row);
      TransportLedger l;
      std::istringstream ss(row);
      std::string cell;
      std::getline(ss, cell, ',');
      l.steps = std::stoul(cell);
      std::getline(ss, cell, ',');
      l.max_mass_drift_per_step = parse_double(cell);
      ctx.log_torus("cli solve " + name, l);
    }
  }
  fs::remove_all(root);
  return {true, ""};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "tree combinatorics", 1, tree_counts},
      {2, "exchangeable reduction", 30, exchangeable},
      {3, "observable brute-force oracle", 60, brute_force},
      {4, "homomorphism density bound", 30, density_bound},
      {5, "moment consistency", 30, moment_consistency},
      {6, "relabeling invariance", 10, relabel_invariance},
      {7, "hierarchy residual refinement", 120, residual_refinement},
      {8, "rearrangement modulus bound", 30, modulus_bound},
      {9, "propagation of independence", 900, independence},
      {10, "mean-field convergence", 1200, meanfield},
  };
  const std::vector<std::pair<std::string, std::function<Outcome(Context&)>>> auxiliary{
      {"torus conservation runs", torus_conservation}, {"cli pipelines", cli_runs}};

  bool all = true;
  auto line = [&](int id, const std::string& name, const Outcome& o, double secs, double budget) {
    all = all && o.pass;
    std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << id << ". " << name << ": " << o.detail << " ("
              << fmt(secs, 3) << " s";
    if (budget > 0) std::cout << ", budget " << fmt(budget, 4) << " s";
    std::cout << ")" << std::endl;
  };

  std::vector<TorusRun> torus;
  std::vector<std::string> first, second;
  const std::size_t thread_plan[2] = {1, 3};
  for (int pass = 0; pass < 2; ++pass) {
    set_thread_count(thread_plan[pass]);
    if (pass == 1) std::cout << "-- determinism pass with " << thread_plan[pass] << " threads" << std::endl;
    auto& digests = pass == 0 ? first : second;
    auto run_one = [&](const std::function<Outcome(Context&)>& f, Outcome& out) {
      Context ctx;
      ctx.torus = pass == 0 ? &torus : nullptr;
      const auto t0 = std::chrono::steady_clock::now();
      try {
        out = f(ctx);
      } catch (const std::exception& e) {
        out = {false, std::string("exception: ") + e.what()};
      }
      digests.push_back(ctx.digest.hex());
      return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
    for (const auto& c : criteria) {
      Outcome o;
      const double secs = run_one(c.run, o);
      if (secs > c.budget_s) {
        o.pass = false;
        o.detail += "; over the runtime budget";
      }
      if (pass == 0 || !o.pass) line(c.id, c.name, o, secs, c.budget_s);
    }
    for (const auto& [name, f] : auxiliary) {
      Outcome o;
      run_one(f, o);
      if (!o.pass) {
        all = false;
        std::cout << "[FAIL] " << name << ": " << o.detail << std::endl;
      }
    }
  }

  {
    double worst = 0.0;
    std::size_t steps = 0;
    std::string worst_name;
    for (const auto& r : torus) {
      steps += r.steps;
      if (r.max_drift >= worst) {
        worst = r.max_drift;
        worst_name = r.name;
      }
    }
    const bool ok = !torus.empty() && worst <= 1e-12;
    line(11, "torus mass conservation",
         {ok, "max per-fiber drift per step " + fmt(worst) + " (" + worst_name + ") over " +
                  std::to_string(torus.size()) + " torus runs, " + std::to_string(steps) + " steps (tol 1e-12)"},
         0.0, 0.0);
  }
  {
    std::size_t equal = 0;
    for (std::size_t q = 0; q < first.size(); ++q) equal += first[q] == second[q] ? 1 : 0;
    line(12, "determinism",
         {equal == first.size(), std::to_string(equal) + "/" + std::to_string(first.size()) +
                                     " runs have identical output digests at 1 and 3 threads"},
         0.0, 0.0);
  }
  std::cout << (all ? "ALL CRITERIA PASSED" : "SOME CRITERIA FAILED") << std::endl;
  return all ? 0 : 1;
}
