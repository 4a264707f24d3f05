#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mfgraph/commands.hpp"
#include "mfgraph/config.hpp"

using namespace mfgraph;
namespace fs = std::filesystem;

namespace {

const char* kGolden = R"(seed: 42
output_dir: out/golden
graph:
  generator: class_permutation
  n: 16
  m: 4
  perm: [2, 0, 3, 1]
  w_bar: 1
kernel:
  preset: linear_attraction
  strength: 0.5
initial:
  laws:
    - [{mean: -1, std: 0.5, weight: 1}, {mean: 1, std: 0.25, weight: 2}]
grid: {x_min: -4, x_max: 4, cells: 64, topology: line}
time: {t_end: 0.5, dt: 0.01, snapshots: [0, 0.25, 0.5], pde_dt: 0, pde_max_dt: 0.01}
nu: 0.01
sigma: 0.1
integrator: rk4
convolution: fft
mckean: interpolated
observables: {n_max: 3, lambda: 0.5, residual: true, route: lattice, memory_budget_mb: 64}
rearrange: {functions: 2, cells: 64, mode: general, source: random, shifts: [1, 2, 4]}
convergence: {n_values: [16, 32], graph: class_permutation, m: 4, replicas: 100, seeds: 10, times: [0, 0.5]}
)";

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void set_path(YAML::Node node, const std::vector<std::string>& keys, std::size_t at, const YAML::Node& value) {
  if (at + 1 == keys.size()) {
    node[keys[at]] = value;
    return;
  }
  set_path(node[keys[at]], keys, at + 1, value);
}

void remove_path(YAML::Node node, const std::vector<std::string>& keys, std::size_t at) {
  if (at + 1 == keys.size()) {
    node.remove(keys[at]);
    return;
  }
  remove_path(node[keys[at]], keys, at + 1);
}

std::vector<std::string> split_path(const std::string& p) {
  std::vector<std::string> out;
  std::stringstream ss(p);
  for (std::string item; std::getline(ss, item, '/');)
    if (!item.empty()) out.push_back(item);
  return out;
}

struct Edit {
  std::string path;
  std::string value;  ///< YAML text; "~delete" removes the key
};

struct Mutation {
  std::vector<Edit> edits;
  /// Field path the diagnostic must name.
  std::string expect;
};

std::string mutate(const std::vector<Edit>& edits) {
  YAML::Node root = YAML::Load(kGolden);
  for (const auto& e : edits) {
    if (e.value == "~delete")
      remove_path(root, split_path(e.path), 0);
    else
      set_path(root, split_path(e.path), 0, YAML::Load(e.value));
  }
  YAML::Emitter out;
  out << root;
  return out.c_str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MFGRAPH_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mfgraph_test_config_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  return p;
}

fs::path write_config(const std::string& name, const std::string& text) {
  const fs::path p = scratch("configs") / name;
  fs::create_directories(p.parent_path());
  std::ofstream(p) << text;
  return p;
}

std::map<std::string, std::string> manifest_digests(const fs::path& dir) {
  const auto m = nlohmann::json::parse(read_file(dir / "manifest.json"));
  std::map<std::string, std::string> out;
  for (const auto& f : m["outputs"]) out[f["file"].get<std::string>()] = f["sha256"].get<std::string>();
  return out;
}

class ScratchCleanup : public ::testing::Environment {
 public:
  void TearDown() override {
    fs::remove_all(fs::temp_directory_path() / ("mfgraph_test_config_" + std::to_string(::getpid())));
  }
};

const auto* const kCleanup = ::testing::AddGlobalTestEnvironment(new ScratchCleanup);

}  // namespace

TEST(Config, GoldenParses) {
  const auto c = parse_config(kGolden);
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.graph.generator, GraphGenerator::class_permutation);
  EXPECT_EQ(c.graph.perm, (std::vector<std::size_t>{2, 0, 3, 1}));
  ASSERT_EQ(c.initial.laws.size(), 1u);
  EXPECT_EQ(c.initial.laws[0].components.size(), 2u);
  EXPECT_DOUBLE_EQ(c.initial.laws[0].components[1].std, 0.25);
  EXPECT_EQ(c.observables.route, TransportRoute::lattice);
  EXPECT_EQ(c.rearrange.mode, NormalizationMode::general);
  EXPECT_EQ(c.convergence.n_values, (std::vector<std::size_t>{16, 32}));
}

TEST(Config, RoundTripGolden) {
  const auto c = parse_config(kGolden);
  const std::string text = to_yaml(c);
  const auto back = parse_config(text);
  EXPECT_EQ(back, c);
  EXPECT_EQ(to_yaml(back), text);
}

TEST(Config, RoundTripExactDoubles) {
  auto c = parse_config(kGolden);
  c.nu = 0.1 + 0.2;
  c.sigma = 1.0 / 3.0;
  c.kernel.strength = -1e-300;
  c.grid.x_min = -std::numbers::pi;
  c.grid.x_max = 5e-324 + 4.0;
  c.time.snapshots = {0.0, 0.1, 0.30000000000000004, 0.5};
  c.initial.laws[0].components[0].mean = 123456789.123456789;
  EXPECT_EQ(parse_config(to_yaml(c)), c);
}

TEST(Config, RoundTripShippedConfigs) {
  std::size_t n = 0;
  for (const auto& entry : fs::directory_iterator(MFGRAPH_CONFIG_DIR)) {
    if (entry.path().extension() != ".yaml") continue;
    SCOPED_TRACE(entry.path().string());
    const auto c = load_config(entry.path().string());
    EXPECT_EQ(parse_config(to_yaml(c)), c);
    ++n;
  }
  EXPECT_GE(n, 5u);
}

TEST(Config, FuzzCorpusRejected) {
  const std::vector<Mutation> corpus{
      {{{"seed", "-1"}}, "/seed"},
      {{{"seed", "abc"}}, "/seed"},
      {{{"seed", "1.5"}}, "/seed"},
      {{{"output_dir", "''"}}, "/output_dir"},
      {{{"graph/generator", "erdos"}}, "/graph/generator"},
      {{{"graph/n", "0"}}, "/graph/n"},
      {{{"graph/n", "-3"}}, "/graph/n"},
      {{{"graph/n", "sixteen"}}, "/graph/n"},
      {{{"graph/n", "2000000"}}, "/graph/n"},
      {{{"graph/w_bar", ".inf"}}, "/graph/w_bar"},
      {{{"graph/w_bar", ".nan"}}, "/graph/w_bar"},
      {{{"graph/include_diagonal", "maybe"}}, "/graph/include_diagonal"},
      {{{"graph/m", "3"}, {"graph/perm", "~delete"}}, "/graph/m"},
      {{{"graph/perm", "[0, 0, 1, 2]"}}, "/graph/perm"},
      {{{"graph/perm", "[0, 1, 2]"}}, "/graph/perm"},
      {{{"graph/m", "0"}}, "/graph/perm"},
      {{{"graph/sampling", "poisson"}}, "/graph/sampling"},
      {{{"graph/generator", "graphon"}, {"graph/graphon", "cosine"}, {"graph/graphon_params", "[1]"}},
       "/graph/graphon_params"},
      {{{"graph/graphon", "spiral"}}, "/graph/graphon"},
      {{{"graph/generator", "edge_list"}}, "/graph/path"},
      {{{"graph/colour", "red"}}, "/graph/colour"},
      {{{"graph", "~delete"}}, "/graph"},
      {{{"graph", "[1, 2]"}}, "/graph"},
      {{{"kernel/preset", "gravity"}}, "/kernel/preset"},
      {{{"kernel/strength", ".inf"}}, "/kernel/strength"},
      {{{"kernel/omega", "[1, 2]"}}, "/kernel/omega"},
      {{{"kernel/gates", "[0.1, 0.2, 0.3]"}}, "/kernel/gates"},
      {{{"kernel/preset", "hodgkin_huxley"}}, "/kernel/hh/c_m"},
      {{{"kernel/preset", "hodgkin_huxley"}, {"kernel/hh", "{c_m: 1}"}}, "/kernel/gates"},
      {{{"kernel/preset", "hodgkin_huxley"}, {"kernel/hh", "{c_m: 1}"}, {"kernel/gates", "[2, 0, 0]"}},
       "/kernel/gates/0"},
      {{{"kernel/hh", "{alpha_n: {form: cubic}}"}}, "/kernel/hh/alpha_n/form"},
      {{{"kernel/preset", "hodgkin_huxley"}, {"kernel/hh", "{c_m: 1, beta_m: {slope: 0}}"},
        {"kernel/gates", "[0.3, 0.05, 0.6]"}},
       "/kernel/hh"},
      {{{"kernel/preset", "kuramoto"}}, "/grid/topology"},
      {{{"kernel/preset", "kuramoto"}, {"grid/topology", "torus"}, {"grid/x_min", "0"}, {"grid/x_max", "6"}},
       "/grid/x_max"},
      {{{"initial/mean_profile", "{from: 0, to: 1, std: 1}"}}, "/initial"},
      {{{"initial/laws", "~delete"}}, "/initial"},
      {{{"initial/laws", "[[{mean: 0, std: 0}]]"}}, "/initial/laws/0/0/std"},
      {{{"initial/laws", "[[{mean: 0, std: -1}]]"}}, "/initial/laws/0/0/std"},
      {{{"initial/laws", "[[{mean: 0, std: 1, weight: -1}]]"}}, "/initial/laws/0/0/weight"},
      {{{"initial/laws", "[[{mean: 0, std: 1, weight: 0}]]"}}, "/initial/laws/0"},
      {{{"initial/laws", "[[{mean: 0, std: 1}], [{mean: 0, std: 1}], [{mean: 0, std: 1}]]"}}, "/initial/laws"},
      {{{"initial/laws", "[[{std: 1}]]"}}, "/initial/laws/0/0"},
      {{{"initial/laws", "[[{mean: 0, std: 1, skew: 2}]]"}}, "/initial/laws/0/0/skew"},
      {{{"initial/laws", "[[]]"}}, "/initial/laws/0"},
      {{{"initial/laws", "~delete"}, {"initial/mean_profile", "{from: 0, to: 1, std: 0}"}},
       "/initial/mean_profile/std"},
      {{{"grid/x_max", "-5"}}, "/grid/x_max"},
      {{{"grid/cells", "4"}}, "/grid/cells"},
      {{{"grid/cells", "-1"}}, "/grid/cells"},
      {{{"grid/topology", "sphere"}}, "/grid/topology"},
      {{{"time/t_end", "-1"}}, "/time/t_end"},
      {{{"time/dt", "0"}}, "/time/dt"},
      {{{"time/dt", "-0.1"}}, "/time/dt"},
      {{{"time/snapshots", "[0, 1]"}}, "/time/snapshots/1"},
      {{{"time/snapshots", "[0.25, 0.1]"}}, "/time/snapshots/1"},
      {{{"time/pde_dt", "-1"}}, "/time/pde_dt"},
      {{{"time/pde_max_dt", "-1"}}, "/time/pde_max_dt"},
      {{{"nu", "-1"}}, "/nu"},
      {{{"sigma", "-0.5"}}, "/sigma"},
      {{{"integrator", "rk45"}}, "/integrator"},
      {{{"convolution", "wavelet"}}, "/convolution"},
      {{{"mckean", "exact"}}, "/mckean"},
      {{{"observables/n_max", "0"}}, "/observables/n_max"},
      {{{"observables/n_max", "5"}}, "/observables/n_max"},
      {{{"observables/lambda", "0"}}, "/observables/lambda"},
      {{{"observables/route", "direct"}}, "/observables/route"},
      {{{"observables/memory_budget_mb", "0"}}, "/observables/memory_budget_mb"},
      {{{"rearrange/functions", "0"}}, "/rearrange/functions"},
      {{{"rearrange/functions", "5"}}, "/rearrange/functions"},
      {{{"rearrange/cells", "100"}}, "/rearrange/cells"},
      {{{"rearrange/mode", "loose"}}, "/rearrange/mode"},
      {{{"rearrange/source", "values"}}, "/rearrange/values"},
      {{{"rearrange/values", "[[1, 2]]"}}, "/rearrange/values"},
      {{{"rearrange/shifts", "[64]"}}, "/rearrange/shifts/0"},
      {{{"convergence/n_values", "[0]"}}, "/convergence/n_values/0"},
      {{{"convergence/n_values", "[18]"}}, "/convergence/n_values/0"},
      {{{"convergence/replicas", "50"}}, "/convergence/replicas"},
      {{{"convergence/seeds", "0"}}, "/convergence/seeds"},
      {{{"convergence/times", "[2]"}}, "/convergence/times/0"},
      {{{"convergence/graph", "star"}}, "/convergence/graph"},
      {{{"verbose", "true"}}, "/verbose"},
  };
  ASSERT_GE(corpus.size(), 50u);
  for (const auto& m : corpus) {
    const std::string text = mutate(m.edits);
    SCOPED_TRACE(m.edits.front().path + " := " + m.edits.front().value);
    try {
      parse_config(text);
      ADD_FAILURE() << "accepted:\n" << text;
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find(m.expect), std::string::npos) << e.what();
    }
  }
}

TEST(Config, DiagnosticsCarryLineAndColumn) {
  const std::string text =
      "seed: 1\n"
      "graph:\n"
      "  generator: uniform\n"
      "  n: 0\n"
      "kernel: {preset: linear}\n"
      "initial:\n"
      "  laws: [[{mean: 0, std: 1}]]\n";
  try {
    parse_config(text, "exp.yaml");
    FAIL() << "accepted";
  } catch (const ConfigError& e) {
    EXPECT_EQ(std::string(e.what()), "exp.yaml:4:6: /graph/n: must be >= 1");
  }
}

TEST(Config, UnknownKeyPointsAtKey) {
  const std::string text =
      "seed: 1\n"
      "graph: {generator: uniform, n: 4}\n"
      "kernel: {preset: linear}\n"
      "initial:\n"
      "  laws: [[{mean: 0, std: 1}]]\n"
      "time:\n"
      "  t_end: 1\n"
      "  t_ned: 2\n";
  try {
    parse_config(text);
    FAIL() << "accepted";
  } catch (const ConfigError& e) {
    EXPECT_EQ(std::string(e.what()), "config:8:3: /time/t_ned: unknown key");
  }
}

TEST(Config, TypeErrorNamesValue) {
  try {
    parse_config("seed: 1\ngraph: {generator: uniform, n: 4}\nkernel: {strength: strong}\n");
    FAIL() << "accepted";
  } catch (const ConfigError& e) {
    EXPECT_EQ(std::string(e.what()), "config:3:20: /kernel/strength: expected a number, got 'strong'");
  }
}

TEST(Config, SyntaxErrorHasLine) {
  try {
    parse_config("seed: 1\ngraph: {generator: uniform\n");
    FAIL() << "accepted";
  } catch (const ConfigError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("config:", 0), 0u) << e.what();
    EXPECT_NE(std::string(e.what()).find("syntax error"), std::string::npos) << e.what();
  }
}

TEST(Config, SemanticErrorAfterParseUsesFieldMark) {
  const std::string text =
      "graph: {generator: uniform, n: 4}\n"
      "kernel: {preset: linear}\n"
      "initial:\n"
      "  laws: [[{mean: 0, std: 1}]]\n"
      "time:\n"
      "  t_end: 1\n"
      "  snapshots: [0, 2]\n";
  try {
    parse_config(text);
    FAIL() << "accepted";
  } catch (const ConfigError& e) {
    EXPECT_EQ(std::string(e.what()), "config:7:18: /time/snapshots/1: must lie in [0, t_end]");
  }
}

TEST(Config, DivisorNearestSqrt) {
  EXPECT_EQ(divisor_nearest_sqrt(1), 1u);
  EXPECT_EQ(divisor_nearest_sqrt(64), 8u);
  EXPECT_EQ(divisor_nearest_sqrt(128), 8u);
  EXPECT_EQ(divisor_nearest_sqrt(256), 16u);
  EXPECT_EQ(divisor_nearest_sqrt(512), 16u);
  EXPECT_EQ(divisor_nearest_sqrt(13), 1u);
}

TEST(Config, MeanProfileLaws) {
  auto c = parse_config(kGolden);
  c.initial.laws.clear();
  c.initial.mean_profile = MeanProfile{-1.0, 1.0, 0.5};
  const auto laws = build_initial_laws(c, 4);
  ASSERT_EQ(laws.size(), 4u);
  EXPECT_DOUBLE_EQ(laws[0].components[0].mean, -0.75);
  EXPECT_DOUBLE_EQ(laws[3].components[0].mean, 0.75);
  EXPECT_DOUBLE_EQ(laws[2].components[0].std, 0.5);
}

TEST(Config, BuildWeightsUsesExplicitPerm) {
  const auto c = parse_config(kGolden);
  const auto w = build_weights(c);
  const auto ref = gen_class_permutation(16, 4, std::vector<std::size_t>{2, 0, 3, 1});
  EXPECT_EQ(w.entries().size(), ref.entries().size());
  for (std::size_t q = 0; q < w.entries().size(); ++q) {
    EXPECT_EQ(w.entries()[q].row, ref.entries()[q].row);
    EXPECT_EQ(w.entries()[q].col, ref.entries()[q].col);
    EXPECT_EQ(w.entries()[q].weight, ref.entries()[q].weight);
  }
}

TEST(Commands, MinimalSimulateHasOnlyInitialSnapshot) {
  const auto c = load_config(std::string(MFGRAPH_CONFIG_DIR) + "/minimal.yaml");
  const auto dir = scratch("minimal");
  const auto r = cmd_simulate(c, RunOptions{std::nullopt, dir.string()});
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
  std::istringstream csv(read_file(dir / "trajectory.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "t,agent,coord0");
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    EXPECT_EQ(line.rfind("0,", 0), 0u) << line;
    ++rows;
  }
  EXPECT_EQ(rows, 4u);
  EXPECT_EQ(r.files.size(), 3u);
}

TEST(Commands, MinimalSolveHasOnlyInitialSnapshot) {
  const auto c = load_config(std::string(MFGRAPH_CONFIG_DIR) + "/minimal.yaml");
  const auto dir = scratch("minimal_solve");
  cmd_solve(c, RunOptions{std::nullopt, dir.string()});
  std::istringstream csv(read_file(dir / "density.csv"));
  std::string line;
  std::getline(csv, line);
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    EXPECT_EQ(line.rfind("0,", 0), 0u) << line;
    ++rows;
  }
  EXPECT_EQ(rows, 4u * 64u);
}

TEST(Commands, ManifestDigestsMatchFiles) {
  const auto c = load_config(std::string(MFGRAPH_CONFIG_DIR) + "/torus_solve.yaml");
  const auto dir = scratch("digests");
  cmd_solve(c, RunOptions{std::nullopt, dir.string()});
  for (const auto& [file, digest] : manifest_digests(dir)) EXPECT_EQ(sha256_hex(read_file(dir / file)), digest) << file;
}

TEST(Commands, SameSeedSameDigests) {
  const auto c = load_config(std::string(MFGRAPH_CONFIG_DIR) + "/kuramoto.yaml");
  const auto a = scratch("det_a"), b = scratch("det_b"), d = scratch("det_c");
  cmd_simulate(c, RunOptions{std::nullopt, a.string()});
  cmd_simulate(c, RunOptions{std::nullopt, b.string()});
  cmd_simulate(c, RunOptions{c.seed + 1, d.string()});
  EXPECT_EQ(manifest_digests(a), manifest_digests(b));
  EXPECT_NE(manifest_digests(a).at("trajectory.csv"), manifest_digests(d).at("trajectory.csv"));
}

TEST(Commands, HodgkinHuxleyRejectedBySolver) {
  const auto c = load_config(std::string(MFGRAPH_CONFIG_DIR) + "/hodgkin_huxley.yaml");
  EXPECT_THROW(cmd_solve(c, RunOptions{std::nullopt, scratch("hh").string()}), ConfigError);
}

TEST(Commands, HodgkinHuxleyStateCarriesGates) {
  const auto c = load_config(std::string(MFGRAPH_CONFIG_DIR) + "/hodgkin_huxley.yaml");
  const auto dir = scratch("hh_sim");
  cmd_simulate(c, RunOptions{std::nullopt, dir.string()});
  std::istringstream csv(read_file(dir / "trajectory.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "t,agent,coord0,coord1,coord2,coord3");
  std::getline(csv, line);
  EXPECT_NE(line.find(",0.3177,0.0529,0.5961"), std::string::npos) << line;
}

TEST(Commands, RearrangeMatchesLibrary) {
  const auto c = load_config(std::string(MFGRAPH_CONFIG_DIR) + "/rearrange.yaml");
  const auto dir = scratch("rearrange");
  cmd_rearrange(c, RunOptions{std::nullopt, dir.string()});
  std::ifstream in(dir / "permutation.txt");
  const auto perm = read_permutation(in);
  EXPECT_EQ(perm, build_phi(rearrange_inputs(c)).perm);
}

TEST(Cli, ExitCodes) {
  const std::string cfg = std::string(MFGRAPH_CONFIG_DIR) + "/minimal.yaml";
  EXPECT_EQ(run_cli("simulate --config " + cfg + " --out " + scratch("cli_ok").string()), 0);
  const auto bad = write_config("bad.yaml", "seed: 1\ngraph: {generator: uniform, n: 0}\n");
  EXPECT_EQ(run_cli("simulate --config " + bad.string() + " --out " + scratch("cli_bad").string()), 2);
  EXPECT_EQ(run_cli("simulate --config /nonexistent.yaml"), 2);
  // Fixed PDE step far above the diffusive limit.
  const auto guard = write_config("guard.yaml", std::string(read_file(cfg)) + "nu: 1\n");
  std::string text = read_file(guard);
  text.replace(text.find("time: {t_end: 0, dt: 0.01}"), std::string("time: {t_end: 0, dt: 0.01}").size(),
               "time: {t_end: 1, dt: 0.01, pde_dt: 0.5}");
  std::ofstream(guard) << text;
  EXPECT_EQ(run_cli("solve --config " + guard.string() + " --out " + scratch("cli_guard").string()), 3);
  EXPECT_NE(run_cli("frobnicate --config " + cfg), 0);
}

TEST(Cli, DigestsIndependentOfThreadsAndRun) {
  const std::string cfg = std::string(MFGRAPH_CONFIG_DIR) + "/convergence.yaml";
  const auto a = scratch("cli_t1"), b = scratch("cli_t4"), d = scratch("cli_t4b");
  ASSERT_EQ(run_cli("convergence --config " + cfg + " --threads 1 --out " + a.string()), 0);
  ASSERT_EQ(run_cli("convergence --config " + cfg + " --threads 4 --out " + b.string()), 0);
  ASSERT_EQ(run_cli("convergence --config " + cfg + " --threads 4 --out " + d.string()), 0);
  EXPECT_EQ(manifest_digests(a), manifest_digests(b));
  EXPECT_EQ(manifest_digests(b), manifest_digests(d));
  EXPECT_EQ(read_file(a / "manifest.json"), read_file(b / "manifest.json"));
}

TEST(Cli, SeedFlagOverridesConfig) {
  const std::string cfg = std::string(MFGRAPH_CONFIG_DIR) + "/minimal.yaml";
  const auto dir = scratch("cli_seed");
  ASSERT_EQ(run_cli("simulate --config " + cfg + " --seed 99 --out " + dir.string()), 0);
  const auto m = nlohmann::json::parse(read_file(dir / "manifest.json"));
  EXPECT_EQ(m["seed"].get<std::uint64_t>(), 99u);
  EXPECT_EQ(load_config((dir / "config.yaml").string()).seed, 99u);
}

TEST(Cli, OutputDirFromEnvironment) {
  const std::string cfg = std::string(MFGRAPH_CONFIG_DIR) + "/minimal.yaml";
  const auto dir = scratch("cli_env");
  ASSERT_EQ(setenv("MFGRAPH_OUT", dir.string().c_str(), 1), 0);
  const int rc = run_cli("simulate --config " + cfg);
  unsetenv("MFGRAPH_OUT");
  EXPECT_EQ(rc, 0);
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
}
