#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "modalrecon/io/runner.hpp"

using namespace modalrecon;
using namespace modalrecon::io;
namespace fs = std::filesystem;

namespace {

const std::string kScenarios = MODALRECON_SCENARIO_DIR;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("modalrecon_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Scenario from_text(const std::string& text) { return parse_scenario(YAML::Load(text), "mem.yaml"); }

std::string parse_error(const std::string& text) {
  try {
    from_text(text);
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

/// Rows of a CSV file, skipping '#' comment lines.
std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(cell);
    rows.push_back(row);
  }
  return rows;
}

int cli(const std::string& args, const fs::path& stdout_file) {
  const std::string cmd = std::string(MODALRECON_CLI) + " " + args + " > " + stdout_file.string() +
                          " 2> " + stdout_file.string() + ".err";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  return out;
}

}  // namespace

TEST(Scenario, PiFormsAndInfinity) {
  using io::detail::parse_real_text;
  EXPECT_DOUBLE_EQ(*parse_real_text("pi"), M_PI);
  EXPECT_DOUBLE_EQ(*parse_real_text("0.3pi"), 0.3 * M_PI);
  EXPECT_DOUBLE_EQ(*parse_real_text("0.3*pi"), 0.3 * M_PI);
  EXPECT_DOUBLE_EQ(*parse_real_text("pi/4"), M_PI / 4);
  EXPECT_DOUBLE_EQ(*parse_real_text("3*pi/4"), 3 * M_PI / 4);
  EXPECT_DOUBLE_EQ(*parse_real_text("-2.5e-3"), -2.5e-3);
  EXPECT_TRUE(std::isinf(*parse_real_text(".inf")));
  EXPECT_FALSE(parse_real_text("pie").has_value());
  EXPECT_FALSE(parse_real_text("pi/0").has_value());
  EXPECT_FALSE(parse_real_text("").has_value());
}

TEST(Scenario, DefaultsAndFields) {
  const Scenario sc = from_text(R"(
model: {variant: plate, n_modes: 10, beta: 0.5}
nonlinearity: {coefficients: [0, 0, 0, 1]}
observation: {omega: [[0.2pi, 0.5pi]], smoothing: 0.05pi, window: 2.0}
reconstruction: {split_top: 3}
)");
  EXPECT_EQ(sc.model.variant, Variant::plate);
  EXPECT_EQ(sc.model.n_modes, 10);
  EXPECT_DOUBLE_EQ(sc.model.length, M_PI);
  ASSERT_EQ(sc.observation.omega.size(), 1u);
  EXPECT_DOUBLE_EQ(sc.observation.omega[0].a, 0.2 * M_PI);
  EXPECT_DOUBLE_EQ(sc.run.T_total, 2.0);
  // split_top 3 puts the cut between the 7th and 8th frequencies.
  const auto mu = sc.build_model()->mode_frequencies();
  EXPECT_GT(sc.reconstruction.threshold_n, mu(6));
  EXPECT_LT(sc.reconstruction.threshold_n, mu(7));
}

TEST(Scenario, ErrorsNameLineAndField) {
  const std::string e1 = parse_error("model:\n  variant: wave\n  n_modes: x\n");
  EXPECT_NE(e1.find("mem.yaml:3"), std::string::npos) << e1;
  EXPECT_NE(e1.find("model.n_modes"), std::string::npos) << e1;

  const std::string e2 = parse_error("model:\n  variant: wave\n  colour: red\n");
  EXPECT_NE(e2.find("model.colour"), std::string::npos) << e2;
  EXPECT_NE(e2.find("unknown field"), std::string::npos) << e2;

  const std::string e3 = parse_error("model: {variant: heat}\n");
  EXPECT_NE(e3.find("model.variant"), std::string::npos) << e3;

  EXPECT_NE(parse_error("observation: {}\n").find("model"), std::string::npos);
  EXPECT_NE(parse_error("model: {n_modes: 8}\nextra: 1\n").find("extra"), std::string::npos);
}

TEST(Scenario, CrossFieldChecks) {
  const std::string base = "model: {variant: wave, n_modes: 8}\n";
  EXPECT_NE(parse_error(base + "reconstruction: {split_top: 8}\n").find("reconstruction.split_top"),
            std::string::npos);
  EXPECT_NE(parse_error(base + "run: {T_total: 1.0, dt: 0.3}\n").find("run.dt"), std::string::npos);
  EXPECT_NE(parse_error(base + "observation: {omega: [[2.0, 1.0]]}\n").find("observation.omega"),
            std::string::npos);
  EXPECT_NE(parse_error(base + "nonlinearity: {coefficients: [1, 0, 0, 1]}\n")
                .find("nonlinearity.coefficients"),
            std::string::npos);
  EXPECT_NE(parse_error(base + "gramian: {subspace: [0, 9]}\n").find("gramian.subspace"),
            std::string::npos);
  EXPECT_NE(parse_error(base + "scale: {sigma: -1}\n").find("scale.sigma"), std::string::npos);
  EXPECT_NE(parse_error(base + "analyticity: {K: 4}\n").find("analyticity.K"), std::string::npos);
}

TEST(Scenario, OverrideCopiesDocument) {
  const YAML::Node doc = YAML::Load("model: {n_modes: 8}\n");
  const YAML::Node o = with_override(doc, "reconstruction.split_top", YAML::Node(2));
  EXPECT_EQ(o["reconstruction"]["split_top"].as<int>(), 2);
  EXPECT_FALSE(doc["reconstruction"]);
  EXPECT_EQ(parse_scenario(o).model.n_modes, 8);
}

TEST(Scenario, ShippedExamplesParse) {
  int count = 0;
  for (const auto& e : fs::directory_iterator(kScenarios))
    if (e.path().extension() == ".yaml") {
      EXPECT_NO_THROW(load_scenario(e.path().string())) << e.path();
      ++count;
    }
  EXPECT_GE(count, 5);
  EXPECT_THROW(load_scenario(kScenarios + "/missing.yaml"), ValidationError);
}

TEST(Output, HashIsStableAndSensitive) {
  const Scenario a = from_text("model: {n_modes: 8}\n");
  const Scenario b = from_text("model: {n_modes: 8}\n");
  const Scenario c = from_text("model: {n_modes: 10}\n");
  EXPECT_EQ(scenario_hash(a), scenario_hash(b));
  EXPECT_NE(scenario_hash(a), scenario_hash(c));
  EXPECT_EQ(hex64(fnv1a("")), "cbf29ce484222325");
  EXPECT_EQ(hex64(fnv1a("a")), "af63dc4c8601ec8c");
}

TEST(Output, SeventeenDigitsRoundTrip) {
  for (double x : {M_PI, 1.0 / 3.0, -2.5e-300, 1e17 + 2.0})
    EXPECT_EQ(std::stod(format17(x)), x);
}

TEST(Cli, GccPrintsPointEightPi) {
  const fs::path out = scratch("gcc");
  fs::create_directories(out);
  const int code = cli("gcc --scenario " + kScenarios + "/gcc_interval.yaml --out " +
                           (out / "run").string(),
                       out / "stdout.txt");
  ASSERT_EQ(code, 0) << slurp(out / "stdout.txt.err");
  const double t = std::stod(slurp(out / "stdout.txt"));
  EXPECT_NEAR(t, 0.8 * M_PI, 1e-6);
  const Json j = Json::parse(slurp(out / "run" / "gcc.json"));
  EXPECT_NEAR(j["gcc_time"].get<double>(), 0.8 * M_PI, 1e-6);
  EXPECT_TRUE(j.contains("scenario_hash"));
  EXPECT_TRUE(j.contains("gramian_condition"));
}

TEST(Cli, ExitCodes) {
  const fs::path out = scratch("exit");
  fs::create_directories(out);
  std::ofstream(out / "bad.yaml") << "model:\n  n_modes: -3\n";
  std::ofstream(out / "blind.yaml") << "model: {n_modes: 6}\n"
                                       "observation: {omega: [[0.1, 0.2]], window: 0.5}\n"
                                       "run: {dt: 0.01}\n";
  EXPECT_EQ(cli("gramian --scenario " + (out / "bad.yaml").string(), out / "a.txt"), 2);
  EXPECT_NE(slurp(out / "a.txt.err").find("model.n_modes"), std::string::npos);
  EXPECT_EQ(cli("gramian --scenario " + (out / "missing.yaml").string(), out / "b.txt"), 2);
  EXPECT_EQ(cli("gramian", out / "c.txt"), 2);
  // A window shorter than the control time: unobservable, report still written.
  EXPECT_EQ(cli("gramian --scenario " + (out / "blind.yaml").string() + " --out " +
                    (out / "blind").string(),
                out / "d.txt"),
            3);
  EXPECT_TRUE(fs::exists(out / "blind" / "gramian.json"));
  EXPECT_TRUE(fs::exists(out / "blind" / "manifest.json"));
  EXPECT_EQ(cli("--version", out / "e.txt"), 0);
}

TEST(Run, FreeSimulationConservesEnergy) {
  const fs::path out = scratch("free");
  RunOptions opt;
  opt.out_dir = out;
  const RunManifest m = run("simulate", load_scenario(kScenarios + "/simulate_free.yaml"), opt);
  ASSERT_FALSE(m.failed) << m.failure;
  const auto rows = read_csv(out / "energy.csv");
  ASSERT_GT(rows.size(), 10u);
  EXPECT_EQ(rows[0][1], "energy");
  const double e0 = std::stod(rows[1][1]);
  EXPECT_GT(e0, 0.0);
  for (std::size_t i = 1; i < rows.size(); ++i)
    EXPECT_NEAR(std::stod(rows[i][1]), e0, 1e-12 * e0);
  const auto traj = read_csv(out / "trajectory.csv");
  EXPECT_EQ(traj[0][0], "time");
  EXPECT_EQ(traj[0].size(), 1u + 2 * 12);
  // Header comment carries the scenario hash.
  EXPECT_NE(slurp(out / "trajectory.csv").find(m.scenario_hash), std::string::npos);
}

TEST(Run, UnknownSubcommandThrows) {
  RunOptions opt;
  opt.out_dir = scratch("unknown");
  EXPECT_THROW(run("plot", load_scenario(kScenarios + "/gcc_interval.yaml"), opt), ValidationError);
}

TEST(Run, ReconstructEmbedsHashAndCondition) {
  const fs::path out = scratch("reconstruct");
  RunOptions opt;
  opt.out_dir = out;
  const RunManifest m = run("reconstruct", load_scenario(kScenarios + "/reconstruct_wave.yaml"), opt);
  ASSERT_FALSE(m.failed) << m.failure;
  const Json j = Json::parse(slurp(out / "reconstruct.json"));
  EXPECT_EQ(j["scenario_hash"].get<std::string>(), m.scenario_hash);
  EXPECT_GE(j["gramian_condition"].get<double>(), 1.0);
  EXPECT_LE(m.summary["relative_high_error"].get<double>(), 1e-6);
  for (const char* f : {"reconstruction.csv", "truth_high.csv"}) {
    const std::string text = slurp(out / f);
    EXPECT_NE(text.find(m.scenario_hash), std::string::npos) << f;
    EXPECT_NE(text.find("gramian_condition="), std::string::npos) << f;
  }
}

TEST(Run, SweepWritesPointsAndTable) {
  const fs::path out = scratch("sweep");
  RunOptions opt;
  opt.out_dir = out;
  const RunManifest m = run("sweep", load_scenario(kScenarios + "/sweep_threshold.yaml"), opt);
  ASSERT_FALSE(m.failed) << m.failure;
  for (const char* p : {"point_000", "point_001", "point_002"}) {
    EXPECT_TRUE(fs::exists(out / p / "reconstruct.json")) << p;
    EXPECT_TRUE(fs::exists(out / p / "manifest.json")) << p;
  }
  const auto rows = read_csv(out / "sweep_table.csv");
  ASSERT_EQ(rows.size(), 4u);
  const auto& h = rows[0];
  const auto col = std::find(h.begin(), h.end(), "first_contraction") - h.begin();
  ASSERT_LT(col, static_cast<long>(h.size()));
  EXPECT_EQ(rows[1][1], "6");
  EXPECT_EQ(rows[3][1], "2");
  for (int i = 1; i <= 3; ++i) EXPECT_LT(std::stod(rows[i][col]), 1.0);
}

TEST(Run, DeterministicOutputs) {
  setenv("SOURCE_DATE_EPOCH", "1700000000", 1);
  for (const char* name : {"reconstruct_wave", "simulate_nls", "analyticity_wave"}) {
    const Scenario sc = load_scenario(kScenarios + "/" + name + ".yaml");
    const std::string sub = std::string(name).substr(0, std::string(name).find('_'));
    RunOptions o1, o2;
    o1.out_dir = scratch(std::string("det1_") + name);
    o2.out_dir = scratch(std::string("det2_") + name);
    run(sub, sc, o1);
    run(sub, sc, o2);
    EXPECT_EQ(tree(o1.out_dir), tree(o2.out_dir)) << name;
  }
  unsetenv("SOURCE_DATE_EPOCH");
}

TEST(Run, ThreadCountDoesNotChangeMetrics) {
  const Scenario sc = load_scenario(kScenarios + "/sweep_threshold.yaml");
  RunOptions o1, o4;
  o1.out_dir = scratch("threads1");
  o4.out_dir = scratch("threads4");
  o4.threads = 4;
  const RunManifest a = run("sweep", sc, o1);
  const RunManifest b = run("sweep", sc, o4);
  const Json& pa = a.summary["point_results"];
  const Json& pb = b.summary["point_results"];
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i)
    for (const auto& kv : pa[i]["summary"].items()) {
      if (!kv.value().is_number()) continue;
      const double x = kv.value().get<double>(), y = pb[i]["summary"][kv.key()].get<double>();
      EXPECT_LE(std::abs(x - y), 1e-12 * std::max(1.0, std::abs(x))) << kv.key();
    }
  const Scenario g = load_scenario(kScenarios + "/gramian_full.yaml");
  o1.out_dir = scratch("gram1");
  o4.out_dir = scratch("gram4");
  const RunManifest g1 = run("gramian", g, o1);
  const RunManifest g4 = run("gramian", g, o4);
  EXPECT_LE(std::abs(g1.summary["min_eig"].get<double>() - g4.summary["min_eig"].get<double>()),
            1e-12);
  EXPECT_NEAR(g1.summary["min_eig"].get<double>(), M_PI, 1e-8);
}
