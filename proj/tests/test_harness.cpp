#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "marl/harness.hpp"

using namespace marl;
using namespace marl::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("marl_forge_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CliResult {
  int code;
  std::string out;
};

CliResult runCli(const std::string& args, const fs::path& dir) {
  const fs::path outFile = dir / "stdout.txt";
  const std::string cmd = std::string("\"") + MARL_FORGE_CLI + "\" " + args + " > \"" +
                          outFile.string() + "\" 2> \"" + (dir / "stderr.txt").string() + "\"";
  const int status = std::system(cmd.c_str());
  return {WEXITSTATUS(status), slurp(outFile)};
}

ExperimentConfig smallConfig(const fs::path& out) {
  ExperimentConfig cfg;
  cfg.env = "dectiger";
  cfg.algo = "iql";
  cfg.horizon = 2;
  cfg.episodes = 200;
  cfg.evalEvery = 50;
  cfg.seeds = {1};
  cfg.out = out.string();
  return cfg;
}

} // namespace

TEST(Harness, ByteIdenticalReruns) {
  const auto a = scratch("det_a");
  const auto b = scratch("det_b");
  for (const auto& algo : {"iql", "vdn", "ia2cc"}) {
    auto ca = smallConfig(a);
    ca.algo = algo;
    ca.episodes = 60;
    ca.evalEvery = 20;
    auto cb = ca;
    cb.out = b.string();
    runExperiment(ca);
    runExperiment(cb);
    EXPECT_EQ(slurp(a / "metrics_seed1.csv"), slurp(b / "metrics_seed1.csv")) << algo;
    EXPECT_EQ(slurp(a / "summary.json"), slurp(b / "summary.json")) << algo;
  }
}

TEST(Harness, OneMetricsFilePerSeed) {
  const auto dir = scratch("seeds");
  auto cfg = smallConfig(dir);
  cfg.seeds = {1, 2, 3};
  cfg.episodes = 40;
  runExperiment(cfg);
  int csv = 0;
  int summary = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.rfind("metrics_seed", 0) == 0) ++csv;
    if (name == "summary.json") ++summary;
  }
  EXPECT_EQ(csv, 3);
  EXPECT_EQ(summary, 1);
}

TEST(Harness, CsvHeaderAndIncreasingEpisodes) {
  const auto dir = scratch("csv");
  runExperiment(smallConfig(dir));
  std::ifstream in(dir / "metrics_seed1.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "episode,train_return,eval_return,loss,explore,wall_ms");
  long last = -1;
  int rows = 0;
  while (std::getline(in, line)) {
    const long ep = std::stol(line.substr(0, line.find(',')));
    EXPECT_GT(ep, last);
    last = ep;
    ++rows;
  }
  EXPECT_EQ(rows, 200);
}

TEST(Harness, OracleGapForSmallDecTiger) {
  const auto dir = scratch("gap");
  auto cfg = smallConfig(dir);
  cfg.algo = "vdn";
  cfg.episodes = 30;
  cfg.evalEvery = 10;
  const auto summary = runExperiment(cfg);
  ASSERT_TRUE(summary.contains("oracleGap"));
  EXPECT_NEAR(summary["oracle_value"].get<double>(), bruteForceOptimal(makeEnv(cfg)).value, 1e-12);
  EXPECT_GE(summary["oracleGap"].get<double>(), -1e-9);
}

TEST(Harness, EffectiveConfigRoundTrip) {
  const auto dir = scratch("roundtrip");
  auto cfg = smallConfig(dir);
  applyOverride(cfg, "alpha=0.2");
  applyOverride(cfg, "schedule=linear");
  EXPECT_EQ(cfg.params["alpha"].get<double>(), 0.2);
  EXPECT_EQ(cfg.params["schedule"].get<std::string>(), "linear");
  cfg.params.erase("schedule");
  cfg.episodes = 50;
  runExperiment(cfg);
  const auto first = slurp(dir / "metrics_seed1.csv");

  auto echoed = loadConfig((dir / "effective_config.json").string());
  EXPECT_EQ(echoed.toJson(), cfg.toJson());
  const auto again = scratch("roundtrip_again");
  echoed.out = again.string();
  runExperiment(echoed);
  EXPECT_EQ(slurp(again / "metrics_seed1.csv"), first);
}

TEST(Harness, ValidationErrors) {
  ExperimentConfig cfg;
  cfg.env = "nowhere";
  EXPECT_THROW(validate(cfg), ConfigError);
  cfg = ExperimentConfig{};
  cfg.algo = "qatten";
  EXPECT_THROW(validate(cfg), ConfigError);
  cfg = ExperimentConfig{};
  cfg.seeds.clear();
  EXPECT_THROW(validate(cfg), ConfigError);
  EXPECT_THROW(ExperimentConfig::fromJson(Json{{"envv", "dectiger"}}), ConfigError);
  EXPECT_THROW(loadConfig("/nonexistent/missing.cfg"), ConfigError);
}

TEST(Harness, PolicyFileEvaluatesExactly) {
  const auto dir = scratch("policy");
  runExperiment(smallConfig(dir));
  const auto lp = loadPolicy((dir / "policy_seed1.json").string());
  const auto summary = Json::parse(slurp(dir / "summary.json"));
  EXPECT_NEAR(evaluateJointPolicy(lp.model, lp.tree), summary["final_eval"][0].get<double>(), 1e-9);
}

TEST(Cli, CountPolicies) {
  const auto dir = scratch("cli_count");
  const auto r = runCli("count-policies --actions 2 --obs 2 --horizon 2 --agents 1", dir);
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "8\n");
}

TEST(Cli, MissingConfigIsConfigError) {
  const auto dir = scratch("cli_missing");
  EXPECT_EQ(runCli("train --config missing.cfg", dir).code, 1);
  EXPECT_EQ(slurp(dir / "stderr.txt").rfind("ERROR:", 0), 0u);
}

TEST(Cli, UnknownKeyIsConfigError) {
  const auto dir = scratch("cli_key");
  std::ofstream(dir / "bad.json") << R"({"env": "dectiger", "horizn": 2})";
  EXPECT_EQ(runCli("train --config \"" + (dir / "bad.json").string() + "\"", dir).code, 1);
}

TEST(Cli, ListNamesEverything) {
  const auto dir = scratch("cli_list");
  const auto r = runCli("list", dir);
  EXPECT_EQ(r.code, 0);
  for (const auto& e : envNames()) EXPECT_NE(r.out.find(e), std::string::npos) << e;
  for (const auto& a : algoNames()) EXPECT_NE(r.out.find(" " + a), std::string::npos) << a;
}

TEST(Cli, TrainThenEval) {
  const auto dir = scratch("cli_train");
  const auto out = dir / "run";
  const auto r = runCli("train --env dectiger --horizon 2 --algo iql --seeds 4 --episodes 100 --out \"" +
                            out.string() + "\"",
                        dir);
  ASSERT_EQ(r.code, 0);
  const auto summary = Json::parse(slurp(out / "summary.json"));
  const auto e = runCli("eval --policy \"" + (out / "policy_seed4.json").string() + "\"", dir);
  ASSERT_EQ(e.code, 0);
  EXPECT_NEAR(std::stod(e.out), summary["final_eval"][0].get<double>(), 1e-9);
}

TEST(Cli, OracleSubcommand) {
  const auto dir = scratch("cli_oracle");
  const auto r = runCli("oracle --env dectiger --horizon 2", dir);
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("optimal -4"), std::string::npos) << r.out;
}
