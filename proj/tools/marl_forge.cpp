#include <cstdint>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "marl/harness.hpp"
#include "marl/oracle.hpp"

using namespace marl;
using namespace marl::harness;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

std::vector<std::uint64_t> parseSeeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      seeds.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("bad seed list: " + text);
    }
  }
  if (seeds.empty()) {
    throw ConfigError("empty seed list");
  }
  return seeds;
}

// Flags shared by train and oracle; unset flags leave the config alone.
struct Overrides {
  std::string config, env, algo, seeds, out;
  std::int64_t seed = -1;
  int episodes = -1, horizon = -1, evalEvery = -1;
  double gamma = -1.0;
  bool timing = false;
  std::vector<std::string> params;

  void attach(CLI::App* app, bool training) {
    app->add_option("--config", config, "JSON experiment config");
    app->add_option("--env", env, "environment name");
    app->add_option("--horizon", horizon, "episode horizon");
    app->add_option("--gamma", gamma, "discount factor");
    app->add_option("--param", params, "hyperparameter override key=value (repeatable)");
    if (training) {
      app->add_option("--algo", algo, "algorithm name");
      app->add_option("--seed", seed, "single seed");
      app->add_option("--seeds", seeds, "comma-separated seeds");
      app->add_option("--episodes", episodes, "training episodes");
      app->add_option("--out", out, "output directory");
      app->add_option("--eval-every", evalEvery, "greedy evaluation cadence");
      app->add_flag("--timing", timing, "record wall-clock milliseconds");
    }
  }

  ExperimentConfig build() const {
    ExperimentConfig cfg = config.empty() ? ExperimentConfig{} : loadConfig(config);
    if (!env.empty()) cfg.env = env;
    if (!algo.empty()) cfg.algo = algo;
    if (seed >= 0) cfg.seeds = {static_cast<std::uint64_t>(seed)};
    if (!seeds.empty()) cfg.seeds = parseSeeds(seeds);
    if (episodes >= 0) cfg.episodes = episodes;
    if (horizon >= 0) cfg.horizon = horizon;
    if (gamma >= 0.0) cfg.gamma = gamma;
    if (!out.empty()) cfg.out = out;
    if (evalEvery >= 0) cfg.evalEvery = evalEvery;
    if (timing) cfg.timing = true;
    for (const auto& kv : params) applyOverride(cfg, kv);
    return cfg;
  }
};

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cooperative multi-agent reinforcement learning toolkit"};
  app.require_subcommand(1);

  Overrides trainOpts;
  auto* train = app.add_subcommand("train", "train an algorithm on an environment");
  trainOpts.attach(train, true);

  std::string policyPath;
  auto* eval = app.add_subcommand("eval", "exactly evaluate a policy file");
  eval->add_option("--policy", policyPath, "policy file written by train")->required();

  Overrides oracleOpts;
  std::string oraclePolicy;
  double cap = 1e7;
  auto* oracle = app.add_subcommand("oracle", "optimal value and policy counts for a small environment");
  oracleOpts.attach(oracle, false);
  oracle->add_option("--policy", oraclePolicy, "also evaluate this policy file");
  oracle->add_option("--cap", cap, "maximum joint policies to enumerate");

  int nA = 0, nO = 0, H = 0, n = 0;
  bool verbose = false;
  auto* count = app.add_subcommand("count-policies", "count deterministic policies");
  count->add_option("--actions", nA, "actions per agent")->required();
  count->add_option("--obs", nO, "observations per agent")->required();
  count->add_option("--horizon", H, "horizon")->required();
  count->add_option("--agents", n, "number of agents")->required();
  count->add_flag("--verbose", verbose, "also print per-agent and centralized counts");

  auto* list = app.add_subcommand("list", "list environments and algorithms");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "ERROR: " << e.what() << '\n';
    return kConfigError;
  }

  try {
    if (*train) {
      const auto cfg = trainOpts.build();
      const auto summary = runExperiment(cfg, threadsFromEnvironment());
      std::cout << summary.dump(2) << '\n';
    } else if (*eval) {
      const auto lp = loadPolicy(policyPath);
      std::cout << std::setprecision(17) << evaluateJointPolicy(lp.model, lp.tree) << '\n';
    } else if (*oracle) {
      auto cfg = oracleOpts.build();
      if (isContinuousEnv(cfg.env)) {
        throw ConfigError("the oracle needs a discrete environment");
      }
      const auto model = makeEnv(cfg);
      std::cout << std::setprecision(17);
      std::cout << "env " << model.name << " horizon " << model.horizon << '\n';
      for (int i = 0; i < model.numAgents; ++i) {
        const auto c = countPolicies(model.numActions[i], model.numObservations[i], model.horizon, model.numAgents);
        std::cout << "policies agent " << i << ' ' << c.perAgent << " joint " << c.decentralized << '\n';
      }
      BruteForceOptions opts;
      opts.cap = cap;
      try {
        std::cout << "optimal " << *oracleValue(model, cap) << '\n';
      } catch (const std::bad_optional_access&) {
        std::cout << "optimal intractable\n";
      }
      if (!oraclePolicy.empty()) {
        const auto lp = loadPolicy(oraclePolicy);
        std::cout << "policy " << evaluateJointPolicy(lp.model, lp.tree) << '\n';
      }
    } else if (*count) {
      if (nA <= 0 || nO <= 0 || H <= 0 || n <= 0) {
        throw ConfigError("count-policies arguments must be positive");
      }
      const auto c = countPolicies(nA, nO, H, n);
      std::cout << c.decentralized << '\n';
      if (verbose) {
        std::cout << "per-agent " << c.perAgent << "\ncentralized " << c.centralized << '\n';
      }
    } else if (*list) {
      std::cout << "environments:";
      for (const auto& e : envNames()) std::cout << ' ' << e;
      std::cout << "\nalgorithms:";
      for (const auto& a : algoNames()) std::cout << ' ' << a;
      std::cout << '\n';
    }
  } catch (const ConfigError& e) {
    std::cerr << "ERROR: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "ERROR: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kOk;
}
