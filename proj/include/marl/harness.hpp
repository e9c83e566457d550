#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "marl/core.hpp"
#include "marl/oracle.hpp"

namespace marl::harness {

using Json = nlohmann::ordered_json;

/// Bad configuration: unknown names or keys, malformed values, missing files.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// One experiment. Everything that is not a harness key lives in `params`
/// (environment and algorithm hyperparameters), keyed flat.
struct ExperimentConfig {
  std::string env = "dectiger";
  std::string algo = "iql";
  int horizon = 2;
  std::optional<double> gamma;  // unset: environment default
  int episodes = 1000;
  std::vector<std::uint64_t> seeds{1};
  std::string out = "runs/default";
  int evalEvery = 100;     // greedy evaluation cadence in episodes
  int evalEpisodes = 100;  // Monte Carlo rollouts, continuous environments only
  bool timing = false;     // fill wall_ms; off keeps outputs byte-identical
  Json params = Json::object();

  Json toJson() const;
  /// Throws ConfigError on unknown harness keys or wrong types.
  static ExperimentConfig fromJson(const Json& j);
};

ExperimentConfig loadConfig(const std::string& path);
/// Applies "key=value" overrides; values are parsed as JSON, falling back to strings.
void applyOverride(ExperimentConfig& cfg, const std::string& keyValue);

const std::vector<std::string>& envNames();
const std::vector<std::string>& algoNames();

/// Discrete environment for `cfg` (every env except rendezvous).
DecPomdpModel makeEnv(const ExperimentConfig& cfg);
bool isContinuousEnv(const std::string& env);

/// Checks names, keys and value ranges without training. Throws ConfigError.
void validate(const ExperimentConfig& cfg);

/// Optimal decentralized value when it can be computed exactly.
std::optional<double> oracleValue(const DecPomdpModel& model, double cap = 1e6);

struct SeedResult {
  std::uint64_t seed = 0;
  double finalEval = 0.0;
};

/// Runs every seed (up to `threads` concurrently), writing
///   metrics_seed<N>.csv, policy_seed<N>.json (discrete decentralized
///   learners), effective_config.json and summary.json into cfg.out.
/// Returns the summary document.
Json runExperiment(const ExperimentConfig& cfg, int threads = 1);

/// Thread cap from MARL_FORGE_THREADS (default 1).
int threadsFromEnvironment();

/// Policy file I/O: self-describing (env, horizon, gamma, params) tables of
/// reachable histories.
Json policyToJson(const ExperimentConfig& cfg, const DecPomdpModel& model, const PolicyTree& tree);
struct LoadedPolicy {
  ExperimentConfig cfg;
  DecPomdpModel model;
  PolicyTree tree;
};
LoadedPolicy loadPolicy(const std::string& path);

} // namespace marl::harness
