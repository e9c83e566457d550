#include "marl/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include "marl/ctde_value.hpp"
#include "marl/cte.hpp"
#include "marl/dte_value.hpp"
#include "marl/envs.hpp"
#include "marl/pg.hpp"

namespace marl::harness {

namespace fs = std::filesystem;

namespace {

// Reads flat parameters, remembering which keys were consumed.
class Params {
public:
  explicit Params(const Json& j) : j_(j) {
    if (!j_.is_object()) {
      throw ConfigError("params must be an object");
    }
  }

  template <class T>
  T get(const std::string& key, T def) {
    used_.insert(key);
    if (!j_.contains(key)) {
      return def;
    }
    try {
      return j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("parameter '" + key + "' has the wrong type");
    }
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  const Json& raw(const std::string& key) {
    used_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!used_.count(k)) {
        throw ConfigError("unknown parameter: " + k);
      }
    }
  }

private:
  const Json& j_;
  std::set<std::string> used_;
};

std::string formatNumber(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

LinearSchedule readSchedule(Params& p, LinearSchedule def) {
  def.start = p.get("epsilon", def.start);
  def.end = p.get("epsilon_end", p.has("epsilon") && !p.has("epsilon_steps") ? def.start : def.end);
  def.steps = p.get("epsilon_steps", def.steps);
  if (def.start < 0 || def.start > 1 || def.end < 0 || def.end > 1) {
    throw ConfigError("epsilon values must lie in [0, 1]");
  }
  return def;
}

DecPomdpModel envFromParams(const ExperimentConfig& cfg, Params& p) {
  DecPomdpModel m;
  try {
    if (cfg.env == "dectiger") {
      m = makeDecTiger(cfg.horizon, p.get("listen_accuracy", 0.85));
    } else if (cfg.env == "climb") {
      const double noise = p.get("noise", 0.0);
      if (p.has("payoff")) {
        m = makeClimbGame(p.get<std::vector<std::vector<double>>>("payoff", {}), noise);
      } else {
        m = makeClimbGame(defaultClimbMatrix(), noise);
      }
    } else if (cfg.env == "gridmmdp") {
      m = makeGridMmdp(p.get("grid_size", 3), cfg.horizon);
    } else if (cfg.env == "rendezvous") {
      throw ConfigError("rendezvous is a continuous environment");
    } else {
      throw ConfigError("unknown environment: " + cfg.env);
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (cfg.gamma) {
    m.discount = *cfg.gamma;
  }
  return m;
}

using Runner = std::function<EvalPolicy(const DecPomdpModel&, std::uint64_t, const EpisodeHook&)>;

struct AlgoSpec {
  Runner run;
  bool decentralized = true;
};

AlgoSpec makeRunner(const ExperimentConfig& cfg, Params& p) {
  const std::string& a = cfg.algo;
  const int episodes = cfg.episodes;
  try {
    if (a == "iql" || a == "distq" || a == "hyst" || a == "lenient") {
      TabularConfig c;
      c.algo = tabularAlgoFromName(a);
      c.episodes = episodes;
      c.alpha = p.get("alpha", c.alpha);
      c.beta = p.get("beta", c.beta);
      c.epsilon = readSchedule(p, c.epsilon);
      c.qInit = p.get("q_init", c.qInit);
      c.maxTemperature = p.get("max_temperature", c.maxTemperature);
      c.temperatureDecay = p.get("temperature_decay", c.temperatureDecay);
      c.leniencyK = p.get("leniency_k", c.leniencyK);
      c.decayOnlyAfterUpdate = p.get("decay_only_after_update", c.decayOnlyAfterUpdate);
      c.markovKeys = p.get("markov_keys", c.markovKeys);
      c.independentStreams = p.get("independent_streams", c.independentStreams);
      return {[c](const DecPomdpModel& m, std::uint64_t seed, const EpisodeHook& hook) {
                return EvalPolicy::of(m, trainTabular(m, c, seed, hook).greedyPolicy(m));
              }};
    }
    if (a == "idrqn" || a == "dechdrqn") {
      DrqnConfig c;
      c.episodes = episodes;
      c.hysteretic = a == "dechdrqn";
      c.cert = a == "dechdrqn";
      c.hidden = p.get("hidden", c.hidden);
      c.lr = p.get("lr", c.lr);
      c.beta = p.get("beta", c.beta);
      c.epsilon = readSchedule(p, c.epsilon);
      c.targetSync = p.get("target_sync", c.targetSync);
      c.bufferCapacity = p.get("buffer", c.bufferCapacity);
      c.updatesPerEpisode = p.get("updates_per_episode", c.updatesPerEpisode);
      c.cert = p.get("cert", c.cert);
      c.useReplay = p.get("replay", c.useReplay);
      c.adam = p.get("adam", c.adam);
      c.gradClip = p.get("grad_clip", c.gradClip);
      return {[c](const DecPomdpModel& m, std::uint64_t seed, const EpisodeHook& hook) {
                return EvalPolicy::of(m, trainDrqn(m, c, seed, hook).greedyPolicy(m));
              }};
    }
    if (a == "vdn" || a == "qmix" || a == "wqmix-cw" || a == "wqmix-ow" || a == "qtran" || a == "qtran-alt" ||
        a == "qplex") {
      FactorConfig c;
      c.algo = factorAlgoFromName(a);
      c.episodes = episodes;
      c.hidden = p.get("hidden", c.hidden);
      c.embed = p.get("embed", c.embed);
      c.lr = p.get("lr", c.lr);
      c.epsilon = readSchedule(p, c.epsilon);
      c.targetSync = p.get("target_sync", c.targetSync);
      c.bufferCapacity = p.get("buffer", c.bufferCapacity);
      c.batchEpisodes = p.get("batch_episodes", c.batchEpisodes);
      c.updatesPerEpisode = p.get("updates_per_episode", c.updatesPerEpisode);
      c.wqmixAlpha = p.get("wqmix_alpha", c.wqmixAlpha);
      c.lambdaOpt = p.get("lambda_opt", c.lambdaOpt);
      c.lambdaNopt = p.get("lambda_nopt", c.lambdaNopt);
      const auto input = p.get<std::string>("mixer_input", "state");
      if (input != "state" && input != "history") {
        throw ConfigError("mixer_input must be 'state' or 'history'");
      }
      c.mixerInput = input == "state" ? MixerInput::State : MixerInput::History;
      c.qmixOneLayer = p.get("qmix_one_layer", c.qmixOneLayer);
      c.gradClip = p.get("grad_clip", c.gradClip);
      return {[c](const DecPomdpModel& m, std::uint64_t seed, const EpisodeHook& hook) {
                return EvalPolicy::of(m, trainFactorized(m, c, seed, hook).greedyPolicy(m));
              }};
    }
    if (a == "reinforce" || a == "iac" || a == "iacc" || a == "ia2cc" || a == "coma" || a == "mappo" ||
        a == "ippo") {
      PgConfig c;
      c.algo = pgAlgoFromName(a);
      c.episodes = episodes;
      if (p.has("critic")) {
        c.critic = criticKindFromName(p.get<std::string>("critic", ""));
      }
      c.hidden = p.get("hidden", c.hidden);
      c.actorLr = p.get("actor_lr", c.actorLr);
      c.criticLr = p.get("critic_lr", c.criticLr);
      c.discountActor = p.get("discount_actor", c.discountActor);
      c.adam = p.get("adam", c.adam);
      c.batchEpisodes = p.get("batch_episodes", c.batchEpisodes);
      c.reinforceBaseline = p.get("baseline", c.reinforceBaseline);
      c.entropyCoef = p.get("entropy", c.entropyCoef);
      c.clipEps = p.get("clip_eps", c.clipEps);
      c.epochs = p.get("epochs", c.epochs);
      c.valueClip = p.get("value_clip", c.valueClip);
      c.shareParameters = p.get("share", c.shareParameters);
      c.gradClip = p.get("grad_clip", c.gradClip);
      return {[c](const DecPomdpModel& m, std::uint64_t seed, const EpisodeHook& hook) {
                return EvalPolicy::of(m, trainPolicyGradient(m, c, seed, hook).greedyPolicy(m));
              }};
    }
    if (a == "central-q-mmdp" || a == "central-q-mpomdp") {
      CentralConfig c;
      c.episodes = episodes;
      c.alpha = p.get("alpha", c.alpha);
      c.epsilon = readSchedule(p, c.epsilon);
      c.qInit = p.get("q_init", c.qInit);
      if (a == "central-q-mmdp") {
        return {[c](const DecPomdpModel& m, std::uint64_t seed, const EpisodeHook& hook) {
                  return EvalPolicy::of(m, trainCentralMmdp(m, c, seed, hook).greedyPolicy(m));
                }};
      }
      return {[c](const DecPomdpModel& m, std::uint64_t seed, const EpisodeHook& hook) {
                EvalPolicy e;
                e.controller = trainCentralMpomdp(m, c, seed, hook).greedyController(m);
                return e;
              },
              false};
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  throw ConfigError("unknown algorithm: " + a);
}

MaddpgConfig maddpgFromParams(const ExperimentConfig& cfg, Params& p) {
  MaddpgConfig c;
  c.episodes = cfg.episodes;
  c.gamma = cfg.gamma.value_or(c.gamma);
  c.hidden = p.get("hidden", c.hidden);
  c.actorLr = p.get("actor_lr", c.actorLr);
  c.criticLr = p.get("critic_lr", c.criticLr);
  c.noiseSigma = p.get("noise", c.noiseSigma);
  c.tau = p.get("tau", c.tau);
  c.bufferCapacity = p.get("buffer", c.bufferCapacity);
  c.batchEpisodes = p.get("batch_episodes", c.batchEpisodes);
  c.gradClip = p.get("grad_clip", c.gradClip);
  return c;
}

Rendezvous1D rendezvousFromParams(const ExperimentConfig& cfg, Params& p) {
  try {
    return makeRendezvous(cfg.horizon, p.get("obs_sigma", 0.1));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

// Climb is one-shot: its horizon is always 1.
ExperimentConfig normalized(ExperimentConfig cfg) {
  if (cfg.env == "climb") {
    cfg.horizon = 1;
  }
  return cfg;
}

class CsvLog {
public:
  explicit CsvLog(const fs::path& path) : out_(path, std::ios::binary) {
    if (!out_) {
      throw std::runtime_error("cannot write " + path.string());
    }
    out_ << "episode,train_return,eval_return,loss,explore,wall_ms\n";
    out_.flush();
  }

  void row(int episode, double trainReturn, std::optional<double> evalReturn, double loss, double explore,
           double wallMs) {
    out_ << episode << ',' << formatNumber(trainReturn) << ',' << (evalReturn ? formatNumber(*evalReturn) : "")
         << ',' << formatNumber(loss) << ',' << formatNumber(explore) << ',' << formatNumber(wallMs) << '\n';
    out_.flush();
    if (!out_) {
      throw std::runtime_error("metrics write failed");
    }
  }

private:
  std::ofstream out_;
};

void writeJson(const fs::path& path, const Json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  out << j.dump(2) << '\n';
}

SeedResult runSeed(const ExperimentConfig& cfg, std::uint64_t seed, const fs::path& dir) {
  CsvLog log(dir / ("metrics_seed" + std::to_string(seed) + ".csv"));
  const auto start = std::chrono::steady_clock::now();
  auto wall = [&]() {
    if (!cfg.timing) return 0.0;
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  };
  auto dueForEval = [&](int ep) {
    return ep + 1 == cfg.episodes || (cfg.evalEvery > 0 && (ep + 1) % cfg.evalEvery == 0);
  };
  SeedResult res{seed, 0.0};

  if (isContinuousEnv(cfg.env)) {
    Params p(cfg.params);
    const auto env = rendezvousFromParams(cfg, p);
    const auto mc = maddpgFromParams(cfg, p);
    const int every = cfg.evalEvery > 0 ? cfg.evalEvery : cfg.episodes;
    auto result = trainMaddpg(
        env, mc, seed,
        [&](const EpisodeStats& s, double evalReturn) {
          std::optional<double> ev;
          if (!std::isnan(evalReturn)) ev = evalReturn;
          log.row(s.episode, s.trainReturn, ev, s.loss, s.explore, wall());
        },
        every, cfg.evalEpisodes);
    res.finalEval = result.evaluate(env, cfg.evalEpisodes, seed ^ 0x5eedULL, mc.gamma);
    return res;
  }

  Params p(cfg.params);
  const DecPomdpModel model = envFromParams(cfg, p);
  const AlgoSpec spec = makeRunner(cfg, p);
  EvalPolicy last;
  const EvalPolicy finalPolicy = spec.run(model, seed, [&](const EpisodeStats& s, const GreedyFn& greedy) {
    std::optional<double> ev;
    if (dueForEval(s.episode)) {
      last = greedy();
      ev = evaluateController(model, last.controller);
      res.finalEval = *ev;
    }
    log.row(s.episode, s.trainReturn, ev, s.loss, s.explore, wall());
  });
  if (cfg.episodes == 0) {
    res.finalEval = evaluateController(model, finalPolicy.controller);
  }
  if (spec.decentralized && !finalPolicy.policy.empty()) {
    const auto tree = reachablePolicyTree(model, finalPolicy.policy);
    writeJson(dir / ("policy_seed" + std::to_string(seed) + ".json"), policyToJson(cfg, model, tree));
  }
  return res;
}

} // namespace

// ------------------------------------------------------------------ config

Json ExperimentConfig::toJson() const {
  Json j;
  j["env"] = env;
  j["algo"] = algo;
  j["horizon"] = horizon;
  if (gamma) {
    j["gamma"] = *gamma;
  }
  j["episodes"] = episodes;
  j["seeds"] = seeds;
  j["out"] = out;
  j["eval_every"] = evalEvery;
  j["eval_episodes"] = evalEpisodes;
  j["timing"] = timing;
  j["params"] = params;
  return j;
}

ExperimentConfig ExperimentConfig::fromJson(const Json& j) {
  if (!j.is_object()) {
    throw ConfigError("config must be a JSON object");
  }
  ExperimentConfig c;
  static const std::set<std::string> known{"env",  "algo",       "horizon",       "gamma",  "episodes", "seeds",
                                           "seed", "out",        "eval_every",    "eval_episodes", "timing",
                                           "params"};
  try {
    for (const auto& [k, v] : j.items()) {
      if (!known.count(k)) {
        throw ConfigError("unknown config key: " + k + " (hyperparameters go under \"params\")");
      }
    }
    c.env = j.value("env", c.env);
    c.algo = j.value("algo", c.algo);
    c.horizon = j.value("horizon", c.horizon);
    if (j.contains("gamma") && !j.at("gamma").is_null()) {
      c.gamma = j.at("gamma").get<double>();
    }
    c.episodes = j.value("episodes", c.episodes);
    if (j.contains("seeds")) {
      c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    }
    if (j.contains("seed")) {
      c.seeds = {j.at("seed").get<std::uint64_t>()};
    }
    c.out = j.value("out", c.out);
    c.evalEvery = j.value("eval_every", c.evalEvery);
    c.evalEpisodes = j.value("eval_episodes", c.evalEpisodes);
    c.timing = j.value("timing", c.timing);
    if (j.contains("params")) {
      c.params = j.at("params");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  return c;
}

ExperimentConfig loadConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot read config file: " + path);
  }
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return ExperimentConfig::fromJson(j);
}

void applyOverride(ExperimentConfig& cfg, const std::string& keyValue) {
  const auto eq = keyValue.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override must look like key=value: " + keyValue);
  }
  const std::string key = keyValue.substr(0, eq);
  const std::string text = keyValue.substr(eq + 1);
  Json value = Json::parse(text, nullptr, false);
  if (value.is_discarded()) {
    value = text;
  }
  cfg.params[key] = value;
}

const std::vector<std::string>& envNames() {
  static const std::vector<std::string> names{"dectiger", "climb", "gridmmdp", "rendezvous"};
  return names;
}

const std::vector<std::string>& algoNames() {
  static const std::vector<std::string> names{
      "iql",  "distq", "hyst",      "lenient",   "idrqn", "dechdrqn", "vdn", "qmix", "wqmix-cw",
      "wqmix-ow", "qtran", "qtran-alt", "qplex", "reinforce", "iac",  "iacc", "ia2cc", "coma",
      "mappo", "ippo", "maddpg", "central-q-mmdp", "central-q-mpomdp"};
  return names;
}

bool isContinuousEnv(const std::string& env) { return env == "rendezvous"; }

DecPomdpModel makeEnv(const ExperimentConfig& cfg) {
  Params p(cfg.params);
  return envFromParams(normalized(cfg), p);
}

void validate(const ExperimentConfig& raw) {
  const ExperimentConfig cfg = normalized(raw);
  if (cfg.seeds.empty()) {
    throw ConfigError("seeds must be nonempty");
  }
  if (std::set<std::uint64_t>(cfg.seeds.begin(), cfg.seeds.end()).size() != cfg.seeds.size()) {
    throw ConfigError("seeds must be distinct");
  }
  if (cfg.episodes < 0) {
    throw ConfigError("episodes must be nonnegative");
  }
  if (cfg.horizon <= 0) {
    throw ConfigError("horizon must be positive");
  }
  if (cfg.gamma && !(*cfg.gamma >= 0.0 && *cfg.gamma <= 1.0)) {
    throw ConfigError("gamma must lie in [0, 1]");
  }
  if (cfg.evalEpisodes <= 0) {
    throw ConfigError("eval_episodes must be positive");
  }
  if (std::find(envNames().begin(), envNames().end(), cfg.env) == envNames().end()) {
    throw ConfigError("unknown environment: " + cfg.env);
  }
  if (std::find(algoNames().begin(), algoNames().end(), cfg.algo) == algoNames().end()) {
    throw ConfigError("unknown algorithm: " + cfg.algo);
  }
  Params p(cfg.params);
  if (isContinuousEnv(cfg.env) != (cfg.algo == "maddpg")) {
    throw ConfigError("maddpg runs on rendezvous only, and rendezvous only supports maddpg");
  }
  if (isContinuousEnv(cfg.env)) {
    rendezvousFromParams(cfg, p);
    maddpgFromParams(cfg, p);
  } else {
    const auto model = envFromParams(cfg, p);
    makeRunner(cfg, p);
    if (cfg.algo == "central-q-mmdp" && !model.fullyObservable) {
      throw ConfigError("central-q-mmdp needs a fully observable environment");
    }
  }
  p.finish();
}

std::optional<double> oracleValue(const DecPomdpModel& model, double cap) {
  if (model.fullyObservable) {
    return valueIteration(model).initialValue;
  }
  try {
    BruteForceOptions opts;
    opts.cap = cap;
    return bruteForceOptimal(model, opts).value;
  } catch (const Intractable&) {
    return std::nullopt;
  }
}

int threadsFromEnvironment() {
  const char* v = std::getenv("MARL_FORGE_THREADS");
  if (!v || !*v) {
    return 1;
  }
  try {
    return std::max(1, std::stoi(v));
  } catch (const std::exception&) {
    throw ConfigError("MARL_FORGE_THREADS must be a positive integer");
  }
}

Json runExperiment(const ExperimentConfig& raw, int threads) {
  validate(raw);
  const ExperimentConfig cfg = normalized(raw);
  const fs::path dir(cfg.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw std::runtime_error("cannot create output directory " + cfg.out + ": " + ec.message());
  }
  writeJson(dir / "effective_config.json", cfg.toJson());

  std::vector<SeedResult> results(cfg.seeds.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failureMutex;
  auto worker = [&]() {
    for (std::size_t k = next++; k < cfg.seeds.size(); k = next++) {
      try {
        results[k] = runSeed(cfg, cfg.seeds[k], dir);
      } catch (...) {
        std::lock_guard lock(failureMutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int n = std::max(1, std::min<int>(threads, static_cast<int>(cfg.seeds.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) {
    std::rethrow_exception(failure);
  }

  Json summary;
  summary["env"] = cfg.env;
  summary["algo"] = cfg.algo;
  summary["horizon"] = cfg.horizon;
  summary["episodes"] = cfg.episodes;
  summary["seeds"] = cfg.seeds;
  std::vector<double> finals;
  for (const auto& r : results) finals.push_back(r.finalEval);
  summary["final_eval"] = finals;
  double mean = 0.0;
  for (double x : finals) mean += x;
  mean /= finals.size();
  double var = 0.0;
  for (double x : finals) var += (x - mean) * (x - mean);
  const double stderr_ = finals.size() > 1 ? std::sqrt(var / (finals.size() - 1) / finals.size()) : 0.0;
  summary["final_eval_mean"] = mean;
  summary["final_eval_stderr"] = stderr_;
  if (!isContinuousEnv(cfg.env)) {
    if (const auto v = oracleValue(makeEnv(cfg))) {
      summary["oracle_value"] = *v;
      summary["oracleGap"] = *v - mean;
    }
  }
  writeJson(dir / "summary.json", summary);
  return summary;
}

// ------------------------------------------------------------------ policies

Json policyToJson(const ExperimentConfig& cfg, const DecPomdpModel& model, const PolicyTree& tree) {
  Json j;
  j["config"] = cfg.toJson();
  j["horizon"] = model.horizon;
  j["gamma"] = model.discount;
  Json agents = Json::array();
  for (std::size_t i = 0; i < tree.actions.size(); ++i) {
    std::vector<std::pair<HistoryKey, int>> rows(tree.actions[i].begin(), tree.actions[i].end());
    std::sort(rows.begin(), rows.end());
    Json table = Json::array();
    for (const auto& [key, a] : rows) {
      table.push_back({{"h", key}, {"a", a}});
    }
    agents.push_back(table);
  }
  j["agents"] = agents;
  return j;
}

LoadedPolicy loadPolicy(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot read policy file: " + path);
  }
  try {
    const Json j = Json::parse(in);
    LoadedPolicy lp;
    lp.cfg = ExperimentConfig::fromJson(j.at("config"));
    lp.model = makeEnv(lp.cfg);
    lp.tree.horizon = j.at("horizon").get<int>();
    if (lp.tree.horizon != lp.model.horizon) {
      throw ConfigError("policy horizon does not match its environment");
    }
    for (const auto& table : j.at("agents")) {
      lp.tree.actions.emplace_back();
      for (const auto& row : table) {
        lp.tree.actions.back()[row.at("h").get<HistoryKey>()] = row.at("a").get<int>();
      }
    }
    if (static_cast<int>(lp.tree.actions.size()) != lp.model.numAgents) {
      throw ConfigError("policy agent count does not match its environment");
    }
    return lp;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed policy file: ") + e.what());
  }
}

} // namespace marl::harness
