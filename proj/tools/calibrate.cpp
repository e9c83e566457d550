// Seed sweeps behind the constants in tests/calibration.hpp. Each subcommand
// trains one learner family on seeds 0..n-1 and reports how many greedy
// policies clear the success threshold, plus a histogram of exact values.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "marl/ctde_value.hpp"
#include "marl/cte.hpp"
#include "marl/dte_value.hpp"
#include "marl/envs.hpp"
#include "marl/oracle.hpp"
#include "marl/pg.hpp"

using namespace marl;

namespace {

struct Common {
  std::string env = "climb";
  int horizon = 2;
  int seeds = 100;
  int episodes = 2000;
  double tol = 1e-9;
  // Success is value >= threshold when set, else value >= optimum - tol.
  double threshold = std::nan("");
  bool noListen = false;

  void attach(CLI::App* app) {
    app->add_option("--env", env, "climb, dectiger or gridmmdp");
    app->add_option("--horizon", horizon, "horizon (dectiger, gridmmdp)");
    app->add_option("--seeds", seeds, "number of seeds, run as 0..n-1");
    app->add_option("--episodes", episodes, "training episodes");
    app->add_option("--tol", tol, "success tolerance below the optimum");
    app->add_option("--threshold", threshold, "explicit success threshold");
    app->add_flag("--no-listen", noListen, "threshold = best Dec-Tiger policy that never listens");
  }

  DecPomdpModel model() const {
    if (env == "climb") return makeClimbGame();
    if (env == "dectiger") return makeDecTiger(horizon);
    if (env == "gridmmdp") return makeGridMmdp(3, horizon, 0.9);
    throw CLI::ValidationError("--env", "unknown env " + env);
  }

  double successThreshold(const DecPomdpModel& m) const {
    if (!std::isnan(threshold)) return threshold;
    if (noListen) {
      BruteForceOptions opts;
      opts.allowedActions = {{tiger::kOpenLeft, tiger::kOpenRight}, {tiger::kOpenLeft, tiger::kOpenRight}};
      return bruteForceOptimal(m, opts).value;
    }
    const double best = m.fullyObservable ? valueIteration(m).initialValue : bruteForceOptimal(m).value;
    return best - tol;
  }
};

void sweep(const Common& c, const std::function<JointPolicy(const DecPomdpModel&, std::uint64_t)>& train) {
  const auto m = c.model();
  const double thr = c.successThreshold(m);
  std::map<double, int> hist;
  int good = 0;
  double sum = 0.0;
  const auto t0 = std::chrono::steady_clock::now();
  for (int s = 0; s < c.seeds; ++s) {
    const double v = evaluateJointPolicy(m, train(m, static_cast<std::uint64_t>(s)));
    hist[std::round(v * 100) / 100]++;
    good += v >= thr;
    sum += v;
  }
  const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("threshold %.4f  success %d/%d  mean %.4f  %.2fs/seed\n", thr, good, c.seeds, sum / c.seeds,
              sec / c.seeds);
  for (auto it = hist.rbegin(); it != hist.rend(); ++it) std::printf("  %10.2f  %d\n", it->first, it->second);
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"calibration sweeps"};
  app.require_subcommand(1);
  Common common;

  auto* tab = app.add_subcommand("tabular", "iql, distq, hysteretic, lenient");
  common.attach(tab);
  std::string tabAlgo = "iql";
  TabularConfig tc;
  double tabEps = 0.1;
  tab->add_option("--algo", tabAlgo);
  tab->add_option("--alpha", tc.alpha);
  tab->add_option("--beta", tc.beta);
  tab->add_option("--epsilon", tabEps);
  tab->add_flag("--markov", tc.markovKeys);

  auto* fac = app.add_subcommand("factor", "vdn, qmix, wqmix, qtran, qplex");
  common.attach(fac);
  std::string facAlgo = "vdn";
  FactorConfig fc;
  fac->add_option("--algo", facAlgo);
  fac->add_option("--lr", fc.lr);
  fac->add_option("--eps-start", fc.epsilon.start);
  fac->add_option("--eps-end", fc.epsilon.end);
  fac->add_option("--eps-steps", fc.epsilon.steps);
  fac->add_option("--batch", fc.batchEpisodes);
  fac->add_option("--hidden", fc.hidden);

  auto* pg = app.add_subcommand("pg", "policy-gradient family");
  common.attach(pg);
  std::string pgAlgo = "ippo", critic;
  PgConfig pc;
  pg->add_option("--algo", pgAlgo);
  pg->add_option("--critic", critic);
  pg->add_option("--actor-lr", pc.actorLr);
  pg->add_option("--critic-lr", pc.criticLr);
  pg->add_option("--entropy", pc.entropyCoef);
  pg->add_option("--clip", pc.clipEps);
  pg->add_option("--epochs", pc.epochs);
  pg->add_option("--batch", pc.batchEpisodes);
  pg->add_option("--hidden", pc.hidden);
  pg->add_option("--grad-clip", pc.gradClip);
  bool sgd = false;
  pg->add_flag("--sgd", sgd, "plain SGD instead of Adam");

  auto* drqn = app.add_subcommand("drqn", "idrqn and dec-hdrqn");
  common.attach(drqn);
  DrqnConfig dc;
  drqn->add_option("--lr", dc.lr);
  drqn->add_option("--beta", dc.beta);
  drqn->add_flag("--hysteretic", dc.hysteretic);
  drqn->add_option("--cert", dc.cert, "shared sampling seed (true/false)");
  drqn->add_option("--hidden", dc.hidden);
  drqn->add_option("--eps-steps", dc.epsilon.steps);
  drqn->add_option("--target-sync", dc.targetSync);
  drqn->add_option("--updates", dc.updatesPerEpisode);
  drqn->add_option("--capacity", dc.bufferCapacity);
  bool sequential = false;
  drqn->add_flag("--sequential", sequential, "train on whole sampled episodes");

  CLI11_PARSE(app, argc, argv);

  try {
    if (tab->parsed()) {
      tc.algo = tabularAlgoFromName(tabAlgo);
      tc.episodes = common.episodes;
      tc.epsilon = {tabEps, tabEps, 0};
      sweep(common, [&](const DecPomdpModel& m, std::uint64_t s) { return trainTabular(m, tc, s).greedyPolicy(m); });
    } else if (fac->parsed()) {
      fc.algo = factorAlgoFromName(facAlgo);
      fc.episodes = common.episodes;
      sweep(common, [&](const DecPomdpModel& m, std::uint64_t s) { return trainFactorized(m, fc, s).greedyPolicy(m); });
    } else if (drqn->parsed()) {
      dc.episodes = common.episodes;
      if (sequential) dc.replayMode = ReplayMode::Sequential;
      sweep(common, [&](const DecPomdpModel& m, std::uint64_t s) { return trainDrqn(m, dc, s).greedyPolicy(m); });
    } else {
      pc.algo = pgAlgoFromName(pgAlgo);
      if (!critic.empty()) pc.critic = criticKindFromName(critic);
      pc.episodes = common.episodes;
      pc.adam = !sgd;
      sweep(common, [&](const DecPomdpModel& m, std::uint64_t s) { return trainPolicyGradient(m, pc, s).greedyPolicy(m); });
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "ERROR: %s\n", e.what());
    return 1;
  }
  return 0;
}
