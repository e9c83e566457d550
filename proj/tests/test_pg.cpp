#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "marl/envs.hpp"
#include "marl/oracle.hpp"
#include "marl/pg.hpp"

using namespace marl;

namespace {

LocalTrajectory oneStep(int agent, int action, double reward) {
  LocalTrajectory tr;
  tr.agent = agent;
  tr.actions = {action};
  tr.observations = {0};
  tr.rewards = {reward};
  return tr;
}

// Random-action Dec-Tiger episode for gradient bookkeeping tests.
Episode randomEpisode(const DecPomdpModel& m, std::uint64_t seed) {
  Rng act(seed + 1);
  Rng env(seed);
  return runEpisode(
      m,
      [&](const JointHistory&, int) {
        std::vector<int> a(m.numAgents);
        for (int i = 0; i < m.numAgents; ++i) a[i] = act.uniformInt(m.numActions[i]);
        return a;
      },
      env);
}

std::vector<double> surrogateGrad(nn::RecurrentNet& actor, const LocalTrajectory& tr,
                                  const ReinforceEstimator& est, int horizon, int nA, int nO) {
  Graph g;
  actor.params.zeroGrad();
  g.backward(reinforceSurrogate(g, actor, tr, est, horizon, nA, nO));
  return actor.params.grads();
}

} // namespace

TEST(Coma, Examples) {
  auto q = [](const std::vector<int>& ja) { return ja[0] == 0 ? 4.0 : 2.0; };
  const std::vector<double> uniform{0.5, 0.5};
  EXPECT_DOUBLE_EQ(comaAdvantage(q, {0, 1}, uniform, 0), 1.0);
  const std::vector<double> point{1.0, 0.0};
  EXPECT_DOUBLE_EQ(comaAdvantage(q, {0, 1}, point, 0), 0.0);
  EXPECT_THROW(comaAdvantage(q, {0, 1}, std::vector<double>{}, 0), std::invalid_argument);
  EXPECT_THROW(comaAdvantage(q, {0, 1}, uniform, 2), std::out_of_range);
}

TEST(Coma, ZeroExpectation) {
  Rng rng(17);
  for (int k = 0; k < 500; ++k) {
    std::vector<double> table(9);
    for (double& x : table) x = rng.normal(0.0, 5.0);
    auto q = [&](const std::vector<int>& ja) { return table[ja[0] * 3 + ja[1]]; };
    std::vector<double> pi(3);
    for (double& p : pi) p = rng.uniform() + 1e-3;
    const double z = std::accumulate(pi.begin(), pi.end(), 0.0);
    for (double& p : pi) p /= z;
    const int agent = k % 2;
    const int other = rng.uniformInt(3);
    double total = 0.0;
    for (int a = 0; a < 3; ++a) {
      std::vector<int> ja(2);
      ja[agent] = a;
      ja[1 - agent] = other;
      total += pi[a] * comaAdvantage(q, ja, pi, agent);
    }
    EXPECT_NEAR(total, 0.0, 1e-12);
  }
}

TEST(Ppo, ClipArithmetic) {
  EXPECT_DOUBLE_EQ(ppoClipObjective(1.0, 0.7, 0.2), 0.7);
  EXPECT_DOUBLE_EQ(ppoClipObjective(2.0, 1.0, 0.2), 1.2);
  EXPECT_DOUBLE_EQ(ppoClipObjective(2.0, -1.0, 0.2), -2.0);
  for (double r = 0.8; r <= 1.2; r += 0.05) {
    EXPECT_DOUBLE_EQ(ppoClipObjective(r, 1.5, 0.2), r * 1.5);
    EXPECT_DOUBLE_EQ(ppoClipObjective(r, -1.5, 0.2), r * -1.5);
  }
}

TEST(Ppo, DifferentiableFormMatchesScalar) {
  Rng rng(2);
  for (int k = 0; k < 100; ++k) {
    const double logOld = std::log(0.05 + 0.9 * rng.uniform());
    const double logNew = std::log(0.05 + 0.9 * rng.uniform());
    const double adv = rng.normal();
    Graph g;
    Var lp = g.constant(std::vector<double>{logNew});
    const double viaGraph = g.scalarValue(ppoClipObjective(g, lp, logOld, adv, 0.2));
    EXPECT_NEAR(viaGraph, ppoClipObjective(std::exp(logNew - logOld), adv, 0.2), 1e-12);
  }
  Graph g;
  EXPECT_THROW(ppoClipObjective(g, g.scalar(0.0), -INFINITY, 1.0, 0.2), std::invalid_argument);
}

TEST(Ppo, ValueLoss) {
  auto loss = [](double v, double vOld, double target, bool clip) {
    Graph g;
    return g.scalarValue(ppoValueLoss(g, g.scalar(v), vOld, target, 0.2, clip));
  };
  EXPECT_DOUBLE_EQ(loss(3.0, 1.0, 0.0, false), 9.0);
  EXPECT_DOUBLE_EQ(loss(3.0, 1.0, 0.0, true), 9.0);
  EXPECT_NEAR(loss(2.9, 1.0, 3.0, true), 1.8 * 1.8, 1e-12);
  EXPECT_NEAR(loss(2.9, 1.0, 3.0, false), 0.01, 1e-12);
}

TEST(Ppo, BatchLossesAreMeans) {
  Graph g;
  std::vector<PpoSample> batch;
  batch.push_back({g.scalar(std::log(0.5)), std::log(0.5), 2.0, g.scalar(1.0), 1.0, 3.0});
  batch.push_back({g.scalar(std::log(0.25)), std::log(0.5), 4.0, g.scalar(0.0), 0.0, 1.0});
  EXPECT_NEAR(g.scalarValue(mappoActorLoss(g, batch, 0.2)), -(2.0 + 0.5 * 4.0) / 2.0, 1e-12);
  EXPECT_NEAR(g.scalarValue(mappoCriticLoss(g, batch, 0.2, false)), (4.0 + 1.0) / 2.0, 1e-12);
}

TEST(Reinforce, ZeroReturnLeavesActorUnchanged) {
  Rng rng(1);
  nn::RecurrentNet actor("a", 4, 6, 3, rng);
  const auto before = actor.params.values();
  ReinforceEstimator est;
  reinforceUpdate(actor, oneStep(0, 2, 0.0), 0.5, est, 1, 3, 1);
  EXPECT_EQ(actor.params.values(), before);
}

TEST(Reinforce, SignOfReturnOnClimb) {
  const auto m = makeClimbGame();
  const auto pay = defaultClimbMatrix();
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      Rng rng(40 + a * 3 + b);
      nn::RecurrentNet actor("a", 4, 6, 3, rng);
      const double before = actorProbs(actor, LocalHistory{}, 3, 1)[a];
      ReinforceEstimator est;
      reinforceUpdate(actor, oneStep(0, a, pay[a][b]), 0.01, est, m.horizon, 3, 1);
      const double after = actorProbs(actor, LocalHistory{}, 3, 1)[a];
      if (pay[a][b] > 0.0) {
        EXPECT_GT(after, before);
      } else if (pay[a][b] < 0.0) {
        EXPECT_LT(after, before);
      } else {
        EXPECT_EQ(after, before);
      }
    }
  }
}

TEST(Reinforce, IncompleteEpisodeThrows) {
  ReinforceEstimator est;
  EXPECT_THROW(est.coefficients(oneStep(0, 0, 1.0), 2), std::invalid_argument);
}

TEST(Reinforce, JointGradientDecomposes) {
  const auto m = makeDecTiger(3);
  Rng rng(5);
  std::vector<nn::RecurrentNet> actors;
  for (int i = 0; i < 2; ++i) actors.emplace_back("a" + std::to_string(i), 5, 8, 3, rng);
  ReinforceEstimator est;
  est.gamma = 0.9;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto ep = randomEpisode(m, seed);
    Graph g;
    for (auto& a : actors) a.params.zeroGrad();
    g.backward(jointReinforceSurrogate(g, actors, m, ep, est));
    for (int i = 0; i < 2; ++i) {
      const auto joint = actors[i].params.grads();
      auto copy = actors[i];
      const auto local = surrogateGrad(copy, localTrajectory(ep, i), est, m.horizon, 3, 2);
      ASSERT_EQ(joint.size(), local.size());
      for (std::size_t k = 0; k < joint.size(); ++k) {
        EXPECT_NEAR(joint[k], local[k], 1e-12 * std::max(1.0, std::abs(local[k])));
      }
    }
  }
}

TEST(Baseline, ZeroBaselineIsIdentity) {
  Rng rng(6);
  nn::RecurrentNet actor("a", 4, 6, 3, rng);
  ReinforceEstimator est;
  const auto tr = oneStep(0, 1, 3.5);
  auto withZero = addBaseline(est, [](const LocalHistory&, int) { return 0.0; });
  EXPECT_EQ(surrogateGrad(actor, tr, est, 1, 3, 1), surrogateGrad(actor, tr, withZero, 1, 3, 1));
}

TEST(Baseline, ExactExpectationInvariance) {
  const auto pay = defaultClimbMatrix();
  Rng rng(7);
  nn::RecurrentNet actor("a", 4, 6, 3, rng);
  const auto pi = actorProbs(actor, LocalHistory{}, 3, 1);
  // Partner fixed at action 1; G(a) is the payoff.
  auto expected = [&](double b) {
    std::vector<double> total(actor.params.size(), 0.0);
    ReinforceEstimator est = addBaseline({}, [b](const LocalHistory&, int) { return b; });
    for (int a = 0; a < 3; ++a) {
      const auto grad = surrogateGrad(actor, oneStep(0, a, pay[a][1]), est, 1, 3, 1);
      for (std::size_t k = 0; k < total.size(); ++k) total[k] += pi[a] * grad[k];
    }
    return total;
  };
  const auto ref = expected(0.0);
  for (double b : {-20.0, 3.0, 11.0}) {
    const auto got = expected(b);
    for (std::size_t k = 0; k < ref.size(); ++k) {
      EXPECT_NEAR(got[k], ref[k], 1e-12);
    }
  }
}

TEST(Baseline, MeanReturnReducesVariance) {
  const auto pay = defaultClimbMatrix();
  Rng rng(8);
  nn::RecurrentNet a0("a0", 4, 6, 3, rng);
  const auto pi = actorProbs(a0, LocalHistory{}, 3, 1);
  double meanReturn = 0.0;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) meanReturn += pi[a] * pi[b] * pay[a][b];

  // Per-sample gradient depends only on (own action, return).
  auto sampleVariance = [&](double baseline) {
    Rng draw(99);
    ReinforceEstimator est =
        addBaseline({}, [baseline](const LocalHistory&, int) { return baseline; });
    std::vector<std::vector<double>> grads;
    const int n = 10000;
    std::vector<double> mean(a0.params.size(), 0.0);
    std::vector<std::vector<double>> samples;
    for (int k = 0; k < n; ++k) {
      const int a = draw.categorical(pi);
      const int b = draw.categorical(pi);
      samples.push_back(surrogateGrad(a0, oneStep(0, a, pay[a][b]), est, 1, 3, 1));
      for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += samples.back()[j] / n;
    }
    double var = 0.0;
    for (const auto& s : samples)
      for (std::size_t j = 0; j < mean.size(); ++j) var += (s[j] - mean[j]) * (s[j] - mean[j]);
    return var / n;
  };
  EXPECT_LE(sampleVariance(meanReturn), sampleVariance(0.0));
}

TEST(Iac, ZeroTdErrorChangesNothing) {
  Rng rng(9);
  nn::RecurrentNet actor("a", 5, 6, 3, rng);
  nn::RecurrentNet critic("c", 5, 6, 1, rng);
  LocalTrajectory tr = oneStep(0, 1, 0.0);
  tr.rewards[0] = critic.evaluate({})[0];
  const auto aBefore = actor.params.values();
  const auto cBefore = critic.params.values();
  const double delta = iacStep(actor, critic, CriticKind::Local, tr, 0, 0.1, 0.1, 0.9, 3, 2);
  EXPECT_EQ(delta, 0.0);
  EXPECT_EQ(actor.params.values(), aBefore);
  EXPECT_EQ(critic.params.values(), cBefore);
}

TEST(Iac, ZeroDiscountRegressesToReward) {
  Rng rng(10);
  nn::RecurrentNet actor("a", 5, 6, 3, rng);
  nn::RecurrentNet critic("c", 5, 6, 1, rng);
  LocalTrajectory tr;
  tr.actions = {0, 1};
  tr.observations = {1, 0};
  tr.rewards = {2.0, -1.0};
  for (int k = 0; k < 2000; ++k) {
    iacStep(actor, critic, CriticKind::Local, tr, 0, 0.0, 0.05, 0.0, 3, 2);
  }
  EXPECT_NEAR(critic.evaluate({})[0], 2.0, 1e-3);
}

TEST(Iac, RejectsNonLocalCritic) {
  Rng rng(1);
  nn::RecurrentNet actor("a", 5, 6, 3, rng);
  nn::RecurrentNet critic("c", 5, 6, 1, rng);
  EXPECT_THROW(iacStep(actor, critic, CriticKind::Joint, oneStep(0, 0, 1.0), 0, 0.1, 0.1, 1.0, 3, 2),
               std::invalid_argument);
}

TEST(Iac, SemiGradientCritic) {
  Rng rng(11);
  nn::RecurrentNet actor("a", 5, 6, 3, rng);
  nn::RecurrentNet critic("c", 5, 6, 1, rng);
  LocalTrajectory tr;
  tr.actions = {0, 2, 1};
  tr.observations = {1, 0, 0};
  tr.rewards = {0.5, -1.0, 3.0};
  for (int t = 0; t < 3; ++t) {
    Graph g;
    Var cLoss;
    critic.params.zeroGrad();
    const double delta = iacTerms(g, actor, critic, tr, t, 0.9, true, 3, 2, nullptr, &cLoss);
    g.backward(cLoss);
    const auto got = critic.params.grads();

    Graph g2;
    critic.params.zeroGrad();
    g2.backward(critic.forward(g2, nn::localInputs(tr.prefix(t), 3, 2)));
    const auto dv = critic.params.grads();
    for (std::size_t k = 0; k < got.size(); ++k) {
      EXPECT_NEAR(got[k], -delta * dv[k], 1e-12);
    }
  }
}

TEST(Maddpg, QuadraticBowlPushesTowardZero) {
  Rng rng(12);
  MaddpgNets nets(2, 8, rng);
  const std::vector<std::vector<double>> inputs{{0.0, 0.7}};
  for (int agent = 0; agent < 2; ++agent) {
    Graph g;
    Var a = nets.action(g, agent, inputs);
    const double a0 = g.scalarValue(a);
    nets.actors[agent].params.zeroGrad();
    // Ascending Q = -a^2 is descending a^2.
    g.backward(g.square(a));
    ad::Sgd(0.05).step(nets.actors[agent].params);
    Graph g2;
    const double a1 = g2.scalarValue(nets.action(g2, agent, inputs));
    EXPECT_LT(std::abs(a1), std::abs(a0));
  }
}

TEST(Maddpg, ZeroDiscountCriticLoss) {
  Rendezvous1D env(3);
  Rng rng(13), envRng(1), noiseRng(2);
  MaddpgNets nets(2, 8, rng);
  MaddpgNets target = nets;
  const auto ep = rolloutMaddpg(env, nets, 0.3, envRng, noiseRng);
  ASSERT_EQ(ep.length(), 3);
  for (int t = 0; t < 3; ++t) {
    Graph g, gt;
    const double loss = g.scalarValue(maddpgCriticLoss(g, gt, nets, target, ep, t, 0.0, env.horizon()));
    Graph gq;
    const std::vector<double> a{ep.actions[t][0], ep.actions[t][1]};
    const double q = gq.scalarValue(nets.q(gq, ep.jointInputs(t), gq.constant(a)));
    EXPECT_NEAR(loss, (ep.rewards[t] - q) * (ep.rewards[t] - q), 1e-12);
  }
}

TEST(Maddpg, ActorObjectiveGradCheck) {
  Rendezvous1D env(3);
  Rng rng(14), envRng(3), noiseRng(4);
  MaddpgNets nets(2, 6, rng);
  const auto ep = rolloutMaddpg(env, nets, 0.3, envRng, noiseRng);
  for (int agent = 0; agent < 2; ++agent) {
    for (int t = 0; t < ep.length(); ++t) {
      const auto res = ad::gradCheck(nets.actors[agent].params, [&](Graph& g) {
        return maddpgActorObjective(g, nets, ep, t, agent);
      });
      EXPECT_LT(res.maxRelError, 1e-4);
    }
  }
}

TEST(Maddpg, ActionsStayInBounds) {
  Rendezvous1D env(4);
  Rng rng(15), envRng(5), noiseRng(6);
  MaddpgNets nets(2, 6, rng);
  const auto ep = rolloutMaddpg(env, nets, 2.0, envRng, noiseRng);
  for (const auto& a : ep.actions) {
    for (double x : a) {
      EXPECT_GE(x, -1.0);
      EXPECT_LE(x, 1.0);
    }
  }
}

TEST(Ippo, SharedNetIdenticalGradientsForIdenticalHistories) {
  Rng rng(16);
  nn::RecurrentNet actor("shared", 5, 6, 3, rng);
  LocalTrajectory t0;
  t0.actions = {0, 2};
  t0.observations = {1, 1};
  t0.rewards = {0.0, 1.0};
  LocalTrajectory t1 = t0;
  t1.agent = 1;
  ReinforceEstimator est;
  EXPECT_EQ(surrogateGrad(actor, t0, est, 2, 3, 2), surrogateGrad(actor, t1, est, 2, 3, 2));
}

TEST(PgTraining, SoftmaxStaysNormalized) {
  const auto m = makeDecTiger(2);
  for (auto algo : {PgAlgo::Ippo, PgAlgo::Mappo, PgAlgo::Coma, PgAlgo::Reinforce}) {
    PgConfig cfg;
    cfg.algo = algo;
    cfg.episodes = 30;
    const auto res = trainPolicyGradient(m, cfg, 3);
    auto actor = res.actors[0];
    LocalHistory h;
    for (int t = 0; t < 2; ++t) {
      const auto p = actorProbs(actor, h, 3, 2);
      EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
      h = appendHistory(m, h, 0, t % 2);
    }
  }
}

TEST(PgTraining, UnsharedIppoHasSeparateNets) {
  const auto m = makeDecTiger(2);
  PgConfig cfg;
  cfg.algo = PgAlgo::Ippo;
  cfg.episodes = 20;
  cfg.shareParameters = true;
  const auto shared = trainPolicyGradient(m, cfg, 4);
  EXPECT_EQ(shared.actors[0].params.values(), shared.actors[1].params.values());
  cfg.shareParameters = false;
  const auto separate = trainPolicyGradient(m, cfg, 4);
  EXPECT_NE(separate.actors[0].params.values(), separate.actors[1].params.values());
}

TEST(PgTraining, CriticKindValidation) {
  const auto m = makeDecTiger(2);
  PgConfig cfg;
  cfg.episodes = 1;
  cfg.algo = PgAlgo::Iac;
  cfg.critic = CriticKind::Joint;
  EXPECT_THROW(trainPolicyGradient(m, cfg, 1), std::invalid_argument);
  cfg.algo = PgAlgo::Ia2cc;
  cfg.critic = CriticKind::Local;
  EXPECT_THROW(trainPolicyGradient(m, cfg, 1), std::invalid_argument);
}

TEST(PgTraining, Names) {
  EXPECT_EQ(pgAlgoFromName("ia2cc"), PgAlgo::Ia2cc);
  EXPECT_EQ(criticKindFromName("history-state"), CriticKind::HistoryState);
  EXPECT_EQ(criticKindName(CriticKind::State), "state");
  EXPECT_THROW(pgAlgoFromName("facmac"), std::invalid_argument);
  EXPECT_THROW(criticKindFromName("attention"), std::invalid_argument);
}

TEST(PgTraining, ZeroLearningRateKeepsActors) {
  const auto m = makeDecTiger(2);
  PgConfig cfg;
  cfg.algo = PgAlgo::Ia2cc;
  cfg.episodes = 0;
  const auto a = trainPolicyGradient(m, cfg, 2);
  cfg.episodes = 20;
  cfg.actorLr = 0.0;
  const auto b = trainPolicyGradient(m, cfg, 2);
  EXPECT_EQ(a.actors[0].params.values(), b.actors[0].params.values());
}
