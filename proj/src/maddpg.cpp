#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

#include "marl/pg.hpp"

namespace marl {

namespace {
constexpr int kAgents = Rendezvous1D::numAgents();
constexpr int kLocalDim = 2;  // (previous own action, observation)
} // namespace

MaddpgNets::MaddpgNets(int numAgents, int hidden, Rng& rng) {
  if (numAgents <= 0) {
    throw std::invalid_argument("MaddpgNets: need at least one agent");
  }
  for (int i = 0; i < numAgents; ++i) {
    actors.emplace_back("mu" + std::to_string(i), kLocalDim, hidden, 1, rng);
  }
  critic = nn::RecurrentNet("q", kLocalDim * numAgents, hidden, 1, rng, numAgents, hidden);
}

Var MaddpgNets::action(Graph& g, int agent, const std::vector<std::vector<double>>& localInputs) {
  return g.tanh(actors.at(agent).forward(g, localInputs));
}

Var MaddpgNets::q(Graph& g, const std::vector<std::vector<double>>& jointInputs, Var actions) {
  if (actions.size() != numAgents()) {
    throw std::invalid_argument("MaddpgNets::q: one action per agent required");
  }
  const auto hs = critic.unroll(g, jointInputs);
  return critic.head(g, hs.back(), actions);
}

std::vector<std::vector<double>> ContinuousEpisode::localInputs(int agent, int t) const {
  if (t < 0 || t >= static_cast<int>(obs.size())) {
    throw std::out_of_range("ContinuousEpisode: step out of range");
  }
  std::vector<std::vector<double>> in;
  for (int k = 0; k <= t; ++k) {
    in.push_back({k == 0 ? 0.0 : actions[k - 1][agent], obs[k][agent]});
  }
  return in;
}

std::vector<std::vector<double>> ContinuousEpisode::jointInputs(int t) const {
  std::vector<std::vector<double>> in;
  for (int k = 0; k <= t; ++k) {
    std::vector<double> row;
    for (int i = 0; i < kAgents; ++i) {
      row.push_back(k == 0 ? 0.0 : actions[k - 1][i]);
      row.push_back(obs[k][i]);
    }
    in.push_back(std::move(row));
  }
  return in;
}

Var maddpgActorObjective(Graph& g, MaddpgNets& nets, const ContinuousEpisode& ep, int t, int agent) {
  std::vector<Var> acts;
  for (int j = 0; j < nets.numAgents(); ++j) {
    acts.push_back(j == agent ? nets.action(g, j, ep.localInputs(j, t)) : g.scalar(ep.actions[t][j]));
  }
  return nets.q(g, ep.jointInputs(t), g.concat(acts));
}

Var maddpgCriticLoss(Graph& g, Graph& gt, MaddpgNets& nets, MaddpgNets& target, const ContinuousEpisode& ep,
                     int t, double gamma, int horizon) {
  double y = ep.rewards.at(t);
  if (t + 1 < horizon && t + 1 < static_cast<int>(ep.obs.size())) {
    std::vector<Var> next;
    for (int j = 0; j < target.numAgents(); ++j) {
      next.push_back(target.action(gt, j, ep.localInputs(j, t + 1)));
    }
    y += gamma * gt.scalarValue(target.q(gt, ep.jointInputs(t + 1), gt.concat(next)));
  }
  const std::vector<double> a(ep.actions[t].begin(), ep.actions[t].end());
  Var q = nets.q(g, ep.jointInputs(t), g.constant(a));
  return g.square(g.addScalar(q, -y));
}

ContinuousEpisode rolloutMaddpg(const Rendezvous1D& env, MaddpgNets& nets, double noiseSigma, Rng& envRng,
                                Rng& noiseRng) {
  if (nets.numAgents() != kAgents) {
    throw std::invalid_argument("rolloutMaddpg: agent count mismatch");
  }
  ContinuousEpisode ep;
  auto s = env.reset(envRng);
  ep.obs.push_back(env.observe(s, envRng));
  Graph g;
  for (int t = 0; t < env.horizon(); ++t) {
    std::array<double, 2> a{};
    for (int i = 0; i < kAgents; ++i) {
      g.clear();
      double mu = g.scalarValue(nets.action(g, i, ep.localInputs(i, t)));
      if (noiseSigma > 0.0) {
        mu += noiseRng.normal(0.0, noiseSigma);
      }
      a[i] = std::clamp(mu, -1.0, 1.0);
    }
    const auto r = env.step(s, a, envRng);
    ep.actions.push_back(a);
    ep.rewards.push_back(r.reward);
    ep.obs.push_back(r.obs);
    s = r.next;
  }
  return ep;
}

double MaddpgResult::evaluate(const Rendezvous1D& env, int episodes, std::uint64_t seed, double gamma) const {
  if (episodes <= 0) {
    throw std::invalid_argument("evaluate: episodes must be positive");
  }
  MaddpgNets copy = nets;
  const Rng root(seed);
  double total = 0.0;
  for (int k = 0; k < episodes; ++k) {
    Rng envRng = root.split(1000 + k);
    Rng noise = root.split(0);
    const auto ep = rolloutMaddpg(env, copy, 0.0, envRng, noise);
    double G = 0.0;
    for (int t = ep.length() - 1; t >= 0; --t) {
      G = ep.rewards[t] + gamma * G;
    }
    total += G;
  }
  return total / episodes;
}

namespace {

void softUpdate(ad::ParamStore& target, const ad::ParamStore& online, double tau) {
  auto& tv = target.values();
  const auto& ov = online.values();
  for (std::size_t k = 0; k < tv.size(); ++k) {
    tv[k] += tau * (ov[k] - tv[k]);
  }
}

} // namespace

MaddpgResult trainMaddpg(const Rendezvous1D& env, const MaddpgConfig& cfg, std::uint64_t seed,
                         const std::function<void(const EpisodeStats&, double)>& hook, int evalEvery,
                         int evalEpisodes) {
  if (!(cfg.tau > 0.0 && cfg.tau <= 1.0)) {
    throw std::invalid_argument("maddpg: tau must lie in (0, 1]");
  }
  if (cfg.batchEpisodes <= 0 || cfg.bufferCapacity <= 0) {
    throw std::invalid_argument("maddpg: batch and buffer sizes must be positive");
  }
  const Rng root(seed);
  Rng init = root.split(200);
  MaddpgResult result{MaddpgNets(kAgents, cfg.hidden, init)};
  MaddpgNets& nets = result.nets;
  MaddpgNets target = nets;

  ad::Adam criticOpt(cfg.criticLr);
  std::vector<ad::Adam> actorOpts(kAgents, ad::Adam(cfg.actorLr));

  Rng envRng = root.split(1);
  Rng noiseRng = root.split(2);
  Rng replayRng = root.split(100);
  std::deque<ContinuousEpisode> replay;
  Graph g, gt;

  for (int ep = 0; ep < cfg.episodes; ++ep) {
    auto episode = rolloutMaddpg(env, nets, cfg.noiseSigma, envRng, noiseRng);
    double trainReturn = 0.0;
    for (int t = episode.length() - 1; t >= 0; --t) {
      trainReturn = episode.rewards[t] + cfg.gamma * trainReturn;
    }
    if (static_cast<int>(replay.size()) == cfg.bufferCapacity) {
      replay.pop_front();
    }
    replay.push_back(std::move(episode));

    std::vector<const ContinuousEpisode*> batch;
    int samples = 0;
    for (int b = 0; b < cfg.batchEpisodes; ++b) {
      batch.push_back(&replay[replayRng.uniformInt(static_cast<int>(replay.size()))]);
      samples += batch.back()->length();
    }

    // critic: off-policy regression onto target-actor bootstraps
    nets.critic.params.zeroGrad();
    double lossSum = 0.0;
    for (const auto* e : batch) {
      g.clear();
      std::vector<Var> terms;
      for (int t = 0; t < e->length(); ++t) {
        gt.clear();
        terms.push_back(maddpgCriticLoss(g, gt, nets, target, *e, t, cfg.gamma, env.horizon()));
      }
      Var loss = g.scale(g.sum(g.concat(terms)), 1.0 / samples);
      lossSum += g.scalarValue(loss);
      g.backward(loss);
    }
    if (cfg.gradClip > 0.0) ad::clipGradNorm(nets.critic.params, cfg.gradClip);
    criticOpt.step(nets.critic.params);

    // actors: ascend Q through agent i's own action input only
    for (auto& a : nets.actors) a.params.zeroGrad();
    for (const auto* e : batch) {
      g.clear();
      std::vector<Var> terms;
      for (int t = 0; t < e->length(); ++t) {
        for (int i = 0; i < kAgents; ++i) {
          terms.push_back(maddpgActorObjective(g, nets, *e, t, i));
        }
      }
      g.backward(g.scale(g.sum(g.concat(terms)), -1.0 / samples));
    }
    nets.critic.params.zeroGrad();
    for (int i = 0; i < kAgents; ++i) {
      if (cfg.gradClip > 0.0) ad::clipGradNorm(nets.actors[i].params, cfg.gradClip);
      actorOpts[i].step(nets.actors[i].params);
    }

    softUpdate(target.critic.params, nets.critic.params, cfg.tau);
    for (int i = 0; i < kAgents; ++i) {
      softUpdate(target.actors[i].params, nets.actors[i].params, cfg.tau);
    }

    if (hook) {
      double evalReturn = std::nan("");
      if (evalEvery > 0 && (ep + 1) % evalEvery == 0) {
        evalReturn = result.evaluate(env, evalEpisodes, seed ^ 0x5eedULL, cfg.gamma);
      }
      hook({ep, trainReturn, lossSum, cfg.noiseSigma}, evalReturn);
    }
  }
  return result;
}

} // namespace marl
