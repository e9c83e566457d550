#include "marl/dte_value.hpp"

#include <cmath>
#include <stdexcept>

namespace marl {

LocalHistory LocalTrajectory::prefix(int t) const {
  LocalHistory h;
  h.agent = agent;
  for (int k = 0; k < t; ++k) {
    h.entries.push_back({actions[k], observations[k]});
  }
  return h;
}

LocalTrajectory localTrajectory(const Episode& ep, int agent) {
  LocalTrajectory tr;
  tr.agent = agent;
  for (const auto& st : ep.steps) {
    tr.actions.push_back(st.actions[agent]);
    tr.observations.push_back(st.observations[agent]);
    tr.rewards.push_back(st.reward);
  }
  tr.terminated = !ep.steps.empty() && ep.steps.back().done;
  return tr;
}

void CertBuffer::push(std::int64_t episodeId, LocalTrajectory traj) {
  if (capacity_ == 0) {
    throw std::invalid_argument("CertBuffer: zero capacity");
  }
  if (traj.length() == 0) {
    throw std::invalid_argument("CertBuffer: empty trajectory");
  }
  if (items_.size() == capacity_) {
    items_.pop_front();
  }
  items_.emplace_back(episodeId, std::move(traj));
}

void checkCertAlignment(const std::vector<CertBuffer>& buffers) {
  if (buffers.empty()) {
    throw std::logic_error("CERT: no buffers");
  }
  const auto& ref = buffers[0];
  for (std::size_t i = 1; i < buffers.size(); ++i) {
    const auto& b = buffers[i];
    if (b.size() != ref.size()) {
      throw std::logic_error("CERT buffers misaligned: sizes differ");
    }
    for (std::size_t k = 0; k < b.size(); ++k) {
      if (b.episodeId(k) != ref.episodeId(k) ||
          b.trajectory(k).length() != ref.trajectory(k).length()) {
        throw std::logic_error("CERT buffers misaligned at slot " + std::to_string(k));
      }
    }
  }
}

CertIndex sampleIndex(const CertBuffer& buffer, Rng& rng) {
  if (buffer.empty()) {
    throw std::logic_error("replay buffer is empty");
  }
  CertIndex idx;
  idx.slot = static_cast<std::size_t>(rng.uniformInt(static_cast<int>(buffer.size())));
  idx.episodeId = buffer.episodeId(idx.slot);
  idx.t = rng.uniformInt(buffer.trajectory(idx.slot).length());
  return idx;
}

std::vector<CertIndex> certSample(const std::vector<CertBuffer>& buffers, Rng& rng) {
  checkCertAlignment(buffers);
  std::vector<CertIndex> out;
  Rng advanced = rng;
  for (std::size_t i = 0; i < buffers.size(); ++i) {
    Rng local = rng;
    out.push_back(sampleIndex(buffers[i], local));
    if (i == 0) {
      advanced = local;
    }
  }
  rng = advanced;
  return out;
}

ad::Var drqnLoss(ad::Graph& g, nn::RecurrentNet& net, nn::RecurrentNet& target,
                 const LocalTrajectory& traj, int t, double gamma, int nActions, int nObs,
                 double* delta) {
  if (t < 0 || t >= traj.length()) {
    throw std::out_of_range("drqnLoss: timestep out of range");
  }
  const auto inputs = nn::localInputs(traj.prefix(traj.length()), nActions, nObs);
  const std::vector<std::vector<double>> before(inputs.begin(), inputs.begin() + t);
  ad::Var q = net.forward(g, before);
  ad::Var qa = g.gather(q, traj.actions[t]);
  double y = traj.rewards[t];
  const bool last = t + 1 >= traj.length();
  if (!last && gamma != 0.0) {
    const std::vector<std::vector<double>> after(inputs.begin(), inputs.begin() + t + 1);
    const auto qn = target.evaluate(after);
    y += gamma * qn[argmaxLowest(qn)];
  }
  if (delta) {
    *delta = y - g.scalarValue(qa);
  }
  return g.square(g.sub(g.scalar(y), qa));
}

JointPolicy DrqnResult::greedyPolicy(const DecPomdpModel& model) const {
  JointPolicy jp;
  for (int i = 0; i < model.numAgents; ++i) {
    auto net = std::make_shared<nn::RecurrentNet>(nets[i]);
    const int nA = model.numActions[i];
    const int nO = model.numObservations[i];
    jp.push_back(std::make_shared<FunctionPolicy>(nA, [net, nA, nO](const LocalHistory& h) {
      return argmaxLowest(net->evaluate(nn::localInputs(h, nA, nO)));
    }));
  }
  return jp;
}

DrqnResult trainDrqn(const DecPomdpModel& model, const DrqnConfig& cfg, std::uint64_t seed,
                     const EpisodeHook& hook, bool recordUpdates) {
  if (cfg.hysteretic) {
    if (!(cfg.beta > 0.0 && cfg.beta <= cfg.lr)) {
      throw std::invalid_argument("trainDrqn: hysteresis needs 0 < beta <= lr");
    }
  }
  if (cfg.targetSync <= 0 || cfg.hidden <= 0) {
    throw std::invalid_argument("trainDrqn: targetSync and hidden must be positive");
  }
  const int n = model.numAgents;
  const double gamma = cfg.gamma >= 0.0 ? cfg.gamma : model.discount;
  const Rng root(seed);

  DrqnResult res;
  std::vector<ad::Adam> adams;
  std::vector<ad::Sgd> sgds;
  for (int i = 0; i < n; ++i) {
    Rng init = root.split(200 + i);
    res.nets.emplace_back("q" + std::to_string(i), nn::localInputDim(model, i), cfg.hidden,
                          model.numActions[i], init);
    adams.emplace_back(cfg.lr);
    sgds.emplace_back(cfg.lr);
  }
  res.targets = res.nets;

  Rng envRng = root.split(1);
  std::vector<Rng> exploreRngs;
  std::vector<Rng> sampleRngs;
  for (int i = 0; i < n; ++i) {
    exploreRngs.push_back(root.split(2 + i));
    sampleRngs.push_back(root.split(100 + i));
  }
  Rng certRng = root.split(100);
  std::vector<CertBuffer> buffers(n, CertBuffer(std::max<std::size_t>(1, cfg.bufferCapacity)));

  const GreedyFn greedy = [&]() { return EvalPolicy::of(model, res.greedyPolicy(model)); };
  ad::Graph g;

  auto gradientStep = [&](int i, const LocalTrajectory& traj, int t) {
    g.clear();
    double delta = 0.0;
    ad::Var loss = drqnLoss(g, res.nets[i], res.targets[i], traj, t, gamma, model.numActions[i],
                            model.numObservations[i], &delta);
    auto& ps = res.nets[i].params;
    ps.zeroGrad();
    g.backward(loss);
    if (cfg.gradClip > 0.0) {
      ad::clipGradNorm(ps, cfg.gradClip);
    }
    const double lr = (cfg.hysteretic && delta < 0.0) ? cfg.beta : cfg.lr;
    if (cfg.adam) {
      adams[i].step(ps, lr);
    } else {
      ad::Sgd(lr).step(ps);
    }
    if (recordUpdates) {
      res.updates.push_back({i, delta, lr});
    }
    return g.scalarValue(loss);
  };

  for (int ep = 0; ep < cfg.episodes; ++ep) {
    const double eps = cfg.epsilon.at(ep);
    Controller ctl = [&](const JointHistory& jh, int) {
      std::vector<int> a(n);
      for (int i = 0; i < n; ++i) {
        const auto q = res.nets[i].evaluate(
            nn::localInputs(jh.perAgent[i], model.numActions[i], model.numObservations[i]));
        a[i] = epsilonGreedy(q, eps, exploreRngs[i]);
      }
      return a;
    };
    const Episode episode = runEpisode(model, ctl, envRng);

    double lossSum = 0.0;
    int lossCount = 0;
    if (!cfg.useReplay) {
      for (int i = 0; i < n; ++i) {
        const auto traj = localTrajectory(episode, i);
        for (int t = 0; t < traj.length(); ++t) {
          lossSum += gradientStep(i, traj, t);
          ++lossCount;
        }
      }
    } else {
      for (int i = 0; i < n; ++i) {
        buffers[i].push(ep, localTrajectory(episode, i));
      }
      for (int u = 0; u < cfg.updatesPerEpisode; ++u) {
        std::vector<CertIndex> idx;
        if (cfg.cert) {
          idx = certSample(buffers, certRng);
        } else {
          for (int i = 0; i < n; ++i) {
            idx.push_back(sampleIndex(buffers[i], sampleRngs[i]));
          }
        }
        for (int i = 0; i < n; ++i) {
          const auto& traj = buffers[i].trajectory(idx[i].slot);
          if (cfg.replayMode == ReplayMode::Sequential) {
            for (int t = 0; t < traj.length(); ++t) {
              lossSum += gradientStep(i, traj, t);
              ++lossCount;
            }
          } else {
            lossSum += gradientStep(i, traj, idx[i].t);
            ++lossCount;
          }
        }
      }
    }
    if ((ep + 1) % cfg.targetSync == 0) {
      res.targets = res.nets;
    }
    if (hook) {
      EpisodeStats stats;
      stats.episode = ep;
      stats.trainReturn = episode.totalReward(gamma);
      stats.loss = lossCount ? lossSum / lossCount : 0.0;
      stats.explore = eps;
      hook(stats, greedy);
    }
  }
  return res;
}

} // namespace marl
