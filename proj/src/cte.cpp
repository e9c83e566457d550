#include "marl/cte.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

#include "marl/oracle.hpp"

namespace marl {

HistoryKey mmdpKey(int t, int s) { return {t, s}; }

double mmdpQLearningUpdate(JointQTable& Q, const HistoryKey& s, int ja, double r,
                           const HistoryKey* next, double alpha, double gamma) {
  return iqlUpdate(Q, s, ja, r, next, alpha, gamma);
}

double mpomdpQLearningUpdate(JointQTable& Q, const JointHistory& jh, int ja, double r,
                             const JointHistory* next, double alpha, double gamma) {
  const auto key = jointHistoryKey(jh);
  if (next) {
    const auto nk = jointHistoryKey(*next);
    return iqlUpdate(Q, key, ja, r, &nk, alpha, gamma);
  }
  return iqlUpdate(Q, key, ja, r, nullptr, alpha, gamma);
}

ValueIterationResult valueIteration(const DecPomdpModel& model) {
  if (!model.fullyObservable) {
    throw std::invalid_argument("valueIteration: model is not fully observable");
  }
  const int H = model.horizon;
  const int nS = model.numStates;
  const int nJA = model.numJointActions();
  ValueIterationResult res;
  res.V.assign(H + 1, std::vector<double>(nS, 0.0));
  res.Q.assign(H, std::vector<std::vector<double>>(nS, std::vector<double>(nJA, 0.0)));
  res.policy.assign(H, std::vector<int>(nS, 0));
  for (int t = H - 1; t >= 0; --t) {
    for (int s = 0; s < nS; ++s) {
      auto& q = res.Q[t][s];
      for (int ja = 0; ja < nJA; ++ja) {
        double cont = 0.0;
        for (int s2 = 0; s2 < nS; ++s2) {
          const double p = model.trans(s, ja, s2);
          if (p > 0.0 && !(model.terminal.size() && model.terminal[s2])) {
            cont += p * res.V[t + 1][s2];
          }
        }
        q[ja] = model.reward(s, ja) + model.discount * cont;
      }
      res.policy[t][s] = argmaxLowest(q);
      res.V[t][s] = q[res.policy[t][s]];
    }
  }
  for (int s = 0; s < nS; ++s) {
    res.initialValue += model.initialBelief[s] * res.V[0][s];
  }
  return res;
}

std::vector<std::vector<bool>> reachableStates(const DecPomdpModel& model) {
  const int nS = model.numStates;
  const int nJA = model.numJointActions();
  std::vector<std::vector<bool>> reach(model.horizon, std::vector<bool>(nS, false));
  for (int s = 0; s < nS; ++s) {
    reach[0][s] = model.initialBelief[s] > 0.0;
  }
  for (int t = 0; t + 1 < model.horizon; ++t) {
    for (int s = 0; s < nS; ++s) {
      if (!reach[t][s]) {
        continue;
      }
      for (int ja = 0; ja < nJA; ++ja) {
        for (int s2 = 0; s2 < nS; ++s2) {
          if (model.trans(s, ja, s2) > 0.0 && !(model.terminal.size() && model.terminal[s2])) {
            reach[t + 1][s2] = true;
          }
        }
      }
    }
  }
  return reach;
}

std::vector<MmdpPolicy> decentralizeMmdpPolicy(const DecPomdpModel& model, const MmdpPolicy& joint) {
  std::vector<MmdpPolicy> out(model.numAgents, MmdpPolicy(joint.size()));
  for (std::size_t t = 0; t < joint.size(); ++t) {
    for (int i = 0; i < model.numAgents; ++i) {
      out[i][t].resize(joint[t].size());
    }
    for (std::size_t s = 0; s < joint[t].size(); ++s) {
      const auto a = model.splitJointAction(joint[t][s]);
      for (int i = 0; i < model.numAgents; ++i) {
        out[i][t][s] = a[i];
      }
    }
  }
  return out;
}

MmdpPolicy recomposeMmdpPolicy(const DecPomdpModel& model, const std::vector<MmdpPolicy>& perAgent) {
  if (static_cast<int>(perAgent.size()) != model.numAgents) {
    throw std::invalid_argument("recomposeMmdpPolicy: agent count mismatch");
  }
  MmdpPolicy joint(perAgent[0].size());
  std::vector<int> a(model.numAgents);
  for (std::size_t t = 0; t < joint.size(); ++t) {
    joint[t].resize(perAgent[0][t].size());
    for (std::size_t s = 0; s < joint[t].size(); ++s) {
      for (int i = 0; i < model.numAgents; ++i) {
        a[i] = perAgent[i].at(t).at(s);
      }
      joint[t][s] = model.jointAction(a);
    }
  }
  return joint;
}

namespace {

int initialPointState(const DecPomdpModel& model) {
  for (int s = 0; s < model.numStates; ++s) {
    if (model.initialBelief[s] == 1.0) {
      return s;
    }
  }
  throw std::invalid_argument("MMDP policy execution needs a point-mass initial state");
}

} // namespace

JointPolicy mmdpLocalPolicies(const DecPomdpModel& model, const std::vector<MmdpPolicy>& perAgent) {
  if (!model.fullyObservable) {
    throw std::invalid_argument("mmdpLocalPolicies: model is not fully observable");
  }
  const int s0 = initialPointState(model);
  JointPolicy jp;
  for (int i = 0; i < model.numAgents; ++i) {
    auto table = std::make_shared<MmdpPolicy>(perAgent.at(i));
    jp.push_back(std::make_shared<FunctionPolicy>(model.numActions[i], [table, s0](const LocalHistory& h) {
      const int s = h.entries.empty() ? s0 : h.entries.back().observation;
      const auto& row = table->size() == 1 ? (*table)[0] : table->at(h.length());
      return row.at(s);
    }));
  }
  return jp;
}

MmdpPolicy CentralMmdpResult::greedyTable(const DecPomdpModel& model) const {
  MmdpPolicy table(model.horizon, std::vector<int>(model.numStates, 0));
  for (int t = 0; t < model.horizon; ++t) {
    for (int s = 0; s < model.numStates; ++s) {
      table[t][s] = argmaxLowest(Q.row(mmdpKey(t, s)));
    }
  }
  return table;
}

JointPolicy CentralMmdpResult::greedyPolicy(const DecPomdpModel& model) const {
  return mmdpLocalPolicies(model, decentralizeMmdpPolicy(model, greedyTable(model)));
}

CentralMmdpResult trainCentralMmdp(const DecPomdpModel& model, const CentralConfig& cfg,
                                   std::uint64_t seed, const EpisodeHook& hook) {
  if (!model.fullyObservable) {
    throw std::invalid_argument("central-q-mmdp: model is not fully observable");
  }
  const double gamma = cfg.gamma >= 0.0 ? cfg.gamma : model.discount;
  const Rng root(seed);
  Rng envRng = root.split(1);
  Rng explore = root.split(2);
  CentralMmdpResult res{JointQTable(model.numJointActions(), cfg.qInit)};
  const GreedyFn greedy = [&]() { return EvalPolicy::of(model, res.greedyPolicy(model)); };
  for (int ep = 0; ep < cfg.episodes; ++ep) {
    const double eps = cfg.epsilon.at(ep);
    Controller ctl = [&](const JointHistory& jh, int s) {
      const int ja = epsilonGreedy(res.Q.row(mmdpKey(jh.length(), s)), eps, explore);
      return model.splitJointAction(ja);
    };
    const Episode e = runEpisode(model, ctl, envRng);
    double absDelta = 0.0;
    for (int t = 0; t < e.length(); ++t) {
      const auto& st = e.steps[t];
      const auto key = mmdpKey(t, st.state);
      const auto nk = mmdpKey(t + 1, st.nextState);
      const bool terminal = t + 1 >= model.horizon || st.done;
      absDelta += std::abs(mmdpQLearningUpdate(res.Q, key, st.jointAction, st.reward,
                                               terminal ? nullptr : &nk, cfg.alpha, gamma));
    }
    if (hook) {
      hook({ep, e.totalReward(gamma), e.length() ? absDelta / e.length() : 0.0, eps}, greedy);
    }
  }
  return res;
}

int CentralMpomdpResult::greedyJointAction(const JointHistory& jh) const {
  return argmaxLowest(Q.row(jointHistoryKey(jh)));
}

CentralMpomdpResult trainCentralMpomdp(const DecPomdpModel& model, const CentralConfig& cfg,
                                       std::uint64_t seed, const EpisodeHook& hook) {
  const double gamma = cfg.gamma >= 0.0 ? cfg.gamma : model.discount;
  const Rng root(seed);
  Rng envRng = root.split(1);
  Rng explore = root.split(2);
  CentralMpomdpResult res{JointQTable(model.numJointActions(), cfg.qInit)};
  const GreedyFn greedy = [&]() {
    EvalPolicy e;
    e.controller = res.greedyController(model);
    return e;
  };
  for (int ep = 0; ep < cfg.episodes; ++ep) {
    const double eps = cfg.epsilon.at(ep);
    Controller ctl = [&](const JointHistory& jh, int) {
      const int ja = epsilonGreedy(res.Q.row(jointHistoryKey(jh)), eps, explore);
      return model.splitJointAction(ja);
    };
    const Episode e = runEpisode(model, ctl, envRng);
    auto jh = JointHistory::empty(model.numAgents);
    double absDelta = 0.0;
    for (int t = 0; t < e.length(); ++t) {
      const auto& st = e.steps[t];
      auto next = jh;
      next.append(st.actions, st.observations);
      const bool terminal = t + 1 >= model.horizon || st.done;
      absDelta += std::abs(mpomdpQLearningUpdate(res.Q, jh, st.jointAction, st.reward,
                                                 terminal ? nullptr : &next, cfg.alpha, gamma));
      jh = std::move(next);
    }
    if (hook) {
      hook({ep, e.totalReward(gamma), e.length() ? absDelta / e.length() : 0.0, eps}, greedy);
    }
  }
  return res;
}

JointController CentralMpomdpResult::greedyController(const DecPomdpModel& model) const {
  auto Qc = std::make_shared<JointQTable>(Q);
  const int nJA = model.numJointActions();
  return [Qc, nJA](const JointHistory& jh) {
    std::vector<double> d(nJA, 0.0);
    d[argmaxLowest(Qc->row(jointHistoryKey(jh)))] = 1.0;
    return d;
  };
}

double evaluateCentralGreedy(const DecPomdpModel& model, const CentralMpomdpResult& res) {
  return evaluateController(model, res.greedyController(model));
}

} // namespace marl
