#include "marl/oracle.hpp"

#include <algorithm>
#include <limits>
#include <string>

namespace marl {

namespace {

// Predicted next-state mass, excluding terminal states (episodes stop there).
std::vector<double> predict(const DecPomdpModel& m, const Belief& b, int ja, bool dropTerminal) {
  std::vector<double> pred(m.numStates, 0.0);
  for (int s = 0; s < m.numStates; ++s) {
    if (b[s] == 0.0) {
      continue;
    }
    for (int s2 = 0; s2 < m.numStates; ++s2) {
      pred[s2] += b[s] * m.trans(s, ja, s2);
    }
  }
  if (dropTerminal && !m.terminal.empty()) {
    for (int s2 = 0; s2 < m.numStates; ++s2) {
      if (m.terminal[s2]) {
        pred[s2] = 0.0;
      }
    }
  }
  return pred;
}

double expectedReward(const DecPomdpModel& m, const Belief& b, int ja) {
  double r = 0.0;
  for (int s = 0; s < m.numStates; ++s) {
    r += b[s] * m.reward(s, ja);
  }
  return r;
}

// Calls fn(jo, mass, nextBelief) for every joint observation with positive
// probability after `ja` from belief b.
template <class Fn>
void forEachObservation(const DecPomdpModel& m, const Belief& b, int ja, Fn&& fn) {
  const auto pred = predict(m, b, ja, true);
  if (m.fullyObservable) {
    for (int s2 = 0; s2 < m.numStates; ++s2) {
      if (pred[s2] > 0.0) {
        Belief nb(m.numStates, 0.0);
        nb[s2] = 1.0;
        fn(m.identityObservation(s2), pred[s2], nb);
      }
    }
    return;
  }
  const int nJO = m.numJointObservations();
  Belief w(m.numStates);
  for (int jo = 0; jo < nJO; ++jo) {
    double total = 0.0;
    for (int s2 = 0; s2 < m.numStates; ++s2) {
      w[s2] = pred[s2] * m.obs(ja, s2, jo);
      total += w[s2];
    }
    if (total > 0.0) {
      for (auto& x : w) {
        x /= total;
      }
      fn(jo, total, w);
    }
  }
}

double valueRec(const DecPomdpModel& m, const JointController& ctl, JointHistory& jh,
                const Belief& b);

double qRec(const DecPomdpModel& m, const JointController& ctl, JointHistory& jh, const Belief& b,
            int ja) {
  double q = expectedReward(m, b, ja);
  if (jh.length() + 1 >= m.horizon) {
    return q;
  }
  const auto actions = m.splitJointAction(ja);
  double cont = 0.0;
  forEachObservation(m, b, ja, [&](int jo, double mass, const Belief& nb) {
    const auto obs = m.splitJointObservation(jo);
    jh.append(actions, obs);
    cont += mass * valueRec(m, ctl, jh, nb);
    for (auto& h : jh.perAgent) {
      h.entries.pop_back();
    }
  });
  return q + m.discount * cont;
}

double valueRec(const DecPomdpModel& m, const JointController& ctl, JointHistory& jh,
                const Belief& b) {
  if (jh.length() >= m.horizon) {
    return 0.0;
  }
  const auto dist = ctl(jh);
  if (static_cast<int>(dist.size()) != m.numJointActions()) {
    throw std::invalid_argument("controller distribution has wrong size");
  }
  double v = 0.0;
  for (int ja = 0; ja < static_cast<int>(dist.size()); ++ja) {
    if (dist[ja] > 0.0) {
      v += dist[ja] * qRec(m, ctl, jh, b, ja);
    }
  }
  return v;
}

} // namespace

Belief beliefUpdate(const DecPomdpModel& model, const Belief& b, int ja, int jo) {
  if (static_cast<int>(b.size()) != model.numStates) {
    throw std::invalid_argument("beliefUpdate: belief has wrong size");
  }
  if (ja < 0 || ja >= model.numJointActions() || jo < 0 || jo >= model.numJointObservations()) {
    throw std::out_of_range("beliefUpdate: joint action or observation out of range");
  }
  const auto pred = predict(model, b, ja, false);
  Belief nb(model.numStates);
  double total = 0.0;
  for (int s2 = 0; s2 < model.numStates; ++s2) {
    nb[s2] = pred[s2] * model.obs(ja, s2, jo);
    total += nb[s2];
  }
  if (!(total > 0.0)) {
    throw InconsistentHistory("inconsistent history: observation has zero probability");
  }
  for (auto& x : nb) {
    x /= total;
  }
  return nb;
}

Belief beliefFromHistory(const DecPomdpModel& model, const JointHistory& jh) {
  Belief b = model.initialBelief;
  std::vector<int> a(model.numAgents), o(model.numAgents);
  for (int t = 0; t < jh.length(); ++t) {
    for (int i = 0; i < model.numAgents; ++i) {
      a[i] = jh.perAgent[i].entries[t].action;
      o[i] = jh.perAgent[i].entries[t].observation;
    }
    b = beliefUpdate(model, b, model.jointAction(a), model.jointObservation(o));
  }
  return b;
}

int PolicyTree::action(const LocalHistory& h) const {
  const auto& table = actions.at(h.agent);
  auto it = table.find(historyKey(h));
  if (it == table.end()) {
    throw std::out_of_range("policy undefined at reachable history of length " +
                            std::to_string(h.length()) + " for agent " + std::to_string(h.agent));
  }
  return it->second;
}

int observationNode(const LocalHistory& h, int nObs) {
  int offset = 0;
  int width = 1;
  for (int t = 0; t < h.length(); ++t) {
    offset += width;
    width *= nObs;
  }
  int within = 0;
  for (const auto& e : h.entries) {
    within = within * nObs + e.observation;
  }
  return offset + within;
}

long long observationNodeCount(int nObs, int horizon) {
  long long total = 0;
  long long width = 1;
  for (int t = 0; t < horizon; ++t) {
    total += width;
    width *= nObs;
  }
  return total;
}

namespace {

// Visits every action-observation history of agent i with length < horizon.
template <class Fn>
void forEachLocalHistory(const DecPomdpModel& m, int agent, Fn&& fn) {
  std::vector<LocalHistory> frontier(1);
  frontier[0].agent = agent;
  for (int t = 0; t < m.horizon; ++t) {
    std::vector<LocalHistory> next;
    for (const auto& h : frontier) {
      fn(h);
      if (t + 1 < m.horizon) {
        for (int a = 0; a < m.numActions[agent]; ++a) {
          for (int o = 0; o < m.numObservations[agent]; ++o) {
            LocalHistory c = h;
            c.entries.push_back({a, o});
            next.push_back(std::move(c));
          }
        }
      }
    }
    frontier = std::move(next);
  }
}

} // namespace

PolicyTree PolicyTree::fromObservationTrees(const DecPomdpModel& model,
                                            const std::vector<std::vector<int>>& nodeActions) {
  if (static_cast<int>(nodeActions.size()) != model.numAgents) {
    throw std::invalid_argument("fromObservationTrees: agent count mismatch");
  }
  PolicyTree tree;
  tree.horizon = model.horizon;
  tree.actions.resize(model.numAgents);
  for (int i = 0; i < model.numAgents; ++i) {
    const int nO = model.numObservations[i];
    if (static_cast<long long>(nodeActions[i].size()) != observationNodeCount(nO, model.horizon)) {
      throw std::invalid_argument("fromObservationTrees: wrong node count");
    }
    forEachLocalHistory(model, i, [&](const LocalHistory& h) {
      tree.actions[i][historyKey(h)] = nodeActions[i][observationNode(h, nO)];
    });
  }
  return tree;
}

PolicyTree PolicyTree::fromPolicies(const DecPomdpModel& model, const JointPolicy& policy) {
  PolicyTree tree;
  tree.horizon = model.horizon;
  tree.actions.resize(model.numAgents);
  for (int i = 0; i < model.numAgents; ++i) {
    forEachLocalHistory(model, i, [&](const LocalHistory& h) {
      const auto d = policy[i]->distribution(h);
      tree.actions[i][historyKey(h)] = argmaxLowest(d);
    });
  }
  return tree;
}

namespace {

class TreePolicy : public Policy {
public:
  TreePolicy(const PolicyTree& tree, int nA) : tree_(tree), nA_(nA) {}
  int numActions() const override { return nA_; }
  bool deterministic() const override { return true; }
  std::vector<double> distribution(const LocalHistory& h) const override {
    std::vector<double> d(nA_, 0.0);
    d[tree_.action(h)] = 1.0;
    return d;
  }
  int act(const LocalHistory& h, Rng&) const override { return tree_.action(h); }

private:
  PolicyTree tree_;
  int nA_;
};

} // namespace

JointPolicy PolicyTree::toJointPolicy(const DecPomdpModel& model) const {
  JointPolicy jp;
  for (int i = 0; i < model.numAgents; ++i) {
    jp.push_back(std::make_shared<TreePolicy>(*this, model.numActions[i]));
  }
  return jp;
}

double evaluateController(const DecPomdpModel& model, const JointController& controller) {
  auto jh = JointHistory::empty(model.numAgents);
  return valueRec(model, controller, jh, model.initialBelief);
}

double evaluateJointPolicy(const DecPomdpModel& model, const JointPolicy& policy) {
  return evaluateController(model, jointControllerOf(model, policy));
}

double evaluateJointPolicy(const DecPomdpModel& model, const PolicyTree& tree) {
  return evaluateJointPolicy(model, tree.toJointPolicy(model));
}

double evaluateJointQ(const DecPomdpModel& model, const JointPolicy& policy, const JointHistory& jh,
                      int ja) {
  if (jh.length() >= model.horizon) {
    return 0.0;
  }
  if (ja < 0 || ja >= model.numJointActions()) {
    throw std::out_of_range("evaluateJointQ: joint action out of range");
  }
  // Replay jh, checking the recorded actions have positive probability.
  auto prefix = JointHistory::empty(model.numAgents);
  Belief b = model.initialBelief;
  std::vector<int> a(model.numAgents), o(model.numAgents);
  for (int t = 0; t < jh.length(); ++t) {
    for (int i = 0; i < model.numAgents; ++i) {
      a[i] = jh.perAgent[i].entries[t].action;
      o[i] = jh.perAgent[i].entries[t].observation;
      if (policy[i]->prob(prefix.perAgent[i], a[i]) <= 0.0) {
        throw InconsistentHistory("inconsistent history: action has zero probability under policy");
      }
    }
    b = beliefUpdate(model, b, model.jointAction(a), model.jointObservation(o));
    prefix.append(a, o);
  }
  const auto ctl = jointControllerOf(model, policy);
  return qRec(model, ctl, prefix, b, ja);
}

namespace {

void tabulateReachable(const DecPomdpModel& m, const JointPolicy& policy, JointHistory& jh, const Belief& b,
                       PolicyTree& tree) {
  if (jh.length() >= m.horizon) {
    return;
  }
  std::vector<int> a(m.numAgents);
  for (int i = 0; i < m.numAgents; ++i) {
    const auto key = historyKey(jh.perAgent[i]);
    auto it = tree.actions[i].find(key);
    if (it == tree.actions[i].end()) {
      it = tree.actions[i].emplace(key, argmaxLowest(policy[i]->distribution(jh.perAgent[i]))).first;
    }
    a[i] = it->second;
  }
  const int ja = m.jointAction(a);
  forEachObservation(m, b, ja, [&](int jo, double, const Belief& nb) {
    jh.append(a, m.splitJointObservation(jo));
    tabulateReachable(m, policy, jh, nb, tree);
    for (auto& h : jh.perAgent) {
      h.entries.pop_back();
    }
  });
}

} // namespace

PolicyTree reachablePolicyTree(const DecPomdpModel& model, const JointPolicy& policy) {
  if (static_cast<int>(policy.size()) != model.numAgents) {
    throw std::invalid_argument("reachablePolicyTree: one policy per agent required");
  }
  PolicyTree tree;
  tree.horizon = model.horizon;
  tree.actions.resize(model.numAgents);
  auto jh = JointHistory::empty(model.numAgents);
  tabulateReachable(model, policy, jh, model.initialBelief, tree);
  return tree;
}

namespace {

struct TreeEvaluator {
  const DecPomdpModel& m;
  const std::vector<std::vector<int>>& nodeActions;
  std::vector<std::vector<int>> joDigits;
  std::vector<std::vector<long long>> depthOffset;

  TreeEvaluator(const DecPomdpModel& model, const std::vector<std::vector<int>>& na)
      : m(model), nodeActions(na) {
    if (!m.fullyObservable) {
      for (int jo = 0; jo < m.numJointObservations(); ++jo) {
        joDigits.push_back(m.splitJointObservation(jo));
      }
    }
    depthOffset.resize(m.numAgents);
    for (int i = 0; i < m.numAgents; ++i) {
      long long off = 0;
      long long width = 1;
      for (int t = 0; t <= m.horizon; ++t) {
        depthOffset[i].push_back(off);
        off += width;
        width *= m.numObservations[i];
      }
    }
  }

  double value(int t, const std::vector<long long>& nodes, const Belief& b) const {
    std::vector<int> a(m.numAgents);
    for (int i = 0; i < m.numAgents; ++i) {
      a[i] = nodeActions[i][nodes[i]];
    }
    const int ja = m.jointAction(a);
    double v = expectedReward(m, b, ja);
    if (t + 1 >= m.horizon) {
      return v;
    }
    double cont = 0.0;
    std::vector<long long> child(m.numAgents);
    forEachObservation(m, b, ja, [&](int jo, double mass, const Belief& nb) {
      for (int i = 0; i < m.numAgents; ++i) {
        const int oi = m.fullyObservable ? nbState(nb) : joDigits[jo][i];
        child[i] = depthOffset[i][t + 1] +
                   (nodes[i] - depthOffset[i][t]) * m.numObservations[i] + oi;
      }
      cont += mass * value(t + 1, child, nb);
    });
    return v + m.discount * cont;
  }

  static int nbState(const Belief& nb) {
    return static_cast<int>(std::max_element(nb.begin(), nb.end()) - nb.begin());
  }
};

} // namespace

double evaluateObservationTrees(const DecPomdpModel& model,
                                const std::vector<std::vector<int>>& nodeActions) {
  TreeEvaluator ev(model, nodeActions);
  std::vector<long long> root(model.numAgents, 0);
  return ev.value(0, root, model.initialBelief);
}

BruteForceResult bruteForceOptimal(const DecPomdpModel& model, const BruteForceOptions& opts) {
  const int n = model.numAgents;
  std::vector<std::vector<int>> allowed(n);
  for (int i = 0; i < n; ++i) {
    if (!opts.allowedActions.empty() && !opts.allowedActions.at(i).empty()) {
      allowed[i] = opts.allowedActions[i];
      for (int a : allowed[i]) {
        if (a < 0 || a >= model.numActions[i]) {
          throw std::out_of_range("bruteForceOptimal: allowed action out of range");
        }
      }
    } else {
      for (int a = 0; a < model.numActions[i]; ++a) {
        allowed[i].push_back(a);
      }
    }
  }
  BigInt cardinality = 1;
  std::vector<long long> nodes(n);
  for (int i = 0; i < n; ++i) {
    nodes[i] = observationNodeCount(model.numObservations[i], model.horizon);
    cardinality *= boost::multiprecision::pow(BigInt(allowed[i].size()),
                                              static_cast<unsigned>(std::min<long long>(nodes[i], 1 << 20)));
    if (nodes[i] > (1 << 20) || cardinality > BigInt(static_cast<long long>(opts.cap))) {
      throw Intractable("intractable: " + cardinality.str() +
                            " joint policies exceed the enumeration cap",
                        cardinality);
    }
  }

  // Odometer over (agent, node) digits; agent 0 node 0 is the most significant.
  std::vector<std::vector<int>> digit(n), nodeActions(n);
  for (int i = 0; i < n; ++i) {
    digit[i].assign(nodes[i], 0);
    nodeActions[i].assign(nodes[i], allowed[i][0]);
  }
  TreeEvaluator ev(model, nodeActions);
  std::vector<long long> root(n, 0);
  BruteForceResult best;
  best.value = -std::numeric_limits<double>::infinity();
  BigInt count = 0;
  while (true) {
    const double v = ev.value(0, root, model.initialBelief);
    ++count;
    if (v > best.value) {
      best.value = v;
      best.nodeActions = nodeActions;
    }
    int i = n - 1;
    long long k = nodes[n - 1] - 1;
    while (i >= 0) {
      if (++digit[i][k] < static_cast<int>(allowed[i].size())) {
        nodeActions[i][k] = allowed[i][digit[i][k]];
        break;
      }
      digit[i][k] = 0;
      nodeActions[i][k] = allowed[i][0];
      if (--k < 0) {
        --i;
        if (i >= 0) {
          k = nodes[i] - 1;
        }
      }
    }
    if (i < 0) {
      break;
    }
  }
  best.enumerated = count;
  best.tree = PolicyTree::fromObservationTrees(model, best.nodeActions);
  return best;
}

PolicyCounts countPolicies(int nActions, int nObs, int horizon, int nAgents) {
  if (nActions < 1 || nObs < 1 || horizon < 1 || nAgents < 1) {
    throw std::invalid_argument("countPolicies: all arguments must be >= 1");
  }
  auto nodeCount = [horizon](const BigInt& branching) -> BigInt {
    // (b^H - 1) / (b - 1), or H when b = 1
    if (branching == 1) {
      return BigInt(horizon);
    }
    return (boost::multiprecision::pow(branching, static_cast<unsigned>(horizon)) - 1) /
           (branching - 1);
  };
  auto power = [](const BigInt& base, const BigInt& exponent) -> BigInt {
    if (exponent > (BigInt(1) << 24)) {
      throw Intractable("countPolicies: exponent too large to materialize: " + exponent.str(),
                        exponent);
    }
    return boost::multiprecision::pow(base, exponent.convert_to<unsigned>());
  };
  PolicyCounts out;
  out.perAgent = power(BigInt(nActions), nodeCount(BigInt(nObs)));
  out.decentralized = boost::multiprecision::pow(out.perAgent, static_cast<unsigned>(nAgents));
  const BigInt jointActions = boost::multiprecision::pow(BigInt(nActions), static_cast<unsigned>(nAgents));
  const BigInt jointObs = boost::multiprecision::pow(BigInt(nObs), static_cast<unsigned>(nAgents));
  out.centralized = power(jointActions, nodeCount(jointObs));
  return out;
}

} // namespace marl
