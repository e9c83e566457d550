#pragma once

// Independent reference implementations used only by tests. They share no
// code paths with the library's oracle: values are computed by summing over
// world-state trajectories rather than by belief recursion.

#include <cmath>
#include <functional>
#include <map>
#include <vector>

#include "marl/core.hpp"

namespace marl::naive {

/// Deterministic joint policy given as a function of the joint history.
using JointDecision = std::function<std::vector<int>(const JointHistory&)>;

inline double naiveValueFrom(const DecPomdpModel& m, const JointDecision& pi, JointHistory& jh, int s) {
  if (jh.length() >= m.horizon || (!m.terminal.empty() && m.terminal[s])) {
    return 0.0;
  }
  const auto a = pi(jh);
  const int ja = m.jointAction(a);
  double v = m.reward(s, ja);
  if (jh.length() + 1 >= m.horizon) {
    return v;
  }
  const int nJO = m.numJointObservations();
  for (int s2 = 0; s2 < m.numStates; ++s2) {
    const double pt = m.trans(s, ja, s2);
    if (pt == 0.0) continue;
    if (m.fullyObservable) {
      std::vector<int> o(m.numAgents, s2);
      jh.append(a, o);
      v += m.discount * pt * naiveValueFrom(m, pi, jh, s2);
      for (auto& h : jh.perAgent) h.entries.pop_back();
      continue;
    }
    for (int jo = 0; jo < nJO; ++jo) {
      const double po = m.obs(ja, s2, jo);
      if (po == 0.0) continue;
      jh.append(a, m.splitJointObservation(jo));
      v += m.discount * pt * po * naiveValueFrom(m, pi, jh, s2);
      for (auto& h : jh.perAgent) h.entries.pop_back();
    }
  }
  return v;
}

/// Value of a deterministic joint policy by world-state enumeration.
inline double naiveValue(const DecPomdpModel& m, const JointDecision& pi) {
  double v = 0.0;
  for (int s = 0; s < m.numStates; ++s) {
    if (m.initialBelief[s] == 0.0) continue;
    auto jh = JointHistory::empty(m.numAgents);
    v += m.initialBelief[s] * naiveValueFrom(m, pi, jh, s);
  }
  return v;
}

/// Per-agent deterministic policy as a map from observation sequence to action.
using ObsPolicy = std::map<std::vector<int>, int>;

inline std::vector<int> observationsOf(const LocalHistory& h) {
  std::vector<int> o;
  for (const auto& e : h.entries) o.push_back(e.observation);
  return o;
}

/// Every deterministic observation-history policy of one agent.
inline std::vector<ObsPolicy> allObsPolicies(int nA, int nO, int horizon) {
  std::vector<std::vector<int>> nodes{{}};
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    if (static_cast<int>(nodes[k].size()) + 1 < horizon) {
      for (int o = 0; o < nO; ++o) {
        auto c = nodes[k];
        c.push_back(o);
        nodes.push_back(c);
      }
    }
  }
  std::vector<ObsPolicy> out{ObsPolicy{}};
  for (const auto& node : nodes) {
    std::vector<ObsPolicy> next;
    for (const auto& p : out) {
      for (int a = 0; a < nA; ++a) {
        auto q = p;
        q[node] = a;
        next.push_back(std::move(q));
      }
    }
    out = std::move(next);
  }
  return out;
}

inline JointDecision decisionOf(const std::vector<ObsPolicy>& ps) {
  return [ps](const JointHistory& jh) {
    std::vector<int> a;
    for (std::size_t i = 0; i < ps.size(); ++i) a.push_back(ps[i].at(observationsOf(jh.perAgent[i])));
    return a;
  };
}

/// Exhaustive two-agent search (nested loops), returning the best value.
inline double naiveOptimum(const DecPomdpModel& m) {
  const auto p0 = allObsPolicies(m.numActions[0], m.numObservations[0], m.horizon);
  const auto p1 = allObsPolicies(m.numActions[1], m.numObservations[1], m.horizon);
  double best = -1e300;
  for (const auto& a : p0) {
    for (const auto& b : p1) {
      best = std::max(best, naiveValue(m, decisionOf({a, b})));
    }
  }
  return best;
}

struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;
};

inline MeanStderr meanStderr(const std::vector<double>& xs) {
  MeanStderr r;
  for (double x : xs) r.mean += x;
  r.mean /= xs.size();
  double var = 0.0;
  for (double x : xs) var += (x - r.mean) * (x - r.mean);
  var /= (xs.size() - 1);
  r.stderr_ = std::sqrt(var / xs.size());
  return r;
}

/// Upper-tail chi-square critical value at p = 0.001 by Wilson-Hilferty.
inline double chiSquareCritical(int dof) {
  const double z = 3.090232306167813;  // one-sided 0.999 normal quantile
  const double k = dof;
  const double c = 1.0 - 2.0 / (9.0 * k) + z * std::sqrt(2.0 / (9.0 * k));
  return k * c * c * c;
}

/// One-sided Fisher exact test p-value for "group A has more successes".
inline double fisherOneSided(int successA, int nA, int successB, int nB) {
  const int K = successA + successB;
  const int N = nA + nB;
  auto logC = [](int n, int k) { return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0); };
  const double denom = logC(N, K);
  double p = 0.0;
  for (int x = successA; x <= std::min(K, nA); ++x) {
    if (K - x > nB) continue;
    p += std::exp(logC(nA, x) + logC(nB, K - x) - denom);
  }
  return p;
}

} // namespace marl::naive
