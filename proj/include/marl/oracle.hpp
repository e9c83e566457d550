#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "marl/core.hpp"

namespace marl {

using Belief = std::vector<double>;
using BigInt = boost::multiprecision::cpp_int;

/// Raised when a history has zero probability under the model.
class InconsistentHistory : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// Raised when exhaustive enumeration would exceed the configured cap.
class Intractable : public std::runtime_error {
public:
  Intractable(const std::string& what, BigInt cardinality)
      : std::runtime_error(what), cardinality(std::move(cardinality)) {}
  BigInt cardinality;
};

/// b'(s') ∝ O(ja, s', jo) * sum_s T(s, ja, s') b(s).
Belief beliefUpdate(const DecPomdpModel& model, const Belief& b, int ja, int jo);

/// Belief after replaying a joint history from the initial belief.
Belief beliefFromHistory(const DecPomdpModel& model, const JointHistory& jh);

/// Explicit deterministic joint policy: for each agent a map from every
/// action-observation history of length < horizon to an action.
struct PolicyTree {
  int horizon = 0;
  std::vector<std::unordered_map<HistoryKey, int, KeyHash>> actions;

  int action(const LocalHistory& h) const;
  std::size_t size(int agent) const { return actions.at(agent).size(); }

  /// Per agent, `nodeActions[i][node]` is the action at an observation
  /// history node (breadth-first numbering, see observationNode).
  static PolicyTree fromObservationTrees(const DecPomdpModel& model,
                                         const std::vector<std::vector<int>>& nodeActions);
  /// Tabulates deterministic (argmax of distribution) actions of `policy` on
  /// every action-observation history of length < horizon.
  static PolicyTree fromPolicies(const DecPomdpModel& model, const JointPolicy& policy);

  JointPolicy toJointPolicy(const DecPomdpModel& model) const;
};

/// Deterministic (argmax) actions of `policy` on the histories it reaches
/// with nonzero probability. Sufficient for exact evaluation of that policy.
PolicyTree reachablePolicyTree(const DecPomdpModel& model, const JointPolicy& policy);

/// Breadth-first index of an observation sequence in a tree with branching
/// nObs: the root is 0 and the children of depth-t nodes follow all of them.
int observationNode(const LocalHistory& h, int nObs);
/// Number of observation-history nodes of depth < horizon.
long long observationNodeCount(int nObs, int horizon);

/// Exact value of a controller from the initial belief; only branches with
/// nonzero probability are expanded.
double evaluateController(const DecPomdpModel& model, const JointController& controller);

double evaluateJointPolicy(const DecPomdpModel& model, const JointPolicy& policy);
double evaluateJointPolicy(const DecPomdpModel& model, const PolicyTree& tree);

/// Q^π(jh, ja). Zero when jh is at the horizon. Throws InconsistentHistory
/// if jh has zero probability under the model and π.
double evaluateJointQ(const DecPomdpModel& model, const JointPolicy& policy, const JointHistory& jh,
                      int ja);

struct BruteForceOptions {
  /// Maximum number of joint policies to enumerate.
  double cap = 1e7;
  /// Optional per-agent restriction of the action set (empty = all actions).
  std::vector<std::vector<int>> allowedActions;
};

struct BruteForceResult {
  double value = 0.0;
  std::vector<std::vector<int>> nodeActions;
  PolicyTree tree;
  BigInt enumerated;
};

/// Exhaustive search over deterministic observation-history trees. Ties keep
/// the first policy in lexicographic enumeration order.
BruteForceResult bruteForceOptimal(const DecPomdpModel& model, const BruteForceOptions& opts = {});

/// Value of a joint observation-tree policy (fast path used by brute force).
double evaluateObservationTrees(const DecPomdpModel& model,
                                const std::vector<std::vector<int>>& nodeActions);

struct PolicyCounts {
  BigInt perAgent;
  BigInt decentralized;
  BigInt centralized;
};

/// Deterministic policy counts over observation-history trees.
PolicyCounts countPolicies(int nActions, int nObs, int horizon, int nAgents);

} // namespace marl
