#pragma once

#include <cstdint>
#include <vector>

#include "marl/core.hpp"
#include "marl/dte_value.hpp"
#include "marl/learner.hpp"

namespace marl {

/// Joint Q-table: key -> values over joint actions (row-major by agent).
using JointQTable = TabularQ;

/// Finite-horizon MMDP values are time-indexed; the key is {t, s}.
HistoryKey mmdpKey(int t, int s);

/// Q-learning over joint actions keyed by state (or (t, s)). nullptr next
/// marks a terminal step.
double mmdpQLearningUpdate(JointQTable& Q, const HistoryKey& s, int ja, double r,
                           const HistoryKey* next, double alpha, double gamma);
/// The same update keyed by joint history.
double mpomdpQLearningUpdate(JointQTable& Q, const JointHistory& jh, int ja, double r,
                             const JointHistory* next, double alpha, double gamma);

struct ValueIterationResult {
  /// V[t][s] for t = 0..H (V[H] = 0) and Q[t][s][ja] for t < H.
  std::vector<std::vector<double>> V;
  std::vector<std::vector<std::vector<double>>> Q;
  /// Greedy joint action per (t, s), lowest index on ties.
  std::vector<std::vector<int>> policy;
  double initialValue = 0.0;
};

/// Exact finite-horizon backward induction; rejects partially observable models.
ValueIterationResult valueIteration(const DecPomdpModel& model);

/// reachable[t][s]: s has positive probability at time t under some joint policy.
std::vector<std::vector<bool>> reachableStates(const DecPomdpModel& model);

/// Time-indexed MMDP policy table [t][s] -> joint action. A table with a
/// single row is used at every time step.
using MmdpPolicy = std::vector<std::vector<int>>;

/// pi_i(t, s) = i-th component of pi(t, s); result[i][t][s].
std::vector<MmdpPolicy> decentralizeMmdpPolicy(const DecPomdpModel& model, const MmdpPolicy& joint);
/// Inverse of decentralizeMmdpPolicy.
MmdpPolicy recomposeMmdpPolicy(const DecPomdpModel& model, const std::vector<MmdpPolicy>& perAgent);

/// Local policies executing per-agent tables from local histories: the state
/// is the agent's last observation, or the (point-mass) initial state at t = 0.
JointPolicy mmdpLocalPolicies(const DecPomdpModel& model, const std::vector<MmdpPolicy>& perAgent);

struct CentralConfig {
  int episodes = 10000;
  double alpha = 0.1;
  double gamma = -1.0;  // negative = model discount
  LinearSchedule epsilon{0.1, 0.1, 0};
  double qInit = 0.0;
};

struct CentralMmdpResult {
  JointQTable Q;
  MmdpPolicy greedyTable(const DecPomdpModel& model) const;
  JointPolicy greedyPolicy(const DecPomdpModel& model) const;
};

/// Centralized Q-learning on an MMDP over (t, s) keys. Streams: split(1)
/// environment, split(2) joint exploration.
CentralMmdpResult trainCentralMmdp(const DecPomdpModel& model, const CentralConfig& cfg,
                                   std::uint64_t seed, const EpisodeHook& hook = {});

struct CentralMpomdpResult {
  JointQTable Q;
  /// Greedy joint action at a joint history (lowest index on ties).
  int greedyJointAction(const JointHistory& jh) const;
  JointController greedyController(const DecPomdpModel& model) const;
};

/// Centralized Q-learning keyed by joint history.
CentralMpomdpResult trainCentralMpomdp(const DecPomdpModel& model, const CentralConfig& cfg,
                                       std::uint64_t seed, const EpisodeHook& hook = {});

/// Exact value of the greedy centralized MPOMDP controller.
double evaluateCentralGreedy(const DecPomdpModel& model, const CentralMpomdpResult& res);

} // namespace marl
