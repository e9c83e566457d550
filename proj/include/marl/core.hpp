#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "marl/rng.hpp"

namespace marl {

/// Finite Dec-POMDP with explicit tables and a generative interface.
///
/// Joint actions and joint observations are encoded as row-major indices
/// over agents (agent 0 is the most significant digit). Tables are flat:
///   T[(s * nJA + ja) * nS + s2]
///   R[s * nJA + ja]
///   O[(ja * nS + s2) * nJO + jo]
struct DecPomdpModel {
  std::string name;
  int numAgents = 0;
  int numStates = 0;
  std::vector<int> numActions;       // per agent
  std::vector<int> numObservations;  // per agent
  std::vector<double> initialBelief;
  int horizon = 1;
  double discount = 1.0;
  /// Std-dev of zero-mean Gaussian noise added to sampled rewards (the
  /// explicit table holds the mean).
  double rewardNoise = 0.0;
  /// True when each agent's observation is the state index itself. The
  /// observation table O is then left empty and evaluated implicitly.
  bool fullyObservable = false;
  /// Optional terminal predicate over next states; empty = finite horizon only.
  std::vector<bool> terminal;

  std::vector<double> T;
  std::vector<double> R;
  std::vector<double> O;

  int numJointActions() const;
  int numJointObservations() const;

  int jointAction(std::span<const int> actions) const;
  std::vector<int> splitJointAction(int ja) const;
  int jointObservation(std::span<const int> obs) const;
  std::vector<int> splitJointObservation(int jo) const;

  double trans(int s, int ja, int s2) const {
    return T[(static_cast<std::size_t>(s) * numJointActions() + ja) * numStates + s2];
  }
  double reward(int s, int ja) const {
    return R[static_cast<std::size_t>(s) * numJointActions() + ja];
  }
  double obs(int ja, int s2, int jo) const {
    if (fullyObservable) {
      return jo == identityObservation(s2) ? 1.0 : 0.0;
    }
    return O[(static_cast<std::size_t>(ja) * numStates + s2) * numJointObservations() + jo];
  }
  /// Joint observation in which every agent observes state s.
  int identityObservation(int s) const;

  /// Allocates zeroed tables sized from the current dimensions.
  void allocate();

  /// Throws std::invalid_argument describing the first violated invariant.
  void validate() const;

  struct StepResult {
    int nextState;
    double reward;
    int jointObservation;
    bool done;
  };

  int sampleInitialState(Rng& rng) const;
  StepResult step(int s, int ja, Rng& rng) const;
};

/// Row-major index of `digits` under mixed radix `radix` (digit 0 slowest).
int mixedRadixIndex(std::span<const int> digits, std::span<const int> radix);
std::vector<int> mixedRadixDigits(int index, std::span<const int> radix);

struct HistoryEntry {
  int action;
  int observation;
  bool operator==(const HistoryEntry&) const = default;
};

/// Action-observation history of one agent. Empty at t = 0.
struct LocalHistory {
  int agent = 0;
  std::vector<HistoryEntry> entries;

  int length() const { return static_cast<int>(entries.size()); }
  bool operator==(const LocalHistory&) const = default;
};

/// Returns h extended by (a, o). Throws std::out_of_range on a bad index or
/// when h already has `model.horizon` entries.
LocalHistory appendHistory(const DecPomdpModel& model, const LocalHistory& h, int a, int o);

struct JointHistory {
  std::vector<LocalHistory> perAgent;

  static JointHistory empty(int numAgents);
  int length() const;
  void append(std::span<const int> actions, std::span<const int> observations);
};

/// Canonical flat key of a local history: agent id, then (a, o) pairs.
using HistoryKey = std::vector<int>;

HistoryKey historyKey(const LocalHistory& h);
/// Markov key for fully observable models: agent, marker -1, time step and
/// the last observation (-1 at t = 0). Two histories with the same key have
/// the same current state.
HistoryKey markovKey(const LocalHistory& h);
HistoryKey jointHistoryKey(const JointHistory& jh);

struct KeyHash {
  std::size_t operator()(const std::vector<int>& k) const noexcept;
};

struct LocalHistoryHash {
  std::size_t operator()(const LocalHistory& h) const noexcept;
};

/// Local policy of one agent.
class Policy {
public:
  virtual ~Policy() = default;
  virtual int numActions() const = 0;
  /// Action distribution at h; sums to 1.
  virtual std::vector<double> distribution(const LocalHistory& h) const = 0;
  /// Deterministic policies must not consume randomness.
  virtual bool deterministic() const { return false; }
  virtual int act(const LocalHistory& h, Rng& rng) const;
  double prob(const LocalHistory& h, int a) const;
};

using JointPolicy = std::vector<std::shared_ptr<const Policy>>;

/// Distribution over joint actions chosen at a joint history (centralized
/// execution). Decentralized joint policies are a special case.
using JointController = std::function<std::vector<double>(const JointHistory&)>;

JointController jointControllerOf(const DecPomdpModel& model, const JointPolicy& policy);

/// Deterministic policy backed by a function of the local history.
class FunctionPolicy : public Policy {
public:
  FunctionPolicy(int numActions, std::function<int(const LocalHistory&)> fn);
  int numActions() const override { return numActions_; }
  std::vector<double> distribution(const LocalHistory& h) const override;
  bool deterministic() const override { return true; }
  int act(const LocalHistory& h, Rng& rng) const override;

private:
  int numActions_;
  std::function<int(const LocalHistory&)> fn_;
};

/// Stochastic policy backed by a function returning a distribution.
class StochasticFunctionPolicy : public Policy {
public:
  StochasticFunctionPolicy(int numActions,
                           std::function<std::vector<double>(const LocalHistory&)> fn);
  int numActions() const override { return numActions_; }
  std::vector<double> distribution(const LocalHistory& h) const override;

private:
  int numActions_;
  std::function<std::vector<double>(const LocalHistory&)> fn_;
};

std::shared_ptr<const Policy> constantPolicy(int numActions, int action);
std::shared_ptr<const Policy> uniformPolicy(int numActions);

struct EpisodeStep {
  std::vector<int> actions;
  std::vector<int> observations;
  int jointAction = 0;
  int jointObservation = 0;
  double reward = 0.0;
  int state = 0;      // hidden state before the step (diagnostics)
  int nextState = 0;
  bool done = false;
};

struct Episode {
  std::vector<EpisodeStep> steps;
  std::uint64_t seed = 0;

  int length() const { return static_cast<int>(steps.size()); }
  double totalReward(double gamma) const;
};

/// Maps the current joint history (and hidden state, which only centralized
/// learners may read) to per-agent actions.
using Controller = std::function<std::vector<int>(const JointHistory&, int state)>;

/// Runs one episode until the horizon (or a terminal state). Only `envRng`
/// is consumed by the environment.
Episode runEpisode(const DecPomdpModel& model, const Controller& controller, Rng& envRng);

/// Rollout of a joint policy. Uses rng.split(1) for the environment and
/// rng.split(2 + i) for agent i's action sampling.
Episode rollout(const DecPomdpModel& model, const JointPolicy& policy, const Rng& rng);

/// G_t = sum_{k>=t} gamma^{k-t} r_k.
double discountedReturn(const Episode& ep, int t, double gamma);

int argmaxLowest(std::span<const double> values);

/// With probability eps a uniform action, otherwise argmax (lowest index on
/// ties). Always draws exactly one uniform, plus one integer when exploring.
int epsilonGreedy(std::span<const double> q, double eps, Rng& rng);

} // namespace marl
