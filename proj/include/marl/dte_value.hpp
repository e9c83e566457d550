#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "marl/autodiff.hpp"
#include "marl/core.hpp"
#include "marl/learner.hpp"
#include "marl/nn.hpp"

namespace marl {

/// Map (history key, action) -> value with a default for unseen keys.
class TabularQ {
public:
  explicit TabularQ(int numActions = 1, double init = 0.0);

  int numActions() const { return numActions_; }
  double init() const { return init_; }
  /// Unseen keys return the default without inserting.
  double get(const HistoryKey& h, int a) const;
  std::vector<double> row(const HistoryKey& h) const;
  double maxValue(const HistoryKey& h) const;
  /// Reference to an entry, inserting the default row if needed.
  double& at(const HistoryKey& h, int a);
  bool contains(const HistoryKey& h) const { return table_.count(h) != 0; }
  std::size_t size() const { return table_.size(); }
  const std::unordered_map<HistoryKey, std::vector<double>, KeyHash>& table() const { return table_; }

private:
  int numActions_;
  double init_;
  std::unordered_map<HistoryKey, std::vector<double>, KeyHash> table_;
};

/// Stored coordination action per history for Distributed Q-learning.
using BestActionStore = std::unordered_map<HistoryKey, int, KeyHash>;

struct LenientState {
  double maxTemperature = 1.0;
  double decay = 0.995;  // lambda
  double K = 2.0;
  std::unordered_map<HistoryKey, std::vector<double>, KeyHash> temps;

  double temperature(const HistoryKey& h, int a) const;
  double& at(const HistoryKey& h, int a, int numActions);
};

/// All update rules return the TD error delta = r + gamma * max Q(h') - Q(h, a).
/// `next` == nullptr marks a terminal step (bootstrap 0).
double iqlUpdate(TabularQ& Q, const HistoryKey& h, int a, double r, const HistoryKey* next,
                 double alpha, double gamma);

/// Q(h,a) <- max(Q(h,a), r + gamma max Q(h')). When the entry increases and the
/// new value exceeds the previous maximum of the row, `store[h]` becomes a.
double distributedQUpdate(TabularQ& Q, BestActionStore* store, const HistoryKey& h, int a, double r,
                          const HistoryKey* next, double gamma);

/// Q += alpha * delta if delta > 0 else beta * delta. Requires 0 < beta <= alpha <= 1.
double hystereticUpdate(TabularQ& Q, const HistoryKey& h, int a, double r, const HistoryKey* next,
                        double alpha, double beta, double gamma);
void validateHysteresis(double alpha, double beta);

struct LenientOutcome {
  double delta = 0.0;
  bool applied = false;
};

/// Applies the update if delta > 0 or u > 1 - exp(-K T(h,a)); a uniform u is
/// drawn only when delta <= 0. T(h,a) then decays by lambda (on every visit,
/// or only after applied updates when decayOnlyAfterUpdate is set).
LenientOutcome lenientUpdate(TabularQ& Q, LenientState& L, const HistoryKey& h, int a, double r,
                             const HistoryKey* next, double alpha, double gamma, Rng& rng,
                             bool decayOnlyAfterUpdate = false);

enum class TabularAlgo { Iql, Distributed, Hysteretic, Lenient };

TabularAlgo tabularAlgoFromName(const std::string& name);

struct TabularConfig {
  TabularAlgo algo = TabularAlgo::Iql;
  int episodes = 1000;
  double alpha = 0.1;
  double beta = 0.01;
  /// Negative = use the model's discount.
  double gamma = -1.0;
  LinearSchedule epsilon{0.1, 0.1, 0};
  double qInit = 0.0;
  double maxTemperature = 1.0;
  double temperatureDecay = 0.995;
  double leniencyK = 2.0;
  bool decayOnlyAfterUpdate = false;
  /// Key histories by (t, last observation); valid for fully observable models.
  bool markovKeys = false;
  /// Ablation: each agent learns from its own rollout instead of a shared one.
  bool independentStreams = false;
  std::size_t memoryCap = 5'000'000;
};

struct TabularResult {
  std::vector<TabularQ> q;
  std::vector<BestActionStore> store;
  std::vector<LenientState> lenient;
  bool markovKeys = false;
  bool useStore = false;

  /// Greedy action of agent i at h (stored action for Distributed Q when
  /// present, else lowest-index argmax).
  int greedyAction(int agent, const LocalHistory& h) const;
  JointPolicy greedyPolicy(const DecPomdpModel& model) const;
};

/// Concurrent tabular learning. Random streams of the run seed: split(1)
/// environment, split(2 + i) agent i exploration, split(100 + i) agent i
/// leniency draws; with independent streams agent i's rollouts use
/// split(1000 + i) for the environment.
TabularResult trainTabular(const DecPomdpModel& model, const TabularConfig& cfg, std::uint64_t seed,
                           const EpisodeHook& hook = {});

// ------------------------------------------------------------------ deep

/// One agent's view of a stored episode.
struct LocalTrajectory {
  int agent = 0;
  std::vector<int> actions;
  std::vector<int> observations;
  std::vector<double> rewards;
  bool terminated = false;  // ended in a terminal state before the horizon

  int length() const { return static_cast<int>(actions.size()); }
  /// History of the first t steps.
  LocalHistory prefix(int t) const;
};

LocalTrajectory localTrajectory(const Episode& ep, int agent);

/// Per-agent episodic replay. Eviction drops the oldest episode.
class CertBuffer {
public:
  explicit CertBuffer(std::size_t capacity = 1000) : capacity_(capacity) {}

  void push(std::int64_t episodeId, LocalTrajectory traj);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return items_.empty(); }
  std::int64_t episodeId(std::size_t index) const { return items_.at(index).first; }
  const LocalTrajectory& trajectory(std::size_t index) const { return items_.at(index).second; }

private:
  std::size_t capacity_;
  std::deque<std::pair<std::int64_t, LocalTrajectory>> items_;
};

struct CertIndex {
  std::int64_t episodeId = 0;
  std::size_t slot = 0;
  int t = 0;
  bool operator==(const CertIndex&) const = default;
};

/// Throws std::logic_error unless all buffers hold the same (episode, length)
/// sequence.
void checkCertAlignment(const std::vector<CertBuffer>& buffers);

/// Samples one (episode, timestep) per agent. Every agent draws from its own
/// copy of `rng`, so aligned buffers give identical indices; `rng` is advanced
/// past the draws. Throws on misaligned or empty buffers.
std::vector<CertIndex> certSample(const std::vector<CertBuffer>& buffers, Rng& rng);

/// Samples (episode, timestep) from one buffer.
CertIndex sampleIndex(const CertBuffer& buffer, Rng& rng);

/// Squared TD loss of a recurrent Q-network at step t of a trajectory. The
/// hidden state is recomputed from the episode start; the target uses
/// `target` and carries no gradient. Writes the TD error to *delta when given.
ad::Var drqnLoss(ad::Graph& g, nn::RecurrentNet& net, nn::RecurrentNet& target,
                 const LocalTrajectory& traj, int t, double gamma, int nActions, int nObs,
                 double* delta = nullptr);

enum class ReplayMode {
  /// Sample (episode, t) windows.
  Sample,
  /// Sample an episode and train on its steps in order.
  Sequential,
};

struct DrqnConfig {
  int episodes = 2000;
  int hidden = 16;
  double lr = 0.005;
  /// Negative learning rate for hysteresis (only with hysteretic = true).
  double beta = 0.0005;
  bool hysteretic = false;
  /// Negative = use the model's discount.
  double gamma = -1.0;
  LinearSchedule epsilon{1.0, 0.05, 1000};
  int targetSync = 50;  // C, in episodes
  std::size_t bufferCapacity = 500;
  int updatesPerEpisode = 4;
  /// Shared sampling seed across agents (CERT). Off = independent sampling.
  bool cert = true;
  bool useReplay = true;
  ReplayMode replayMode = ReplayMode::Sample;
  bool adam = true;
  double gradClip = 10.0;
};

struct DrqnResult {
  std::vector<nn::RecurrentNet> nets;
  std::vector<nn::RecurrentNet> targets;
  /// Per update: (agent, TD error, learning rate used).
  struct UpdateRecord {
    int agent;
    double delta;
    double lr;
  };
  std::vector<UpdateRecord> updates;

  JointPolicy greedyPolicy(const DecPomdpModel& model) const;
};

/// IDRQN (cert = false, hysteretic = false) and Dec-HDRQN (cert = true,
/// hysteretic = true). Streams: split(1) environment, split(2 + i) agent i
/// exploration, split(100) shared CERT sampling (split(100 + i) per agent
/// when cert is off), split(200 + i) agent i initialisation.
DrqnResult trainDrqn(const DecPomdpModel& model, const DrqnConfig& cfg, std::uint64_t seed,
                     const EpisodeHook& hook = {}, bool recordUpdates = false);

} // namespace marl
