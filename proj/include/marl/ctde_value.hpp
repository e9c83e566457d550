#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "marl/autodiff.hpp"
#include "marl/core.hpp"
#include "marl/learner.hpp"
#include "marl/nn.hpp"

namespace marl {

using ad::Graph;
using ad::Var;

/// Sum of chosen per-agent utilities.
Var vdnMix(Graph& g, std::span<const Var> chosen);

/// Monotonic mixer. Two-layer form:
///   hidden = elu(|W1(s)| q + b1(s)),  Q_tot = |w2(s)| . hidden + V(s)
/// One-layer form: Q_tot = |w(s)| . q + b(s). Hypernetwork weights pass
/// through positiveWeights; biases are unconstrained.
class QmixMixer {
public:
  QmixMixer() = default;
  QmixMixer(int numAgents, int stateDim, int embed, Rng& rng, bool oneLayer = false);

  ad::ParamStore params;

  /// q: vector of chosen utilities (size numAgents); state: conditioning input.
  Var forward(Graph& g, Var q, Var state);
  int numAgents() const { return n_; }
  int stateDim() const { return stateDim_; }
  bool oneLayer() const { return oneLayer_; }
  /// Parameter ids, exposed for tests that pin weights.
  nn::Hypernet w1, w2;
  nn::Linear b1, vHidden, vOut;

private:
  int n_ = 0;
  int stateDim_ = 0;
  int embed_ = 0;
  bool oneLayer_ = false;
};

/// Advantage-based mixer:
///   V_i = max_a Q_i,  A_i = Q_i(a_i) - V_i
///   Q_tot = sum_i [w_i(s) V_i + b_i(s)] + sum_i lambda_i(s, ja) w_i(s) A_i
/// with w_i = |.| + 1e-6 and lambda_i = |.| + 1e-6. lambda_i is a single
/// dense layer over [s; onehot(ja)].
class QplexMixer {
public:
  QplexMixer() = default;
  QplexMixer(int numAgents, int stateDim, int numJointActions, Rng& rng);

  ad::ParamStore params;

  struct Output {
    Var qtot;
    Var values;     // sum_i V_i(h_i, s)
    Var advantage;  // sum_i lambda_i A_i(h_i, s, a_i)
  };

  Output forward(Graph& g, std::span<const Var> qRows, std::span<const int> actions, int ja, Var state);
  Var weights(Graph& g, Var state);
  Var lambdas(Graph& g, Var state, int ja);

  nn::Linear wLin, bLin, lambdaLin;

private:
  int n_ = 0;
  int stateDim_ = 0;
  int nJA_ = 0;
};

/// Tie-tolerant IGM: true iff the tuple of per-agent argmaxes (lowest index)
/// attains the maximum of jointQ over all joint actions.
bool igmCheck(const std::function<double(const std::vector<int>&)>& jointQ,
              const std::vector<std::vector<double>>& perAgentQ, double tol = 1e-12);

enum class WqmixWeighting { Central, Optimistic };

/// CW: 1 if y > qStarAtGreedy or the taken action is the greedy tuple, else alpha.
/// OW: 1 if y > qtot, else alpha.
double wqmixWeight(WqmixWeighting kind, double alpha, double y, double qtot, double qStarAtGreedy,
                   bool actionIsGreedy);

struct WqmixLosses {
  Var central;
  Var tot;
};

/// Both Weighted-QMIX losses for one sample given the shared target y.
WqmixLosses wqmixLosses(Graph& g, Var qStar, Var qtot, double y, double weight);

enum class QtranVariant { Base, Alt };

struct QtranTerms {
  Var total;
  Var td;
  Var opt;
  Var nopt;
};

/// QTRAN losses for one sample. qRows: per-agent utility rows; jointQ: joint
/// network output over all joint actions; V: value head (scalar); ja: taken
/// joint action; y: TD target. Qbar (detached jointQ) is used in L_opt and
/// L_nopt.
QtranTerms qtranLosses(Graph& g, const DecPomdpModel& model, std::span<const Var> qRows, Var jointQ,
                       Var V, int ja, double y, QtranVariant variant, double lambdaOpt = 1.0,
                       double lambdaNopt = 1.0);
/// The same with explicit per-agent action counts (for tables without a model).
QtranTerms qtranLosses(Graph& g, const std::vector<int>& numActions, std::span<const Var> qRows,
                       Var jointQ, Var V, int ja, double y, QtranVariant variant,
                       double lambdaOpt = 1.0, double lambdaNopt = 1.0);

enum class FactorAlgo { Vdn, Qmix, WqmixCw, WqmixOw, Qtran, QtranAlt, Qplex };

FactorAlgo factorAlgoFromName(const std::string& name);

enum class MixerInput {
  /// One-hot of the true environment state.
  State,
  /// Concatenated (detached) hidden states of the agent networks.
  History,
};

struct FactorConfig {
  FactorAlgo algo = FactorAlgo::Vdn;
  int episodes = 2000;
  int hidden = 16;
  int embed = 8;
  double lr = 0.005;
  double gamma = -1.0;  // negative = model discount
  LinearSchedule epsilon{1.0, 0.05, 1000};
  int targetSync = 50;
  std::size_t bufferCapacity = 500;
  int batchEpisodes = 8;
  int updatesPerEpisode = 1;
  double wqmixAlpha = 0.1;
  double lambdaOpt = 1.0;
  double lambdaNopt = 1.0;
  MixerInput mixerInput = MixerInput::State;
  bool qmixOneLayer = false;
  double gradClip = 10.0;
};

struct FactorResult {
  std::vector<nn::RecurrentNet> agents;
  JointPolicy greedyPolicy(const DecPomdpModel& model) const;
};

/// Shared CTDE loop with joint replay of full episodes. Streams: split(1)
/// environment, split(2 + i) agent i exploration, split(100) replay
/// sampling, split(200 + i) agent i initialisation, split(300) mixer and
/// central network initialisation.
FactorResult trainFactorized(const DecPomdpModel& model, const FactorConfig& cfg, std::uint64_t seed,
                             const EpisodeHook& hook = {});

} // namespace marl
