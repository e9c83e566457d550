#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "marl/autodiff.hpp"
#include "marl/dte_value.hpp"
#include "marl/envs.hpp"
#include "marl/learner.hpp"
#include "marl/nn.hpp"

namespace marl {

using ad::Graph;
using ad::Var;

/// What a critic conditions on.
enum class CriticKind { Local, Joint, State, HistoryState };

/// "local", "joint", "state" or "history-state".
CriticKind criticKindFromName(const std::string& name);
std::string criticKindName(CriticKind kind);

// ---------------------------------------------------------------- actors

/// Log-probabilities of a softmax actor after every prefix of `traj`
/// (entries 0..L-1; the full-length prefix is not needed for acting).
std::vector<Var> actorLogProbs(Graph& g, nn::RecurrentNet& actor, const LocalTrajectory& traj, int nA,
                               int nO);
std::vector<double> actorProbs(nn::RecurrentNet& actor, const LocalHistory& h, int nA, int nO);

/// Sampling policy backed by a copy of `actor`.
std::shared_ptr<const Policy> stochasticActorPolicy(const nn::RecurrentNet& actor, int nA, int nO);
/// Argmax (lowest index on ties) policy backed by a copy of `actor`.
std::shared_ptr<const Policy> greedyActorPolicy(const nn::RecurrentNet& actor, int nA, int nO);

// ------------------------------------------------------------- REINFORCE

/// Per-step coefficients of the score-function estimator: the actor term at
/// step t is coefficient[t] * grad log pi(a_t | h_t).
struct ReinforceEstimator {
  double gamma = 1.0;
  /// Multiply step t by gamma^t (off matches implementations that ignore it).
  bool discountActor = true;
  /// b(h_t); empty means no baseline.
  std::function<double(const LocalHistory&, int t)> baseline;

  /// gamma^t (G_t - b(h_t)). Throws std::invalid_argument on an incomplete
  /// episode (shorter than `horizon` and not terminated).
  std::vector<double> coefficients(const LocalTrajectory& traj, int horizon) const;
};

/// Replaces G by G - b(h). The baseline must not depend on the action.
ReinforceEstimator addBaseline(ReinforceEstimator est, std::function<double(const LocalHistory&, int)> b);

/// sum_t coefficient[t] * log pi_i(a_t | h_t); its gradient is the estimator.
Var reinforceSurrogate(Graph& g, nn::RecurrentNet& actor, const LocalTrajectory& traj,
                       const ReinforceEstimator& est, int horizon, int nA, int nO);

/// Same estimator on the joint policy: log pi(ja | jh) = sum_j log pi_j.
Var jointReinforceSurrogate(Graph& g, std::vector<nn::RecurrentNet>& actors, const DecPomdpModel& model,
                            const Episode& ep, const ReinforceEstimator& est);

/// One gradient-ascent step theta += alpha * grad surrogate.
void reinforceUpdate(nn::RecurrentNet& actor, const LocalTrajectory& traj, double alpha,
                     const ReinforceEstimator& est, int horizon, int nA, int nO);

// ---------------------------------------------------------- actor-critic

/// Independent actor-critic step on agent i's own history critic.
/// Returns delta; `actorLoss` = -gamma^t delta log pi, `criticLoss` = 0.5 delta^2
/// with no gradient through the bootstrap.
double iacTerms(Graph& g, nn::RecurrentNet& actor, nn::RecurrentNet& critic, const LocalTrajectory& traj,
                int t, double gamma, bool discountActor, int nA, int nO, Var* actorLoss, Var* criticLoss);

/// One IAC update (SGD, rates alpha for the actor and beta for the critic).
/// Throws if `kind` is not Local.
double iacStep(nn::RecurrentNet& actor, nn::RecurrentNet& critic, CriticKind kind, const LocalTrajectory& traj,
               int t, double alpha, double beta, double gamma, int nA, int nO);

/// Counterfactual advantage Q(jh, ja) - sum_a' pi_i(a') Q(jh, <a', ja_-i>).
/// `q` maps a joint action (per-agent digits) to a value.
double comaAdvantage(const std::function<double(const std::vector<int>&)>& q, const std::vector<int>& ja,
                     std::span<const double> piI, int agent);

// ------------------------------------------------------------------ PPO

/// min(r A, clip(r, 1-eps, 1+eps) A).
double ppoClipObjective(double ratio, double advantage, double eps);
/// Differentiable form with r = exp(logPiNew - logPiOld). Throws if the old
/// probability is zero.
Var ppoClipObjective(Graph& g, Var logPiNew, double logPiOld, double advantage, double eps);
/// max((V - R)^2, (clip(V, Vold - eps, Vold + eps) - R)^2), or the plain
/// squared error when clipping is off.
Var ppoValueLoss(Graph& g, Var v, double vOld, double target, double eps, bool clipValue);

/// One collected sample for the clipped losses.
struct PpoSample {
  Var logPi;          // new policy log-prob of the taken action
  double logPiOld;    // recorded at collection
  double advantage;
  Var value;          // new critic output
  double valueOld;
  double target;      // return estimate
};

/// Negated mean clipped objective.
Var mappoActorLoss(Graph& g, std::span<const PpoSample> batch, double eps);
/// Mean clipped value loss.
Var mappoCriticLoss(Graph& g, std::span<const PpoSample> batch, double eps, bool clipValue);

// ------------------------------------------------------------ trainers

enum class PgAlgo { Reinforce, Iac, Iacc, Ia2cc, Coma, Mappo, Ippo };

/// "reinforce", "iac", "iacc", "ia2cc", "coma", "mappo", "ippo".
PgAlgo pgAlgoFromName(const std::string& name);

struct PgConfig {
  PgAlgo algo = PgAlgo::Ia2cc;
  /// Defaults per algorithm when unset: local for iac/ippo/reinforce, joint otherwise.
  std::optional<CriticKind> critic;
  int episodes = 3000;
  int hidden = 16;
  double actorLr = 0.005;
  double criticLr = 0.01;
  double gamma = -1.0;  // negative: use the model discount
  bool discountActor = true;
  bool adam = true;
  /// Episodes collected before each update.
  int batchEpisodes = 1;
  /// REINFORCE: subtract a running mean of returns.
  bool reinforceBaseline = true;
  double entropyCoef = 0.0;
  // PPO
  double clipEps = 0.2;
  int epochs = 4;
  bool valueClip = true;
  bool shareParameters = true;
  double gradClip = 10.0;
};

struct PgResult {
  std::vector<nn::RecurrentNet> actors;  // one per agent (copies when shared)
  JointPolicy greedyPolicy(const DecPomdpModel& model) const;
  JointPolicy stochasticPolicy(const DecPomdpModel& model) const;
};

PgResult trainPolicyGradient(const DecPomdpModel& model, const PgConfig& cfg, std::uint64_t seed,
                             const EpisodeHook& hook = {});

// --------------------------------------------------------------- MADDPG

/// Deterministic actors mu_i(h_i) in [-1, 1] and a joint critic Q(jh, a).
/// The history input per step is (previous own action, observation).
struct MaddpgNets {
  std::vector<nn::RecurrentNet> actors;
  nn::RecurrentNet critic;

  MaddpgNets() = default;
  MaddpgNets(int numAgents, int hidden, Rng& rng);

  int numAgents() const { return static_cast<int>(actors.size()); }
  /// tanh-squashed action after the full local input sequence.
  Var action(Graph& g, int agent, const std::vector<std::vector<double>>& localInputs);
  Var q(Graph& g, const std::vector<std::vector<double>>& jointInputs, Var actions);
};

/// A continuous-action transition history for one episode.
struct ContinuousEpisode {
  std::vector<std::array<double, 2>> obs;      // obs[t] seen before acting at t (t = 0..L)
  std::vector<std::array<double, 2>> actions;  // behavior actions (t = 0..L-1)
  std::vector<double> rewards;

  int length() const { return static_cast<int>(actions.size()); }
  /// Agent i's inputs for the history ending at t: (a_{k-1}, o_k), k = 0..t, a_{-1} = 0.
  std::vector<std::vector<double>> localInputs(int agent, int t) const;
  std::vector<std::vector<double>> jointInputs(int t) const;
};

/// Q(jh, <mu_i(h_i), a_-i>) as a function of actor i's parameters; maximizing
/// it gives the actor gradient through the critic.
Var maddpgActorObjective(Graph& g, MaddpgNets& nets, const ContinuousEpisode& ep, int t, int agent);
/// (y - Q(jh, a))^2 with y = r + gamma Q_target(jh', mu_target(h')) computed
/// in `gt` and detached.
Var maddpgCriticLoss(Graph& g, Graph& gt, MaddpgNets& nets, MaddpgNets& target, const ContinuousEpisode& ep,
                     int t, double gamma, int horizon);

struct MaddpgConfig {
  int episodes = 2000;
  int hidden = 16;
  double actorLr = 0.001;
  double criticLr = 0.005;
  double gamma = 0.95;
  double noiseSigma = 0.3;
  double tau = 0.05;  // soft target update rate
  int bufferCapacity = 500;
  int batchEpisodes = 8;
  double gradClip = 10.0;
};

struct MaddpgResult {
  MaddpgNets nets;
  /// Noise-free mean return over `episodes` rollouts on split streams of `seed`.
  double evaluate(const Rendezvous1D& env, int episodes, std::uint64_t seed, double gamma) const;
};

/// Runs one episode; `noiseSigma` = 0 gives the evaluation behavior.
ContinuousEpisode rolloutMaddpg(const Rendezvous1D& env, MaddpgNets& nets, double noiseSigma, Rng& envRng,
                                Rng& noiseRng);

MaddpgResult trainMaddpg(const Rendezvous1D& env, const MaddpgConfig& cfg, std::uint64_t seed,
                         const std::function<void(const EpisodeStats&, double evalReturn)>& hook = {},
                         int evalEvery = 0, int evalEpisodes = 10);

} // namespace marl
