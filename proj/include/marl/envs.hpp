#pragma once

#include <array>
#include <vector>

#include "marl/core.hpp"

namespace marl {

namespace tiger {
inline constexpr int kTigerLeft = 0;
inline constexpr int kTigerRight = 1;
inline constexpr int kListen = 0;
inline constexpr int kOpenLeft = 1;
inline constexpr int kOpenRight = 2;
inline constexpr int kHearLeft = 0;
inline constexpr int kHearRight = 1;
} // namespace tiger

/// Two-agent Dec-Tiger. Listening keeps the state and each agent hears the
/// correct side with probability p independently; any door opening resets the
/// tiger uniformly and yields uniform observations.
DecPomdpModel makeDecTiger(int horizon, double p = 0.85, double discount = 1.0);

using PayoffMatrix = std::array<std::array<double, 3>, 3>;

/// Climb-style coordination game: optima (0,0) and (1,1) pay 11, the safe
/// action pair (2,2) pays 5, mixing the two optimal actions pays -30.
PayoffMatrix defaultClimbMatrix();

/// One-state, one-observation, horizon-1 game paying matrix[a0][a1].
DecPomdpModel makeClimbGame(const PayoffMatrix& matrix = defaultClimbMatrix(),
                            double rewardNoise = 0.0);
DecPomdpModel makeClimbGame(const std::vector<std::vector<double>>& matrix,
                            double rewardNoise = 0.0);

namespace grid {
inline constexpr int kStay = 0;
inline constexpr int kUp = 1;
inline constexpr int kDown = 2;
inline constexpr int kLeft = 3;
inline constexpr int kRight = 4;
} // namespace grid

/// Deterministic two-agent n x n grid. State = pos0 * n^2 + pos1 with
/// pos = row * n + col. Agent 0 starts top-left and must reach top-right,
/// agent 1 starts bottom-right and must reach bottom-left. Reward 1 on every
/// step that ends with both agents on their goal cells. Each agent observes
/// the state index.
DecPomdpModel makeGridMmdp(int n, int horizon = 4, double discount = 0.9);

/// Continuous-action rendezvous on the real line. Not a DecPomdpModel since
/// states, actions and observations are real valued.
class Rendezvous1D {
public:
  struct State {
    std::array<double, 2> x{};
  };
  struct StepResult {
    State next;
    double reward;
    std::array<double, 2> obs;
  };

  Rendezvous1D(int horizon, double noiseSigma = 0.1, double target = 0.0);

  int horizon() const { return horizon_; }
  double noiseSigma() const { return noiseSigma_; }
  double target() const { return target_; }
  static constexpr int numAgents() { return 2; }

  State reset(Rng& rng) const;
  std::array<double, 2> observe(const State& s, Rng& rng) const;
  double reward(const State& s) const;
  /// Actions are clipped to [-1, 1]; positions to [-5, 5]. The reward is
  /// evaluated on the post-move positions.
  StepResult step(const State& s, std::array<double, 2> actions, Rng& rng) const;

private:
  int horizon_;
  double noiseSigma_;
  double target_;
};

Rendezvous1D makeRendezvous(int horizon, double noiseSigma = 0.1);

} // namespace marl
