#pragma once

// Hyperparameters and thresholds fixed by calibration runs against the exact
// oracle. Changing a learner's arithmetic or RNG stream layout invalidates
// them; rerun the sweeps with tools/calibrate.cpp and update together.
// Seeds are always 0..n-1.

namespace marl::calib {

// Hysteretic IQL on Dec-Tiger H=2. Mild hysteresis only: with beta << alpha
// the learners ignore the -100 openings and converge to opening policies.
inline constexpr int kHystTigerEpisodes = 3000;
inline constexpr double kHystTigerAlpha = 0.05;
inline constexpr double kHystTigerBeta = 0.04;
inline constexpr double kHystTigerEpsilon = 0.1;
inline constexpr int kHystTigerMinGood = 80;  // observed 88/100

// VDN on Dec-Tiger H=2, success = within 1.0 of the optimum.
inline constexpr int kVdnTigerEpisodes = 3000;
inline constexpr double kVdnTigerLr = 0.01;
inline constexpr int kVdnTigerEpsSteps = 2850;
inline constexpr int kVdnTigerMinGood = 70;  // observed 87/100

// QPLEX on Climb: low exploration from the start. Near-uniform exploration
// averages the -30 miscoordination into both optimal actions.
inline constexpr int kQplexClimbEpisodes = 2000;
inline constexpr double kQplexClimbLr = 0.05;
inline constexpr double kQplexClimbEpsStart = 0.1;
inline constexpr int kQplexClimbEpsSteps = 200;
inline constexpr int kQplexClimbMinGood = 80;  // observed 91/100

// IPPO on Climb. Without an entropy bonus the shared gradient at the uniform
// policy points at the safe action and at most ~40% of seeds reach 11.
inline constexpr int kIppoClimbEpisodes = 1000;
inline constexpr double kIppoClimbLr = 0.05;
inline constexpr double kIppoClimbEntropy = 2.0;
inline constexpr int kIppoClimbMinGood = 60;  // observed 83/100

// Centralized joint Q-learning on GridMmdp 3x3 (H=4), alpha=1, uniform
// exploration. Deterministic dynamics make alpha=1 exact once visited.
inline constexpr int kCentralGridEpisodes = 200000;

// Distributed Q on GridMmdp 3x3 (H=4) with Markov keys and uniform exploration.
inline constexpr int kDistGridEpisodes = 20000;

// Tabular learners on Climb, shared hyperparameters.
inline constexpr int kClimbEpisodes = 2000;
inline constexpr double kClimbAlpha = 0.1;
inline constexpr double kClimbBeta = 0.01;
inline constexpr double kClimbEpsilon = 0.2;
inline constexpr int kClimbDistMin = 95;

// IA2CC on Dec-Tiger H=3 with plain SGD: history-state vs state-only critic.
// The state critic's seeds split between always-listen and opening policies;
// tight gradient clipping keeps the history-state runs from the same collapse.
inline constexpr int kCriticBiasEpisodes = 2000;
inline constexpr double kCriticBiasActorLr = 0.05;
inline constexpr double kCriticBiasCriticLr = 0.03;
inline constexpr double kCriticBiasGradClip = 1.0;
inline constexpr int kCriticBiasHistoryMin = 70;  // observed 100/100
inline constexpr int kCriticBiasStateMax = 50;    // observed 35/100

// Dec-HDRQN vs IDRQN without CERT on Dec-Tiger H=3, 20 seeds, mean greedy
// value. Tuned for IDRQN first (lr sweep .003-.05), then beta/alpha in
// {.3, .5, .6, .8, .9} for Dec-HDRQN. Best observed means: IDRQN -9.5,
// Dec-HDRQN -13.75 (100 seeds: -9.0 vs -10.7). Most seeds of both settle on
// always-listen (-6). The asserted direction does not hold here; the test is
// kept failing as a record rather than tuned until it passes.
inline constexpr int kHdrqnEpisodes = 3000;
inline constexpr int kHdrqnEpsSteps = 2500;
inline constexpr double kHdrqnLr = 0.02;
inline constexpr double kHdrqnBeta = 0.018;

} // namespace marl::calib
