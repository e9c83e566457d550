#pragma once

#include <functional>

#include "marl/core.hpp"

namespace marl {

/// Per-episode training statistics reported by every trainer.
struct EpisodeStats {
  int episode = 0;
  double trainReturn = 0.0;
  /// Mean loss (or mean |TD error| for tabular learners) over the episode's updates.
  double loss = 0.0;
  /// Exploration level in force (epsilon, policy entropy or noise sigma).
  double explore = 0.0;
};

/// Noise-free evaluation policy. Decentralized learners fill `policy`;
/// centralized ones only `controller`.
struct EvalPolicy {
  JointPolicy policy;
  JointController controller;

  static EvalPolicy of(const DecPomdpModel& model, JointPolicy p) {
    EvalPolicy e;
    e.controller = jointControllerOf(model, p);
    e.policy = std::move(p);
    return e;
  }
};

using GreedyFn = std::function<EvalPolicy()>;
/// Called after every training episode; `greedy` builds the current
/// evaluation policy on demand.
using EpisodeHook = std::function<void(const EpisodeStats&, const GreedyFn& greedy)>;

/// Linear interpolation from `start` to `end` over `steps` episodes, then flat.
struct LinearSchedule {
  double start = 1.0;
  double end = 0.05;
  int steps = 0;

  double at(int k) const {
    if (steps <= 0 || k >= steps) {
      return steps <= 0 ? start : end;
    }
    return start + (end - start) * static_cast<double>(k) / steps;
  }
};

} // namespace marl
