#include "marl/envs.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace marl {

DecPomdpModel makeDecTiger(int horizon, double p, double discount) {
  using namespace tiger;
  if (!(p > 0.5 && p <= 1.0)) {
    throw std::invalid_argument("makeDecTiger: p must lie in (0.5, 1]");
  }
  if (horizon <= 0) {
    throw std::invalid_argument("makeDecTiger: horizon must be positive");
  }
  DecPomdpModel m;
  m.name = "dectiger";
  m.numAgents = 2;
  m.numStates = 2;
  m.numActions = {3, 3};
  m.numObservations = {2, 2};
  m.initialBelief = {0.5, 0.5};
  m.horizon = horizon;
  m.discount = discount;
  m.allocate();

  const int nJA = m.numJointActions();
  for (int s = 0; s < 2; ++s) {
    const int wrongDoor = (s == kTigerLeft) ? kOpenLeft : kOpenRight;
    for (int ja = 0; ja < nJA; ++ja) {
      const auto a = m.splitJointAction(ja);
      double r = 0.0;
      if (a[0] == kListen && a[1] == kListen) {
        r = -2.0;
      } else if (a[0] == kListen || a[1] == kListen) {
        const int opened = (a[0] == kListen) ? a[1] : a[0];
        r = (opened == wrongDoor) ? -101.0 : 9.0;
      } else if (a[0] != a[1]) {
        r = -100.0;
      } else {
        r = (a[0] == wrongDoor) ? -50.0 : 20.0;
      }
      m.R[s * nJA + ja] = r;
      const bool bothListen = (ja == 0);
      for (int s2 = 0; s2 < 2; ++s2) {
        m.T[(s * nJA + ja) * 2 + s2] = bothListen ? (s2 == s ? 1.0 : 0.0) : 0.5;
      }
    }
  }
  for (int ja = 0; ja < nJA; ++ja) {
    const bool bothListen = (ja == 0);
    for (int s2 = 0; s2 < 2; ++s2) {
      for (int jo = 0; jo < 4; ++jo) {
        double pr = 0.25;
        if (bothListen) {
          const auto o = m.splitJointObservation(jo);
          const int correct = (s2 == kTigerLeft) ? kHearLeft : kHearRight;
          pr = (o[0] == correct ? p : 1.0 - p) * (o[1] == correct ? p : 1.0 - p);
        }
        m.O[(ja * 2 + s2) * 4 + jo] = pr;
      }
    }
  }
  m.validate();
  return m;
}

PayoffMatrix defaultClimbMatrix() {
  return {{{11.0, -30.0, 0.0}, {-30.0, 11.0, 0.0}, {0.0, 0.0, 5.0}}};
}

DecPomdpModel makeClimbGame(const PayoffMatrix& matrix, double rewardNoise) {
  if (rewardNoise < 0.0) {
    throw std::invalid_argument("makeClimbGame: reward noise must be non-negative");
  }
  DecPomdpModel m;
  m.name = "climb";
  m.numAgents = 2;
  m.numStates = 1;
  m.numActions = {3, 3};
  m.numObservations = {1, 1};
  m.initialBelief = {1.0};
  m.horizon = 1;
  m.discount = 1.0;
  m.rewardNoise = rewardNoise;
  m.allocate();
  for (int ja = 0; ja < 9; ++ja) {
    m.R[ja] = matrix[ja / 3][ja % 3];
    m.T[ja] = 1.0;
    m.O[ja] = 1.0;
  }
  m.validate();
  return m;
}

DecPomdpModel makeClimbGame(const std::vector<std::vector<double>>& matrix, double rewardNoise) {
  if (matrix.size() != 3) {
    throw std::invalid_argument("makeClimbGame: payoff matrix must be 3x3");
  }
  PayoffMatrix pm{};
  for (int i = 0; i < 3; ++i) {
    if (matrix[i].size() != 3) {
      throw std::invalid_argument("makeClimbGame: payoff matrix must be 3x3");
    }
    for (int j = 0; j < 3; ++j) {
      pm[i][j] = matrix[i][j];
    }
  }
  return makeClimbGame(pm, rewardNoise);
}

namespace {

int moveOnGrid(int pos, int action, int n) {
  int r = pos / n;
  int c = pos % n;
  switch (action) {
  case grid::kUp:
    r = std::max(0, r - 1);
    break;
  case grid::kDown:
    r = std::min(n - 1, r + 1);
    break;
  case grid::kLeft:
    c = std::max(0, c - 1);
    break;
  case grid::kRight:
    c = std::min(n - 1, c + 1);
    break;
  default:
    break;
  }
  return r * n + c;
}

} // namespace

DecPomdpModel makeGridMmdp(int n, int horizon, double discount) {
  if (n < 2) {
    throw std::invalid_argument("makeGridMmdp: n must be at least 2");
  }
  if (horizon <= 0) {
    throw std::invalid_argument("makeGridMmdp: horizon must be positive");
  }
  const int cells = n * n;
  DecPomdpModel m;
  m.name = "gridmmdp";
  m.numAgents = 2;
  m.numStates = cells * cells;
  m.numActions = {5, 5};
  m.numObservations = {m.numStates, m.numStates};
  m.horizon = horizon;
  m.discount = discount;
  m.fullyObservable = true;

  const int nS = m.numStates;
  const int nJA = 25;
  m.allocate();

  const int start0 = 0;
  const int start1 = (n - 1) * n + (n - 1);
  const int goal0 = n - 1;
  const int goal1 = (n - 1) * n;
  m.initialBelief.assign(nS, 0.0);
  m.initialBelief[start0 * cells + start1] = 1.0;

  for (int s = 0; s < nS; ++s) {
    const int p0 = s / cells;
    const int p1 = s % cells;
    for (int ja = 0; ja < nJA; ++ja) {
      const int q0 = moveOnGrid(p0, ja / 5, n);
      const int q1 = moveOnGrid(p1, ja % 5, n);
      const int s2 = q0 * cells + q1;
      m.T[(static_cast<std::size_t>(s) * nJA + ja) * nS + s2] = 1.0;
      m.R[static_cast<std::size_t>(s) * nJA + ja] = (q0 == goal0 && q1 == goal1) ? 1.0 : 0.0;
    }
  }
  m.validate();
  return m;
}

Rendezvous1D::Rendezvous1D(int horizon, double noiseSigma, double target)
    : horizon_(horizon), noiseSigma_(noiseSigma), target_(target) {
  if (horizon <= 0) {
    throw std::invalid_argument("Rendezvous1D: horizon must be positive");
  }
  if (noiseSigma < 0.0) {
    throw std::invalid_argument("Rendezvous1D: noise sigma must be non-negative");
  }
}

Rendezvous1D::State Rendezvous1D::reset(Rng& rng) const {
  State s;
  for (auto& x : s.x) {
    x = -3.0 + 6.0 * rng.uniform();
  }
  return s;
}

std::array<double, 2> Rendezvous1D::observe(const State& s, Rng& rng) const {
  std::array<double, 2> o{};
  for (int i = 0; i < 2; ++i) {
    o[i] = s.x[i] + (noiseSigma_ > 0.0 ? noiseSigma_ * rng.normal() : 0.0);
  }
  return o;
}

double Rendezvous1D::reward(const State& s) const {
  const double apart = std::abs(s.x[0] - s.x[1]);
  const double toTarget = 0.5 * (std::abs(s.x[0] - target_) + std::abs(s.x[1] - target_));
  return -apart - toTarget;
}

Rendezvous1D::StepResult Rendezvous1D::step(const State& s, std::array<double, 2> actions,
                                            Rng& rng) const {
  StepResult out;
  for (int i = 0; i < 2; ++i) {
    const double a = std::clamp(actions[i], -1.0, 1.0);
    out.next.x[i] = std::clamp(s.x[i] + a, -5.0, 5.0);
  }
  out.reward = reward(out.next);
  out.obs = observe(out.next, rng);
  return out;
}

Rendezvous1D makeRendezvous(int horizon, double noiseSigma) {
  return Rendezvous1D(horizon, noiseSigma);
}

} // namespace marl
