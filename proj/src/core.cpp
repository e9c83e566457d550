#include "marl/core.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace marl {

int mixedRadixIndex(std::span<const int> digits, std::span<const int> radix) {
  if (digits.size() != radix.size()) {
    throw std::invalid_argument("mixedRadixIndex: size mismatch");
  }
  int idx = 0;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (digits[i] < 0 || digits[i] >= radix[i]) {
      throw std::out_of_range("mixedRadixIndex: digit " + std::to_string(digits[i]) +
                              " out of range for position " + std::to_string(i));
    }
    idx = idx * radix[i] + digits[i];
  }
  return idx;
}

std::vector<int> mixedRadixDigits(int index, std::span<const int> radix) {
  std::vector<int> digits(radix.size());
  for (std::size_t i = radix.size(); i-- > 0;) {
    digits[i] = index % radix[i];
    index /= radix[i];
  }
  return digits;
}

namespace {

int product(const std::vector<int>& v) {
  int p = 1;
  for (int x : v) {
    p *= x;
  }
  return p;
}

void checkDistribution(std::span<const double> p, const std::string& what) {
  double sum = 0.0;
  for (double x : p) {
    if (!(x >= 0.0)) {
      throw std::invalid_argument(what + ": negative or NaN probability");
    }
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    throw std::invalid_argument(what + ": probabilities sum to " + std::to_string(sum));
  }
}

} // namespace

int DecPomdpModel::numJointActions() const { return product(numActions); }
int DecPomdpModel::numJointObservations() const { return product(numObservations); }

int DecPomdpModel::jointAction(std::span<const int> actions) const {
  return mixedRadixIndex(actions, numActions);
}

std::vector<int> DecPomdpModel::splitJointAction(int ja) const {
  return mixedRadixDigits(ja, numActions);
}

int DecPomdpModel::jointObservation(std::span<const int> obs) const {
  return mixedRadixIndex(obs, numObservations);
}

std::vector<int> DecPomdpModel::splitJointObservation(int jo) const {
  return mixedRadixDigits(jo, numObservations);
}

void DecPomdpModel::allocate() {
  const std::size_t nS = numStates;
  const std::size_t nJA = numJointActions();
  const std::size_t nJO = numJointObservations();
  T.assign(nS * nJA * nS, 0.0);
  R.assign(nS * nJA, 0.0);
  if (fullyObservable) {
    O.clear();
  } else {
    O.assign(nJA * nS * nJO, 0.0);
  }
}

int DecPomdpModel::identityObservation(int s) const {
  int jo = 0;
  for (int i = 0; i < numAgents; ++i) {
    jo = jo * numStates + s;
  }
  return jo;
}

void DecPomdpModel::validate() const {
  if (numAgents <= 0) {
    throw std::invalid_argument("model: numAgents must be positive");
  }
  if (static_cast<int>(numActions.size()) != numAgents ||
      static_cast<int>(numObservations.size()) != numAgents) {
    throw std::invalid_argument("model: per-agent set count differs from numAgents");
  }
  for (int i = 0; i < numAgents; ++i) {
    if (numActions[i] <= 0 || numObservations[i] <= 0) {
      throw std::invalid_argument("model: empty action or observation set");
    }
  }
  if (numStates <= 0 || horizon <= 0) {
    throw std::invalid_argument("model: numStates and horizon must be positive");
  }
  if (!(discount >= 0.0 && discount <= 1.0)) {
    throw std::invalid_argument("model: discount outside [0,1]");
  }
  if (static_cast<int>(initialBelief.size()) != numStates) {
    throw std::invalid_argument("model: initial belief has wrong size");
  }
  checkDistribution(initialBelief, "initial belief");
  const int nJA = numJointActions();
  const int nJO = numJointObservations();
  if (fullyObservable) {
    for (int i = 0; i < numAgents; ++i) {
      if (numObservations[i] != numStates) {
        throw std::invalid_argument("model: fully observable agents need one observation per state");
      }
    }
  }
  const std::size_t expectedO =
      fullyObservable ? 0 : static_cast<std::size_t>(nJA) * numStates * nJO;
  if (T.size() != static_cast<std::size_t>(numStates) * nJA * numStates ||
      R.size() != static_cast<std::size_t>(numStates) * nJA || O.size() != expectedO) {
    throw std::invalid_argument("model: table sizes inconsistent with dimensions");
  }
  for (int s = 0; s < numStates; ++s) {
    for (int ja = 0; ja < nJA; ++ja) {
      checkDistribution(
          std::span<const double>(&T[(static_cast<std::size_t>(s) * nJA + ja) * numStates],
                                  numStates),
          "transition(s=" + std::to_string(s) + ",ja=" + std::to_string(ja) + ")");
    }
  }
  for (int ja = 0; ja < nJA && !fullyObservable; ++ja) {
    for (int s2 = 0; s2 < numStates; ++s2) {
      checkDistribution(
          std::span<const double>(&O[(static_cast<std::size_t>(ja) * numStates + s2) * nJO], nJO),
          "observation(ja=" + std::to_string(ja) + ",s'=" + std::to_string(s2) + ")");
    }
  }
  if (!terminal.empty() && static_cast<int>(terminal.size()) != numStates) {
    throw std::invalid_argument("model: terminal predicate has wrong size");
  }
}

int DecPomdpModel::sampleInitialState(Rng& rng) const { return rng.categorical(initialBelief); }

DecPomdpModel::StepResult DecPomdpModel::step(int s, int ja, Rng& rng) const {
  const int nJA = numJointActions();
  if (ja < 0 || ja >= nJA) {
    throw std::out_of_range("step: joint action out of range");
  }
  StepResult out{};
  out.nextState = rng.categorical(
      std::span<const double>(&T[(static_cast<std::size_t>(s) * nJA + ja) * numStates], numStates));
  out.reward = reward(s, ja);
  if (rewardNoise > 0.0) {
    out.reward += rewardNoise * rng.normal();
  }
  if (fullyObservable) {
    out.jointObservation = identityObservation(out.nextState);
  } else {
    const int nJO = numJointObservations();
    out.jointObservation = rng.categorical(std::span<const double>(
        &O[(static_cast<std::size_t>(ja) * numStates + out.nextState) * nJO], nJO));
  }
  out.done = !terminal.empty() && terminal[out.nextState];
  return out;
}

LocalHistory appendHistory(const DecPomdpModel& model, const LocalHistory& h, int a, int o) {
  if (h.agent < 0 || h.agent >= model.numAgents) {
    throw std::out_of_range("appendHistory: agent id out of range");
  }
  if (a < 0 || a >= model.numActions[h.agent]) {
    throw std::out_of_range("appendHistory: action " + std::to_string(a) + " out of range");
  }
  if (o < 0 || o >= model.numObservations[h.agent]) {
    throw std::out_of_range("appendHistory: observation " + std::to_string(o) + " out of range");
  }
  if (h.length() >= model.horizon) {
    throw std::out_of_range("appendHistory: history already at horizon " +
                            std::to_string(model.horizon));
  }
  LocalHistory out = h;
  out.entries.push_back({a, o});
  return out;
}

JointHistory JointHistory::empty(int numAgents) {
  JointHistory jh;
  jh.perAgent.resize(numAgents);
  for (int i = 0; i < numAgents; ++i) {
    jh.perAgent[i].agent = i;
  }
  return jh;
}

int JointHistory::length() const { return perAgent.empty() ? 0 : perAgent[0].length(); }

void JointHistory::append(std::span<const int> actions, std::span<const int> observations) {
  if (actions.size() != perAgent.size() || observations.size() != perAgent.size()) {
    throw std::invalid_argument("JointHistory::append: agent count mismatch");
  }
  for (std::size_t i = 0; i < perAgent.size(); ++i) {
    perAgent[i].entries.push_back({actions[i], observations[i]});
  }
}

HistoryKey historyKey(const LocalHistory& h) {
  HistoryKey k;
  k.reserve(1 + 2 * h.entries.size());
  k.push_back(h.agent);
  for (const auto& e : h.entries) {
    k.push_back(e.action);
    k.push_back(e.observation);
  }
  return k;
}

HistoryKey markovKey(const LocalHistory& h) {
  const int last = h.entries.empty() ? -1 : h.entries.back().observation;
  return {h.agent, -1, h.length(), last};
}

HistoryKey jointHistoryKey(const JointHistory& jh) {
  HistoryKey k;
  for (const auto& h : jh.perAgent) {
    k.push_back(h.length());
    for (const auto& e : h.entries) {
      k.push_back(e.action);
      k.push_back(e.observation);
    }
  }
  return k;
}

std::size_t KeyHash::operator()(const std::vector<int>& k) const noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ k.size();
  for (int x : k) {
    h = splitmix64(h ^ static_cast<std::uint32_t>(x));
  }
  return static_cast<std::size_t>(h);
}

std::size_t LocalHistoryHash::operator()(const LocalHistory& h) const noexcept {
  return KeyHash{}(historyKey(h));
}

int Policy::act(const LocalHistory& h, Rng& rng) const {
  const auto d = distribution(h);
  return rng.categorical(d);
}

double Policy::prob(const LocalHistory& h, int a) const {
  const auto d = distribution(h);
  if (a < 0 || a >= static_cast<int>(d.size())) {
    throw std::out_of_range("Policy::prob: action out of range");
  }
  return d[a];
}

FunctionPolicy::FunctionPolicy(int numActions, std::function<int(const LocalHistory&)> fn)
    : numActions_(numActions), fn_(std::move(fn)) {}

std::vector<double> FunctionPolicy::distribution(const LocalHistory& h) const {
  std::vector<double> d(numActions_, 0.0);
  const int a = fn_(h);
  if (a < 0 || a >= numActions_) {
    throw std::out_of_range("policy returned invalid action " + std::to_string(a));
  }
  d[a] = 1.0;
  return d;
}

int FunctionPolicy::act(const LocalHistory& h, Rng&) const {
  const int a = fn_(h);
  if (a < 0 || a >= numActions_) {
    throw std::out_of_range("policy returned invalid action " + std::to_string(a));
  }
  return a;
}

StochasticFunctionPolicy::StochasticFunctionPolicy(
    int numActions, std::function<std::vector<double>(const LocalHistory&)> fn)
    : numActions_(numActions), fn_(std::move(fn)) {}

std::vector<double> StochasticFunctionPolicy::distribution(const LocalHistory& h) const {
  auto d = fn_(h);
  if (static_cast<int>(d.size()) != numActions_) {
    throw std::out_of_range("policy distribution has wrong size");
  }
  return d;
}

std::shared_ptr<const Policy> constantPolicy(int numActions, int action) {
  return std::make_shared<FunctionPolicy>(numActions, [action](const LocalHistory&) { return action; });
}

std::shared_ptr<const Policy> uniformPolicy(int numActions) {
  return std::make_shared<StochasticFunctionPolicy>(numActions, [numActions](const LocalHistory&) {
    return std::vector<double>(numActions, 1.0 / numActions);
  });
}

JointController jointControllerOf(const DecPomdpModel& model, const JointPolicy& policy) {
  if (static_cast<int>(policy.size()) != model.numAgents) {
    throw std::invalid_argument("joint policy size differs from agent count");
  }
  const std::vector<int> radix = model.numActions;
  const int nJA = model.numJointActions();
  return [radix, nJA, policy](const JointHistory& jh) {
    const int n = static_cast<int>(radix.size());
    std::vector<std::vector<double>> per(n);
    for (int i = 0; i < n; ++i) {
      per[i] = policy[i]->distribution(jh.perAgent[i]);
    }
    std::vector<double> d(nJA);
    for (int ja = 0; ja < nJA; ++ja) {
      const auto a = mixedRadixDigits(ja, radix);
      double p = 1.0;
      for (int i = 0; i < n && p != 0.0; ++i) {
        p *= per[i][a[i]];
      }
      d[ja] = p;
    }
    return d;
  };
}

double Episode::totalReward(double gamma) const {
  return steps.empty() ? 0.0 : discountedReturn(*this, 0, gamma);
}

Episode runEpisode(const DecPomdpModel& model, const Controller& controller, Rng& envRng) {
  Episode ep;
  ep.seed = envRng.seed();
  ep.steps.reserve(model.horizon);
  auto jh = JointHistory::empty(model.numAgents);
  int s = model.sampleInitialState(envRng);
  for (int t = 0; t < model.horizon; ++t) {
    EpisodeStep st;
    st.actions = controller(jh, s);
    if (static_cast<int>(st.actions.size()) != model.numAgents) {
      throw std::out_of_range("controller returned wrong number of actions");
    }
    for (int i = 0; i < model.numAgents; ++i) {
      if (st.actions[i] < 0 || st.actions[i] >= model.numActions[i]) {
        throw std::out_of_range("policy returned invalid action " + std::to_string(st.actions[i]) +
                                " for agent " + std::to_string(i));
      }
    }
    st.jointAction = model.jointAction(st.actions);
    st.state = s;
    const auto res = model.step(s, st.jointAction, envRng);
    st.reward = res.reward;
    st.nextState = res.nextState;
    st.jointObservation = res.jointObservation;
    st.observations = model.splitJointObservation(res.jointObservation);
    st.done = res.done;
    jh.append(st.actions, st.observations);
    ep.steps.push_back(std::move(st));
    s = res.nextState;
    if (res.done) {
      break;
    }
  }
  return ep;
}

Episode rollout(const DecPomdpModel& model, const JointPolicy& policy, const Rng& rng) {
  if (static_cast<int>(policy.size()) != model.numAgents) {
    throw std::invalid_argument("rollout: joint policy size differs from agent count");
  }
  Rng envRng = rng.split(1);
  std::vector<Rng> agentRngs;
  for (int i = 0; i < model.numAgents; ++i) {
    agentRngs.push_back(rng.split(2 + i));
  }
  Controller ctl = [&](const JointHistory& jh, int) {
    std::vector<int> a(model.numAgents);
    for (int i = 0; i < model.numAgents; ++i) {
      a[i] = policy[i]->act(jh.perAgent[i], agentRngs[i]);
    }
    return a;
  };
  Episode ep = runEpisode(model, ctl, envRng);
  ep.seed = rng.seed();
  return ep;
}

double discountedReturn(const Episode& ep, int t, double gamma) {
  if (t < 0 || t >= ep.length()) {
    throw std::out_of_range("discountedReturn: t out of range");
  }
  double g = 0.0;
  for (int k = ep.length() - 1; k >= t; --k) {
    g = ep.steps[k].reward + gamma * g;
  }
  return g;
}

int argmaxLowest(std::span<const double> values) {
  if (values.empty()) {
    throw std::invalid_argument("argmax of empty vector");
  }
  int best = 0;
  for (int i = 1; i < static_cast<int>(values.size()); ++i) {
    if (values[i] > values[best]) {
      best = i;
    }
  }
  return best;
}

int epsilonGreedy(std::span<const double> q, double eps, Rng& rng) {
  if (q.empty()) {
    throw std::invalid_argument("epsilonGreedy: empty Q row");
  }
  if (!(eps >= 0.0 && eps <= 1.0)) {
    throw std::invalid_argument("epsilonGreedy: epsilon outside [0,1]");
  }
  if (rng.uniform() < eps) {
    return rng.uniformInt(static_cast<int>(q.size()));
  }
  return argmaxLowest(q);
}

} // namespace marl
