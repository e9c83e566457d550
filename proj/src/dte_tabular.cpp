#include "marl/dte_value.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace marl {

TabularQ::TabularQ(int numActions, double init) : numActions_(numActions), init_(init) {
  if (numActions <= 0) {
    throw std::invalid_argument("TabularQ: numActions must be positive");
  }
}

double TabularQ::get(const HistoryKey& h, int a) const {
  auto it = table_.find(h);
  return it == table_.end() ? init_ : it->second.at(a);
}

std::vector<double> TabularQ::row(const HistoryKey& h) const {
  auto it = table_.find(h);
  return it == table_.end() ? std::vector<double>(numActions_, init_) : it->second;
}

double TabularQ::maxValue(const HistoryKey& h) const {
  auto it = table_.find(h);
  if (it == table_.end()) {
    return init_;
  }
  return *std::max_element(it->second.begin(), it->second.end());
}

double& TabularQ::at(const HistoryKey& h, int a) {
  if (a < 0 || a >= numActions_) {
    throw std::out_of_range("TabularQ: action out of range");
  }
  auto it = table_.find(h);
  if (it == table_.end()) {
    it = table_.emplace(h, std::vector<double>(numActions_, init_)).first;
  }
  return it->second[a];
}

double LenientState::temperature(const HistoryKey& h, int a) const {
  auto it = temps.find(h);
  return it == temps.end() ? maxTemperature : it->second.at(a);
}

double& LenientState::at(const HistoryKey& h, int a, int numActions) {
  auto it = temps.find(h);
  if (it == temps.end()) {
    it = temps.emplace(h, std::vector<double>(numActions, maxTemperature)).first;
  }
  return it->second.at(a);
}

namespace {

double tdError(const TabularQ& Q, const HistoryKey& h, int a, double r, const HistoryKey* next,
               double gamma) {
  const double boot = next ? Q.maxValue(*next) : 0.0;
  return r + gamma * boot - Q.get(h, a);
}

} // namespace

double iqlUpdate(TabularQ& Q, const HistoryKey& h, int a, double r, const HistoryKey* next,
                 double alpha, double gamma) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("iqlUpdate: alpha must lie in (0, 1]");
  }
  const double delta = tdError(Q, h, a, r, next, gamma);
  Q.at(h, a) += alpha * delta;
  return delta;
}

double distributedQUpdate(TabularQ& Q, BestActionStore* store, const HistoryKey& h, int a, double r,
                          const HistoryKey* next, double gamma) {
  const double target = r + gamma * (next ? Q.maxValue(*next) : 0.0);
  const double before = Q.get(h, a);
  const double rowMax = Q.maxValue(h);
  if (target > before) {
    Q.at(h, a) = target;
    // The stored action only moves when the row maximum strictly increases.
    if (store && (target > rowMax || !store->count(h))) {
      (*store)[h] = a;
    }
  }
  return target - before;
}

void validateHysteresis(double alpha, double beta) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("hysteretic: alpha must lie in (0, 1]");
  }
  if (!(beta > 0.0)) {
    throw std::invalid_argument("hysteretic: beta must be positive");
  }
  if (beta > alpha) {
    throw std::invalid_argument("hysteretic: beta must not exceed alpha");
  }
}

double hystereticUpdate(TabularQ& Q, const HistoryKey& h, int a, double r, const HistoryKey* next,
                        double alpha, double beta, double gamma) {
  validateHysteresis(alpha, beta);
  const double delta = tdError(Q, h, a, r, next, gamma);
  Q.at(h, a) += (delta > 0.0 ? alpha : beta) * delta;
  return delta;
}

LenientOutcome lenientUpdate(TabularQ& Q, LenientState& L, const HistoryKey& h, int a, double r,
                             const HistoryKey* next, double alpha, double gamma, Rng& rng,
                             bool decayOnlyAfterUpdate) {
  LenientOutcome out;
  out.delta = tdError(Q, h, a, r, next, gamma);
  double& T = L.at(h, a, Q.numActions());
  if (out.delta > 0.0) {
    out.applied = true;
  } else {
    out.applied = rng.uniform() > 1.0 - std::exp(-L.K * T);
  }
  if (out.applied) {
    Q.at(h, a) += alpha * out.delta;
  }
  if (out.applied || !decayOnlyAfterUpdate) {
    T *= L.decay;
  }
  return out;
}

TabularAlgo tabularAlgoFromName(const std::string& name) {
  if (name == "iql") {
    return TabularAlgo::Iql;
  }
  if (name == "distq") {
    return TabularAlgo::Distributed;
  }
  if (name == "hyst") {
    return TabularAlgo::Hysteretic;
  }
  if (name == "lenient") {
    return TabularAlgo::Lenient;
  }
  throw std::invalid_argument("unknown tabular algorithm: " + name);
}

namespace {

HistoryKey keyOf(const LocalHistory& h, bool markov) { return markov ? markovKey(h) : historyKey(h); }

} // namespace

int TabularResult::greedyAction(int agent, const LocalHistory& h) const {
  const auto key = keyOf(h, markovKeys);
  if (useStore) {
    auto it = store[agent].find(key);
    if (it != store[agent].end()) {
      return it->second;
    }
  }
  const auto row = q[agent].row(key);
  return argmaxLowest(row);
}

JointPolicy TabularResult::greedyPolicy(const DecPomdpModel& model) const {
  auto self = std::make_shared<TabularResult>(*this);
  JointPolicy jp;
  for (int i = 0; i < model.numAgents; ++i) {
    jp.push_back(std::make_shared<FunctionPolicy>(
        model.numActions[i], [self, i](const LocalHistory& h) { return self->greedyAction(i, h); }));
  }
  return jp;
}

TabularResult trainTabular(const DecPomdpModel& model, const TabularConfig& cfg, std::uint64_t seed,
                           const EpisodeHook& hook) {
  if (cfg.episodes < 0) {
    throw std::invalid_argument("trainTabular: negative episode count");
  }
  if (cfg.algo == TabularAlgo::Hysteretic) {
    validateHysteresis(cfg.alpha, cfg.beta);
  } else if (cfg.algo != TabularAlgo::Distributed && !(cfg.alpha > 0.0 && cfg.alpha <= 1.0)) {
    throw std::invalid_argument("trainTabular: alpha must lie in (0, 1]");
  }
  if (cfg.markovKeys && !model.fullyObservable) {
    throw std::invalid_argument("trainTabular: markov keys need a fully observable model");
  }
  const int n = model.numAgents;
  const double gamma = cfg.gamma >= 0.0 ? cfg.gamma : model.discount;
  const Rng root(seed);

  TabularResult res;
  res.markovKeys = cfg.markovKeys;
  res.useStore = cfg.algo == TabularAlgo::Distributed;
  for (int i = 0; i < n; ++i) {
    res.q.emplace_back(model.numActions[i], cfg.qInit);
    res.store.emplace_back();
    LenientState ls;
    ls.maxTemperature = cfg.maxTemperature;
    ls.decay = cfg.temperatureDecay;
    ls.K = cfg.leniencyK;
    res.lenient.push_back(ls);
  }

  Rng sharedEnv = root.split(1);
  std::vector<Rng> envRngs, exploreRngs, lenientRngs;
  for (int i = 0; i < n; ++i) {
    envRngs.push_back(root.split(1000 + i));
    exploreRngs.push_back(root.split(2 + i));
    lenientRngs.push_back(root.split(100 + i));
  }

  const GreedyFn greedy = [&]() { return EvalPolicy::of(model, res.greedyPolicy(model)); };

  for (int ep = 0; ep < cfg.episodes; ++ep) {
    const double eps = cfg.epsilon.at(ep);
    Controller ctl = [&](const JointHistory& jh, int) {
      std::vector<int> a(n);
      for (int i = 0; i < n; ++i) {
        const auto key = keyOf(jh.perAgent[i], cfg.markovKeys);
        const auto row = res.q[i].row(key);
        const int g = res.useStore && res.store[i].count(key) ? res.store[i].at(key) : argmaxLowest(row);
        if (exploreRngs[i].uniform() < eps) {
          a[i] = exploreRngs[i].uniformInt(model.numActions[i]);
        } else {
          a[i] = g;
        }
      }
      return a;
    };

    std::vector<Episode> episodes;
    if (cfg.independentStreams) {
      for (int i = 0; i < n; ++i) {
        episodes.push_back(runEpisode(model, ctl, envRngs[i]));
      }
    } else {
      episodes.push_back(runEpisode(model, ctl, sharedEnv));
    }

    double absDelta = 0.0;
    int updates = 0;
    for (int i = 0; i < n; ++i) {
      const Episode& e = episodes[cfg.independentStreams ? i : 0];
      LocalHistory h;
      h.agent = i;
      HistoryKey key = keyOf(h, cfg.markovKeys);
      for (int t = 0; t < e.length(); ++t) {
        const auto& st = e.steps[t];
        const int a = st.actions[i];
        h.entries.push_back({a, st.observations[i]});
        HistoryKey nextKey = keyOf(h, cfg.markovKeys);
        const bool terminal = t + 1 >= model.horizon || st.done;
        const HistoryKey* next = terminal ? nullptr : &nextKey;
        double delta = 0.0;
        switch (cfg.algo) {
        case TabularAlgo::Iql:
          delta = iqlUpdate(res.q[i], key, a, st.reward, next, cfg.alpha, gamma);
          break;
        case TabularAlgo::Distributed:
          delta = distributedQUpdate(res.q[i], &res.store[i], key, a, st.reward, next, gamma);
          break;
        case TabularAlgo::Hysteretic:
          delta = hystereticUpdate(res.q[i], key, a, st.reward, next, cfg.alpha, cfg.beta, gamma);
          break;
        case TabularAlgo::Lenient:
          delta = lenientUpdate(res.q[i], res.lenient[i], key, a, st.reward, next, cfg.alpha, gamma,
                                lenientRngs[i], cfg.decayOnlyAfterUpdate)
                      .delta;
          break;
        }
        absDelta += std::abs(delta);
        ++updates;
        key = std::move(nextKey);
      }
      if (res.q[i].size() > cfg.memoryCap) {
        throw std::length_error("trainTabular: Q table exceeds memory cap of " +
                                std::to_string(cfg.memoryCap) + " histories");
      }
    }
    if (hook) {
      EpisodeStats stats;
      stats.episode = ep;
      stats.trainReturn = episodes[0].totalReward(gamma);
      stats.loss = updates ? absDelta / updates : 0.0;
      stats.explore = eps;
      hook(stats, greedy);
    }
  }
  return res;
}

} // namespace marl
