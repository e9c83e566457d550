#include "marl/pg.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace marl {

CriticKind criticKindFromName(const std::string& name) {
  if (name == "local") return CriticKind::Local;
  if (name == "joint") return CriticKind::Joint;
  if (name == "state") return CriticKind::State;
  if (name == "history-state") return CriticKind::HistoryState;
  throw std::invalid_argument("unknown critic kind: " + name);
}

std::string criticKindName(CriticKind kind) {
  switch (kind) {
  case CriticKind::Local: return "local";
  case CriticKind::Joint: return "joint";
  case CriticKind::State: return "state";
  case CriticKind::HistoryState: return "history-state";
  }
  return "?";
}

// ---------------------------------------------------------------- actors

std::vector<Var> actorLogProbs(Graph& g, nn::RecurrentNet& actor, const LocalTrajectory& traj, int nA, int nO) {
  const int L = traj.length();
  const auto hs = actor.unroll(g, nn::localInputs(traj.prefix(L), nA, nO));
  std::vector<Var> out;
  out.reserve(L);
  for (int t = 0; t < L; ++t) {
    out.push_back(g.gather(g.logSoftmax(actor.head(g, hs[t])), traj.actions[t]));
  }
  return out;
}

std::vector<double> actorProbs(nn::RecurrentNet& actor, const LocalHistory& h, int nA, int nO) {
  Graph g;
  Var p = g.softmax(actor.forward(g, nn::localInputs(h, nA, nO)));
  const auto v = g.value(p);
  return {v.begin(), v.end()};
}

std::shared_ptr<const Policy> stochasticActorPolicy(const nn::RecurrentNet& actor, int nA, int nO) {
  auto net = std::make_shared<nn::RecurrentNet>(actor);
  return std::make_shared<StochasticFunctionPolicy>(
      nA, [net, nA, nO](const LocalHistory& h) { return actorProbs(*net, h, nA, nO); });
}

std::shared_ptr<const Policy> greedyActorPolicy(const nn::RecurrentNet& actor, int nA, int nO) {
  auto net = std::make_shared<nn::RecurrentNet>(actor);
  return std::make_shared<FunctionPolicy>(
      nA, [net, nA, nO](const LocalHistory& h) { return argmaxLowest(actorProbs(*net, h, nA, nO)); });
}

// ------------------------------------------------------------- REINFORCE

std::vector<double> ReinforceEstimator::coefficients(const LocalTrajectory& traj, int horizon) const {
  const int L = traj.length();
  if (L < horizon && !traj.terminated) {
    throw std::invalid_argument("REINFORCE needs a complete episode");
  }
  std::vector<double> coef(L);
  double G = 0.0;
  for (int t = L - 1; t >= 0; --t) {
    G = traj.rewards[t] + gamma * G;
    coef[t] = G;
  }
  double disc = 1.0;
  for (int t = 0; t < L; ++t) {
    if (baseline) {
      coef[t] -= baseline(traj.prefix(t), t);
    }
    if (discountActor) {
      coef[t] *= disc;
    }
    disc *= gamma;
  }
  return coef;
}

ReinforceEstimator addBaseline(ReinforceEstimator est, std::function<double(const LocalHistory&, int)> b) {
  if (!b) {
    return est;
  }
  if (est.baseline) {
    auto prev = est.baseline;
    est.baseline = [prev, b](const LocalHistory& h, int t) { return prev(h, t) + b(h, t); };
  } else {
    est.baseline = std::move(b);
  }
  return est;
}

Var reinforceSurrogate(Graph& g, nn::RecurrentNet& actor, const LocalTrajectory& traj,
                       const ReinforceEstimator& est, int horizon, int nA, int nO) {
  const auto coef = est.coefficients(traj, horizon);
  const auto lp = actorLogProbs(g, actor, traj, nA, nO);
  Var total = g.scalar(0.0);
  for (std::size_t t = 0; t < lp.size(); ++t) {
    total = g.add(total, g.scale(lp[t], coef[t]));
  }
  return total;
}

Var jointReinforceSurrogate(Graph& g, std::vector<nn::RecurrentNet>& actors, const DecPomdpModel& model,
                            const Episode& ep, const ReinforceEstimator& est) {
  if (static_cast<int>(actors.size()) != model.numAgents) {
    throw std::invalid_argument("jointReinforceSurrogate: one actor per agent required");
  }
  // The coefficients only depend on the shared reward stream.
  const auto coef = est.coefficients(localTrajectory(ep, 0), model.horizon);
  std::vector<std::vector<Var>> lp;
  for (int i = 0; i < model.numAgents; ++i) {
    lp.push_back(actorLogProbs(g, actors[i], localTrajectory(ep, i), model.numActions[i],
                               model.numObservations[i]));
  }
  Var total = g.scalar(0.0);
  for (int t = 0; t < ep.length(); ++t) {
    Var jointLp = lp[0][t];
    for (int i = 1; i < model.numAgents; ++i) {
      jointLp = g.add(jointLp, lp[i][t]);
    }
    total = g.add(total, g.scale(jointLp, coef[t]));
  }
  return total;
}

void reinforceUpdate(nn::RecurrentNet& actor, const LocalTrajectory& traj, double alpha,
                     const ReinforceEstimator& est, int horizon, int nA, int nO) {
  Graph g;
  actor.params.zeroGrad();
  g.backward(g.neg(reinforceSurrogate(g, actor, traj, est, horizon, nA, nO)));
  ad::Sgd(alpha).step(actor.params);
}

// ---------------------------------------------------------- actor-critic

double iacTerms(Graph& g, nn::RecurrentNet& actor, nn::RecurrentNet& critic, const LocalTrajectory& traj,
                int t, double gamma, bool discountActor, int nA, int nO, Var* actorLoss, Var* criticLoss) {
  const int L = traj.length();
  if (t < 0 || t >= L) {
    throw std::out_of_range("iacTerms: step outside the trajectory");
  }
  const auto inputs = nn::localInputs(traj.prefix(t + 1), nA, nO);
  const auto hs = critic.unroll(g, inputs);
  Var v = critic.head(g, hs[t]);
  const bool last = t + 1 == L;
  // V(h_H) = 0; a terminated trajectory also ends at its last step
  const double next = last ? 0.0 : g.scalarValue(critic.head(g, hs[t + 1]));
  const double y = traj.rewards[t] + gamma * next;
  const double delta = y - g.scalarValue(v);
  if (criticLoss) {
    *criticLoss = g.scale(g.square(g.sub(g.scalar(y), v)), 0.5);
  }
  if (actorLoss) {
    const auto ah = actor.unroll(g, std::vector<std::vector<double>>(inputs.begin(), inputs.begin() + t));
    Var lp = g.gather(g.logSoftmax(actor.head(g, ah[t])), traj.actions[t]);
    const double coef = (discountActor ? std::pow(gamma, t) : 1.0) * delta;
    *actorLoss = g.scale(lp, -coef);
  }
  return delta;
}

double iacStep(nn::RecurrentNet& actor, nn::RecurrentNet& critic, CriticKind kind, const LocalTrajectory& traj,
               int t, double alpha, double beta, double gamma, int nA, int nO) {
  if (kind != CriticKind::Local) {
    throw std::invalid_argument("IAC requires a local history critic");
  }
  Graph g;
  Var aLoss, cLoss;
  const double delta = iacTerms(g, actor, critic, traj, t, gamma, true, nA, nO, &aLoss, &cLoss);
  actor.params.zeroGrad();
  critic.params.zeroGrad();
  g.backward(g.add(aLoss, cLoss));
  ad::Sgd(alpha).step(actor.params);
  ad::Sgd(beta).step(critic.params);
  return delta;
}

double comaAdvantage(const std::function<double(const std::vector<int>&)>& q, const std::vector<int>& ja,
                     std::span<const double> piI, int agent) {
  if (agent < 0 || agent >= static_cast<int>(ja.size())) {
    throw std::out_of_range("comaAdvantage: bad agent index");
  }
  if (piI.empty()) {
    throw std::invalid_argument("comaAdvantage: needs a discrete action distribution");
  }
  auto alt = ja;
  double baseline = 0.0;
  for (std::size_t a = 0; a < piI.size(); ++a) {
    alt[agent] = static_cast<int>(a);
    baseline += piI[a] * q(alt);
  }
  return q(ja) - baseline;
}

// ------------------------------------------------------------------ PPO

double ppoClipObjective(double ratio, double advantage, double eps) {
  if (!(eps > 0.0)) {
    throw std::invalid_argument("PPO clip epsilon must be positive");
  }
  return std::min(ratio * advantage, std::clamp(ratio, 1.0 - eps, 1.0 + eps) * advantage);
}

Var ppoClipObjective(Graph& g, Var logPiNew, double logPiOld, double advantage, double eps) {
  if (!(eps > 0.0)) {
    throw std::invalid_argument("PPO clip epsilon must be positive");
  }
  if (!std::isfinite(logPiOld)) {
    throw std::invalid_argument("PPO: old policy gave zero probability to a sampled action");
  }
  Var ratio = g.exp(g.addScalar(logPiNew, -logPiOld));
  return g.min2(g.scale(ratio, advantage), g.scale(g.clip(ratio, 1.0 - eps, 1.0 + eps), advantage));
}

Var ppoValueLoss(Graph& g, Var v, double vOld, double target, double eps, bool clipValue) {
  Var plain = g.square(g.addScalar(v, -target));
  if (!clipValue) {
    return plain;
  }
  Var clipped = g.square(g.addScalar(g.clip(v, vOld - eps, vOld + eps), -target));
  return g.max2(plain, clipped);
}

Var mappoActorLoss(Graph& g, std::span<const PpoSample> batch, double eps) {
  if (batch.empty()) {
    throw std::invalid_argument("mappoActorLoss: empty batch");
  }
  std::vector<Var> terms;
  for (const auto& s : batch) {
    terms.push_back(ppoClipObjective(g, s.logPi, s.logPiOld, s.advantage, eps));
  }
  return g.neg(g.mean(g.concat(terms)));
}

Var mappoCriticLoss(Graph& g, std::span<const PpoSample> batch, double eps, bool clipValue) {
  if (batch.empty()) {
    throw std::invalid_argument("mappoCriticLoss: empty batch");
  }
  std::vector<Var> terms;
  for (const auto& s : batch) {
    terms.push_back(ppoValueLoss(g, s.value, s.valueOld, s.target, eps, clipValue));
  }
  return g.mean(g.concat(terms));
}

// ------------------------------------------------------------ trainers

PgAlgo pgAlgoFromName(const std::string& name) {
  if (name == "reinforce") return PgAlgo::Reinforce;
  if (name == "iac") return PgAlgo::Iac;
  if (name == "iacc") return PgAlgo::Iacc;
  if (name == "ia2cc") return PgAlgo::Ia2cc;
  if (name == "coma") return PgAlgo::Coma;
  if (name == "mappo") return PgAlgo::Mappo;
  if (name == "ippo") return PgAlgo::Ippo;
  throw std::invalid_argument("unknown policy-gradient algorithm: " + name);
}

JointPolicy PgResult::greedyPolicy(const DecPomdpModel& model) const {
  JointPolicy jp;
  for (int i = 0; i < model.numAgents; ++i) {
    jp.push_back(greedyActorPolicy(actors[i], model.numActions[i], model.numObservations[i]));
  }
  return jp;
}

JointPolicy PgResult::stochasticPolicy(const DecPomdpModel& model) const {
  JointPolicy jp;
  for (int i = 0; i < model.numAgents; ++i) {
    jp.push_back(stochasticActorPolicy(actors[i], model.numActions[i], model.numObservations[i]));
  }
  return jp;
}

namespace {

bool isPpo(PgAlgo a) { return a == PgAlgo::Mappo || a == PgAlgo::Ippo; }
bool usesJointQ(PgAlgo a) { return a == PgAlgo::Iacc || a == PgAlgo::Coma; }

CriticKind resolveCritic(const PgConfig& cfg) {
  const bool local = cfg.algo == PgAlgo::Iac || cfg.algo == PgAlgo::Ippo || cfg.algo == PgAlgo::Reinforce;
  const CriticKind kind = cfg.critic.value_or(local ? CriticKind::Local : CriticKind::Joint);
  if ((cfg.algo == PgAlgo::Iac || cfg.algo == PgAlgo::Ippo) && kind != CriticKind::Local) {
    throw std::invalid_argument("iac/ippo require the local critic");
  }
  if (!local && kind == CriticKind::Local) {
    throw std::invalid_argument("centralized-critic methods cannot use a local critic");
  }
  return kind;
}

// States visited by an episode: s_0 .. s_L.
std::vector<int> episodeStates(const Episode& ep) {
  std::vector<int> s;
  for (const auto& st : ep.steps) {
    s.push_back(st.state);
  }
  s.push_back(ep.steps.back().nextState);
  return s;
}

// Critics of every kind. Outputs are produced for t = 0..L.
struct Critics {
  CriticKind kind = CriticKind::Local;
  int outDim = 1;
  bool shared = false;
  std::vector<nn::RecurrentNet> nets;  // Local: per agent (one when shared); Joint/HistoryState: one
  ad::ParamStore stateParams;
  nn::Mlp stateMlp;

  std::vector<ad::ParamStore*> stores() {
    std::vector<ad::ParamStore*> out;
    if (kind == CriticKind::State) {
      out.push_back(&stateParams);
    }
    for (auto& n : nets) {
      out.push_back(&n.params);
    }
    return out;
  }

  std::vector<Var> outputs(Graph& g, const DecPomdpModel& model, const Episode& ep, int agent) {
    const int L = ep.length();
    std::vector<Var> out;
    switch (kind) {
    case CriticKind::Local: {
      auto& net = nets[shared ? 0 : agent];
      const auto tr = localTrajectory(ep, agent);
      for (const auto& h :
           net.unroll(g, nn::localInputs(tr.prefix(L), model.numActions[agent], model.numObservations[agent]))) {
        out.push_back(net.head(g, h));
      }
      break;
    }
    case CriticKind::Joint:
    case CriticKind::HistoryState: {
      JointHistory jh = JointHistory::empty(model.numAgents);
      for (const auto& st : ep.steps) {
        jh.append(st.actions, st.observations);
      }
      const auto states = episodeStates(ep);
      const auto hs = nets[0].unroll(g, nn::jointInputs(jh, model));
      for (int t = 0; t <= L; ++t) {
        out.push_back(kind == CriticKind::Joint ? nets[0].head(g, hs[t])
                                                : nets[0].head(g, hs[t], g.oneHot(states[t], model.numStates)));
      }
      break;
    }
    case CriticKind::State:
      for (int s : episodeStates(ep)) {
        out.push_back(stateMlp(g, stateParams, g.oneHot(s, model.numStates)));
      }
      break;
    }
    return out;
  }
};

Critics makeCritics(const DecPomdpModel& model, CriticKind kind, int outDim, bool shared, int hidden, Rng& rng) {
  Critics c;
  c.kind = kind;
  c.outDim = outDim;
  c.shared = shared;
  switch (kind) {
  case CriticKind::Local:
    for (int i = 0; i < (shared ? 1 : model.numAgents); ++i) {
      c.nets.emplace_back("critic" + std::to_string(i), nn::localInputDim(model, i), hidden, outDim, rng);
    }
    break;
  case CriticKind::Joint:
    c.nets.emplace_back("critic", nn::jointInputDim(model), hidden, outDim, rng);
    break;
  case CriticKind::HistoryState:
    c.nets.emplace_back("critic", nn::jointInputDim(model), hidden, outDim, rng, model.numStates, hidden);
    break;
  case CriticKind::State:
    c.stateMlp = nn::Mlp::create(c.stateParams, "critic", {model.numStates, hidden, outDim}, rng);
    break;
  }
  return c;
}

struct Optimizers {
  std::vector<ad::ParamStore*> stores;
  std::vector<ad::Adam> adams;
  std::vector<double> lrs;
  bool adam = true;
  double clip = 0.0;

  void add(ad::ParamStore* s, double lr) {
    stores.push_back(s);
    adams.emplace_back(lr);
    lrs.push_back(lr);
  }
  void zero() {
    for (auto* s : stores) s->zeroGrad();
  }
  void step() {
    for (std::size_t k = 0; k < stores.size(); ++k) {
      if (clip > 0.0) {
        ad::clipGradNorm(*stores[k], clip);
      }
      if (adam) {
        adams[k].step(*stores[k]);
      } else {
        ad::Sgd(lrs[k]).step(*stores[k]);
      }
    }
  }
};

Var entropyOf(Graph& g, Var logits) {
  Var lp = g.logSoftmax(logits);
  return g.neg(g.sum(g.mul(g.exp(lp), lp)));
}

} // namespace

PgResult trainPolicyGradient(const DecPomdpModel& model, const PgConfig& cfg, std::uint64_t seed,
                             const EpisodeHook& hook) {
  const int n = model.numAgents;
  const double gamma = cfg.gamma >= 0.0 ? cfg.gamma : model.discount;
  if (cfg.batchEpisodes <= 0 || cfg.episodes < 0) {
    throw std::invalid_argument("trainPolicyGradient: bad episode counts");
  }
  const CriticKind kind = resolveCritic(cfg);
  const bool shareActors = isPpo(cfg.algo) && cfg.shareParameters;
  if (shareActors) {
    for (int i = 1; i < n; ++i) {
      if (model.numActions[i] != model.numActions[0] || model.numObservations[i] != model.numObservations[0]) {
        throw std::invalid_argument("parameter sharing needs identical agent interfaces");
      }
    }
  }
  const Rng root(seed);

  std::vector<nn::RecurrentNet> actors;
  for (int i = 0; i < (shareActors ? 1 : n); ++i) {
    Rng init = root.split(200 + i);
    actors.emplace_back("actor" + std::to_string(i), nn::localInputDim(model, i), cfg.hidden,
                        model.numActions[i], init);
  }
  auto actorOf = [&](int i) -> nn::RecurrentNet& { return actors[shareActors ? 0 : i]; };

  Rng criticInit = root.split(300);
  const bool hasCritic = cfg.algo != PgAlgo::Reinforce;
  Critics critics;
  if (hasCritic) {
    critics = makeCritics(model, kind, usesJointQ(cfg.algo) ? model.numJointActions() : 1,
                          cfg.algo == PgAlgo::Ippo && cfg.shareParameters, cfg.hidden, criticInit);
  }

  Optimizers opt;
  opt.adam = cfg.adam;
  opt.clip = cfg.gradClip;
  for (auto& a : actors) opt.add(&a.params, cfg.actorLr);
  if (hasCritic) {
    for (auto* s : critics.stores()) opt.add(s, cfg.criticLr);
  }

  Rng envRng = root.split(1);
  std::vector<Rng> actRngs;
  for (int i = 0; i < n; ++i) actRngs.push_back(root.split(2 + i));

  std::vector<double> baselineSum(model.horizon, 0.0);
  int baselineCount = 0;

  const GreedyFn greedy = [&]() {
    PgResult r;
    for (int i = 0; i < n; ++i) r.actors.push_back(actorOf(i));
    return EvalPolicy::of(model, r.greedyPolicy(model));
  };

  Graph g;
  std::vector<Episode> batch;
  double lastLoss = 0.0;
  for (int ep = 0; ep < cfg.episodes; ++ep) {
    Controller ctl = [&](const JointHistory& jh, int) {
      std::vector<int> a(n);
      for (int i = 0; i < n; ++i) {
        const auto p = actorProbs(actorOf(i), jh.perAgent[i], model.numActions[i], model.numObservations[i]);
        a[i] = actRngs[i].categorical(p);
      }
      return a;
    };
    batch.push_back(runEpisode(model, ctl, envRng));
    const double trainReturn = batch.back().totalReward(gamma);
    double entropy = 0.0;
    {
      // exploration statistic: mean initial-policy entropy across agents
      for (int i = 0; i < n; ++i) {
        const auto p = actorProbs(actorOf(i), LocalHistory{i, {}}, model.numActions[i], model.numObservations[i]);
        for (double x : p) {
          if (x > 0.0) entropy -= x * std::log(x);
        }
      }
      entropy /= n;
    }

    if (static_cast<int>(batch.size()) == cfg.batchEpisodes) {
      const double scale = 1.0 / static_cast<double>(batch.size());
      double lossSum = 0.0;

      if (isPpo(cfg.algo)) {
        // Freeze old log-probs, old values, advantages and return targets.
        struct Frozen {
          std::vector<std::vector<double>> logPiOld, vOld, adv, ret;  // [agent][t]
        };
        std::vector<Frozen> frozen(batch.size());
        for (std::size_t b = 0; b < batch.size(); ++b) {
          const Episode& e = batch[b];
          const int L = e.length();
          g.clear();
          auto& f = frozen[b];
          f.logPiOld.resize(n);
          f.vOld.resize(n);
          f.adv.resize(n);
          f.ret.resize(n);
          const int nCritics = kind == CriticKind::Local ? n : 1;
          std::vector<std::vector<double>> vals(nCritics);
          for (int c = 0; c < nCritics; ++c) {
            for (Var v : critics.outputs(g, model, e, c)) vals[c].push_back(g.scalarValue(v));
          }
          for (int i = 0; i < n; ++i) {
            const auto tr = localTrajectory(e, i);
            for (Var lp : actorLogProbs(g, actorOf(i), tr, model.numActions[i], model.numObservations[i])) {
              f.logPiOld[i].push_back(g.scalarValue(lp));
            }
            const auto& v = vals[kind == CriticKind::Local ? i : 0];
            double G = 0.0;
            f.ret[i].assign(L, 0.0);
            for (int t = L - 1; t >= 0; --t) {
              G = e.steps[t].reward + gamma * G;
              f.ret[i][t] = G;
            }
            for (int t = 0; t < L; ++t) {
              const double next = t + 1 == L ? 0.0 : v[t + 1];
              f.vOld[i].push_back(v[t]);
              f.adv[i].push_back(e.steps[t].reward + gamma * next - v[t]);
            }
          }
        }
        for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
          opt.zero();
          for (std::size_t b = 0; b < batch.size(); ++b) {
            const Episode& e = batch[b];
            g.clear();
            std::vector<PpoSample> actorSamples, criticSamples;
            std::vector<Var> entropies;
            std::vector<std::vector<Var>> vals;
            const int nCritics = kind == CriticKind::Local ? n : 1;
            for (int c = 0; c < nCritics; ++c) vals.push_back(critics.outputs(g, model, e, c));
            for (int i = 0; i < n; ++i) {
              const auto tr = localTrajectory(e, i);
              const auto lps = actorLogProbs(g, actorOf(i), tr, model.numActions[i], model.numObservations[i]);
              for (int t = 0; t < e.length(); ++t) {
                PpoSample s{lps[t], frozen[b].logPiOld[i][t], frozen[b].adv[i][t],
                            vals[kind == CriticKind::Local ? i : 0][t], frozen[b].vOld[i][t],
                            frozen[b].ret[i][t]};
                actorSamples.push_back(s);
                if (kind == CriticKind::Local || i == 0) criticSamples.push_back(s);
              }
              if (cfg.entropyCoef > 0.0) {
                auto& net = actorOf(i);
                for (const auto& h : net.unroll(g, nn::localInputs(tr.prefix(tr.length()), model.numActions[i],
                                                                   model.numObservations[i]))) {
                  entropies.push_back(entropyOf(g, net.head(g, h)));
                }
              }
            }
            Var loss = g.add(mappoActorLoss(g, actorSamples, cfg.clipEps),
                             mappoCriticLoss(g, criticSamples, cfg.clipEps, cfg.valueClip));
            if (!entropies.empty()) {
              loss = g.sub(loss, g.scale(g.mean(g.concat(entropies)), cfg.entropyCoef));
            }
            loss = g.scale(loss, scale);
            lossSum += g.scalarValue(loss);
            g.backward(loss);
          }
          opt.step();
        }
        lastLoss = lossSum / cfg.epochs;
      } else {
        opt.zero();
        for (const Episode& e : batch) {
          g.clear();
          const int L = e.length();
          std::vector<Var> terms;
          // critic outputs, per agent for local critics
          std::vector<std::vector<Var>> vals;
          if (hasCritic) {
            const int nCritics = kind == CriticKind::Local ? n : 1;
            for (int c = 0; c < nCritics; ++c) vals.push_back(critics.outputs(g, model, e, c));
          }
          // centralized signal shared by all agents (IA2CC, IACC)
          std::vector<double> shared(L, 0.0);
          if (hasCritic && kind != CriticKind::Local) {
            const auto& v = vals[0];
            for (int t = 0; t < L; ++t) {
              const auto& st = e.steps[t];
              const bool last = t + 1 == L;
              if (usesJointQ(cfg.algo)) {
                const double next = last ? 0.0 : g.value(v[t + 1])[e.steps[t + 1].jointAction];
                Var q = g.gather(v[t], st.jointAction);
                const double y = st.reward + gamma * next;
                terms.push_back(g.scale(g.square(g.addScalar(q, -y)), 0.5));
                shared[t] = g.scalarValue(q);
              } else {
                const double next = last ? 0.0 : g.scalarValue(v[t + 1]);
                const double y = st.reward + gamma * next;
                terms.push_back(g.scale(g.square(g.addScalar(v[t], -y)), 0.5));
                shared[t] = y - g.scalarValue(v[t]);
              }
            }
          }
          std::vector<double> meanReturnByT;
          if (cfg.algo == PgAlgo::Reinforce && cfg.reinforceBaseline && baselineCount > 0) {
            for (double s : baselineSum) meanReturnByT.push_back(s / baselineCount);
          }
          for (int i = 0; i < n; ++i) {
            const auto tr = localTrajectory(e, i);
            auto& actor = actorOf(i);
            const int nA = model.numActions[i], nO = model.numObservations[i];
            if (cfg.algo == PgAlgo::Reinforce) {
              ReinforceEstimator est{gamma, cfg.discountActor, {}};
              if (!meanReturnByT.empty()) {
                est = addBaseline(est, [&](const LocalHistory&, int t) { return meanReturnByT[t]; });
              }
              terms.push_back(g.neg(reinforceSurrogate(g, actor, tr, est, model.horizon, nA, nO)));
              continue;
            }
            const auto hs = actor.unroll(g, nn::localInputs(tr.prefix(L), nA, nO));
            double disc = 1.0;
            for (int t = 0; t < L; ++t) {
              Var logits = actor.head(g, hs[t]);
              Var lpRow = g.logSoftmax(logits);
              Var lp = g.gather(lpRow, tr.actions[t]);
              double signal = 0.0;
              if (kind == CriticKind::Local) {
                const auto& v = vals[i];
                const double next = t + 1 == L ? 0.0 : g.scalarValue(v[t + 1]);
                const double y = e.steps[t].reward + gamma * next;
                terms.push_back(g.scale(g.square(g.addScalar(v[t], -y)), 0.5));
                signal = y - g.scalarValue(v[t]);
              } else if (cfg.algo == PgAlgo::Coma) {
                const auto qRow = g.value(vals[0][t]);
                const auto pv = g.value(g.exp(lpRow));
                const std::vector<double> pi(pv.begin(), pv.end());
                const std::vector<double> qv(qRow.begin(), qRow.end());
                signal = comaAdvantage(
                    [&](const std::vector<int>& ja) { return qv[model.jointAction(ja)]; }, e.steps[t].actions, pi, i);
              } else {
                signal = shared[t];
              }
              const double coef = (cfg.discountActor ? disc : 1.0) * signal;
              terms.push_back(g.scale(lp, -coef));
              if (cfg.entropyCoef > 0.0) {
                terms.push_back(g.scale(entropyOf(g, logits), -cfg.entropyCoef));
              }
              disc *= gamma;
            }
          }
          Var loss = g.scale(g.sum(g.concat(terms)), scale);
          lossSum += g.scalarValue(loss);
          g.backward(loss);
        }
        opt.step();
        lastLoss = lossSum;
      }
      if (cfg.algo == PgAlgo::Reinforce) {
        for (const Episode& e : batch) {
          double G = 0.0;
          for (int t = e.length() - 1; t >= 0; --t) {
            G = e.steps[t].reward + gamma * G;
            baselineSum[t] += G;
          }
          ++baselineCount;
        }
      }
      batch.clear();
    }
    if (hook) {
      hook({ep, trainReturn, lastLoss, entropy}, greedy);
    }
  }
  PgResult result;
  for (int i = 0; i < n; ++i) result.actors.push_back(actorOf(i));
  return result;
}

} // namespace marl
