#include "marl/ctde_value.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>

#include "marl/dte_value.hpp"

namespace marl {

Var vdnMix(Graph& g, std::span<const Var> chosen) {
  if (chosen.empty()) {
    throw std::invalid_argument("vdnMix: no agents");
  }
  Var total = chosen[0];
  for (std::size_t i = 1; i < chosen.size(); ++i) {
    total = g.add(total, chosen[i]);
  }
  return total;
}

QmixMixer::QmixMixer(int numAgents, int stateDim, int embed, Rng& rng, bool oneLayer)
    : n_(numAgents), stateDim_(stateDim), embed_(embed), oneLayer_(oneLayer) {
  if (oneLayer) {
    w1 = nn::Hypernet::create(params, "qmix.w", stateDim, 1, numAgents, rng);
    b1 = nn::Linear::create(params, "qmix.b", stateDim, 1, rng);
  } else {
    w1 = nn::Hypernet::create(params, "qmix.w1", stateDim, embed, numAgents, rng);
    b1 = nn::Linear::create(params, "qmix.b1", stateDim, embed, rng);
    w2 = nn::Hypernet::create(params, "qmix.w2", stateDim, 1, embed, rng);
    vHidden = nn::Linear::create(params, "qmix.v1", stateDim, embed, rng);
    vOut = nn::Linear::create(params, "qmix.v2", embed, 1, rng);
  }
}

Var QmixMixer::forward(Graph& g, Var q, Var state) {
  if (q.size() != n_) {
    throw std::invalid_argument("QmixMixer: utility vector has wrong size");
  }
  if (state.size() != stateDim_) {
    throw std::invalid_argument("QmixMixer: missing or malformed state input");
  }
  if (oneLayer_) {
    return g.add(g.matvec(w1(g, params, state), q), b1(g, params, state));
  }
  Var hidden = g.elu(g.add(g.matvec(w1(g, params, state), q), b1(g, params, state)));
  Var v = vOut(g, params, g.relu(vHidden(g, params, state)));
  return g.add(g.matvec(w2(g, params, state), hidden), v);
}

QplexMixer::QplexMixer(int numAgents, int stateDim, int numJointActions, Rng& rng)
    : n_(numAgents), stateDim_(stateDim), nJA_(numJointActions) {
  wLin = nn::Linear::create(params, "qplex.w", stateDim, numAgents, rng);
  bLin = nn::Linear::create(params, "qplex.b", stateDim, numAgents, rng);
  lambdaLin = nn::Linear::create(params, "qplex.lambda", stateDim + numJointActions, numAgents, rng);
}

Var QplexMixer::weights(Graph& g, Var state) {
  return g.addScalar(ad::positiveWeights(wLin(g, params, state)), 1e-6);
}

Var QplexMixer::lambdas(Graph& g, Var state, int ja) {
  Var in = g.concat({state, g.oneHot(ja, nJA_)});
  return g.addScalar(ad::positiveWeights(lambdaLin(g, params, in)), 1e-6);
}

QplexMixer::Output QplexMixer::forward(Graph& g, std::span<const Var> qRows,
                                       std::span<const int> actions, int ja, Var state) {
  if (static_cast<int>(qRows.size()) != n_ || static_cast<int>(actions.size()) != n_) {
    throw std::invalid_argument("QplexMixer: agent count mismatch");
  }
  if (state.size() != stateDim_) {
    throw std::invalid_argument("QplexMixer: missing or malformed state input");
  }
  std::vector<Var> vs, as;
  for (int i = 0; i < n_; ++i) {
    Var v = g.maxElement(qRows[i]);
    vs.push_back(v);
    as.push_back(g.sub(g.gather(qRows[i], actions[i]), v));
  }
  Var V = g.concat(vs);
  Var A = g.concat(as);
  Var w = weights(g, state);
  Var lam = lambdas(g, state, ja);
  for (double x : g.value(w)) {
    if (!(x > 0.0)) {
      throw std::logic_error("QplexMixer: non-positive weight");
    }
  }
  Output out;
  out.values = g.sum(g.add(g.mul(w, V), bLin(g, params, state)));
  out.advantage = g.sum(g.mul(lam, g.mul(w, A)));
  out.qtot = g.add(out.values, out.advantage);
  return out;
}

bool igmCheck(const std::function<double(const std::vector<int>&)>& jointQ,
              const std::vector<std::vector<double>>& perAgentQ, double tol) {
  if (perAgentQ.empty()) {
    throw std::invalid_argument("igmCheck: no agents");
  }
  std::vector<int> radix;
  std::vector<int> greedy;
  for (const auto& row : perAgentQ) {
    if (row.empty()) {
      throw std::invalid_argument("igmCheck: empty utility row");
    }
    radix.push_back(static_cast<int>(row.size()));
    greedy.push_back(argmaxLowest(row));
  }
  int total = 1;
  for (int r : radix) {
    total *= r;
  }
  double best = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < total; ++k) {
    best = std::max(best, jointQ(mixedRadixDigits(k, radix)));
  }
  const double atGreedy = jointQ(greedy);
  return atGreedy >= best - tol * std::max(1.0, std::abs(best));
}

double wqmixWeight(WqmixWeighting kind, double alpha, double y, double qtot, double qStarAtGreedy,
                   bool actionIsGreedy) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("wqmix: alpha must lie in (0, 1]");
  }
  if (kind == WqmixWeighting::Central) {
    return (y > qStarAtGreedy || actionIsGreedy) ? 1.0 : alpha;
  }
  return y > qtot ? 1.0 : alpha;
}

WqmixLosses wqmixLosses(Graph& g, Var qStar, Var qtot, double y, double weight) {
  WqmixLosses out;
  out.central = g.square(g.sub(g.scalar(y), qStar));
  out.tot = g.scale(g.square(g.sub(g.scalar(y), qtot)), weight);
  return out;
}

QtranTerms qtranLosses(Graph& g, const DecPomdpModel& model, std::span<const Var> qRows, Var jointQ,
                       Var V, int ja, double y, QtranVariant variant, double lambdaOpt,
                       double lambdaNopt) {
  return qtranLosses(g, model.numActions, qRows, jointQ, V, ja, y, variant, lambdaOpt, lambdaNopt);
}

QtranTerms qtranLosses(Graph& g, const std::vector<int>& numActions, std::span<const Var> qRows,
                       Var jointQ, Var V, int ja, double y, QtranVariant variant, double lambdaOpt,
                       double lambdaNopt) {
  const int n = static_cast<int>(numActions.size());
  if (static_cast<int>(qRows.size()) != n) {
    throw std::invalid_argument("qtranLosses: agent count mismatch");
  }
  int nJA = 1;
  for (int a : numActions) {
    nJA *= a;
  }
  if (jointQ.size() != nJA) {
    throw std::invalid_argument("qtranLosses: joint Q has wrong size");
  }
  Var qbar = g.stopGradient(jointQ);
  // Q'(ja) - Qbar(ja) + V
  auto gap = [&](const std::vector<int>& a) {
    std::vector<Var> chosen;
    for (int i = 0; i < n; ++i) {
      chosen.push_back(g.gather(qRows[i], a[i]));
    }
    const int idx = mixedRadixIndex(a, numActions);
    return g.add(g.sub(vdnMix(g, chosen), g.gather(qbar, idx)), V);
  };
  std::vector<int> greedy(n);
  for (int i = 0; i < n; ++i) {
    greedy[i] = argmaxLowest(g.value(qRows[i]));
  }
  const auto taken = mixedRadixDigits(ja, numActions);

  QtranTerms t;
  t.td = g.square(g.sub(g.scalar(y), g.gather(jointQ, ja)));
  t.opt = g.square(gap(greedy));
  if (variant == QtranVariant::Base) {
    t.nopt = g.square(g.min2(gap(taken), g.scalar(0.0)));
  } else {
    std::vector<Var> perAgent;
    for (int i = 0; i < n; ++i) {
      std::vector<Var> gaps;
      auto a = taken;
      for (int ai = 0; ai < numActions[i]; ++ai) {
        a[i] = ai;
        gaps.push_back(g.neg(gap(a)));
      }
      // min over a_i == -max(-gap)
      perAgent.push_back(g.square(g.maxElement(g.concat(gaps))));
    }
    t.nopt = g.scale(g.sum(g.concat(perAgent)), 1.0 / n);
  }
  t.total = g.add(t.td, g.add(g.scale(t.opt, lambdaOpt), g.scale(t.nopt, lambdaNopt)));
  return t;
}

FactorAlgo factorAlgoFromName(const std::string& name) {
  if (name == "vdn") return FactorAlgo::Vdn;
  if (name == "qmix") return FactorAlgo::Qmix;
  if (name == "wqmix-cw") return FactorAlgo::WqmixCw;
  if (name == "wqmix-ow") return FactorAlgo::WqmixOw;
  if (name == "qtran") return FactorAlgo::Qtran;
  if (name == "qtran-alt") return FactorAlgo::QtranAlt;
  if (name == "qplex") return FactorAlgo::Qplex;
  throw std::invalid_argument("unknown factorization algorithm: " + name);
}

JointPolicy FactorResult::greedyPolicy(const DecPomdpModel& model) const {
  JointPolicy jp;
  for (int i = 0; i < model.numAgents; ++i) {
    auto net = std::make_shared<nn::RecurrentNet>(agents[i]);
    const int nA = model.numActions[i];
    const int nO = model.numObservations[i];
    jp.push_back(std::make_shared<FunctionPolicy>(nA, [net, nA, nO](const LocalHistory& h) {
      return argmaxLowest(net->evaluate(nn::localInputs(h, nA, nO)));
    }));
  }
  return jp;
}

namespace {

bool isWqmix(FactorAlgo a) { return a == FactorAlgo::WqmixCw || a == FactorAlgo::WqmixOw; }
bool isQtran(FactorAlgo a) { return a == FactorAlgo::Qtran || a == FactorAlgo::QtranAlt; }
bool usesQmixMixer(FactorAlgo a) { return a == FactorAlgo::Qmix || isWqmix(a); }

// Every learnable component of a factorization learner. Copies are target networks.
struct FactorNets {
  std::vector<nn::RecurrentNet> agents;
  QmixMixer qmix;
  QplexMixer qplex;
  std::vector<nn::RecurrentNet> starAgents;
  ad::ParamStore starParams;
  nn::Mlp starMix;
  nn::RecurrentNet joint;

  std::vector<ad::ParamStore*> stores(FactorAlgo algo) {
    std::vector<ad::ParamStore*> out;
    for (auto& a : agents) out.push_back(&a.params);
    if (usesQmixMixer(algo)) out.push_back(&qmix.params);
    if (algo == FactorAlgo::Qplex) out.push_back(&qplex.params);
    if (isWqmix(algo)) {
      for (auto& a : starAgents) out.push_back(&a.params);
      out.push_back(&starParams);
    }
    if (isQtran(algo)) out.push_back(&joint.params);
    return out;
  }
};

// Per-episode forward pass of one set of networks.
struct Unrolled {
  // [agent][t] for t = 0..L
  std::vector<std::vector<Var>> hidden, q, starQ;
  std::vector<Var> jointOut;  // QTRAN: [t] -> (nJA + 1)
};

Unrolled unrollAll(Graph& g, FactorNets& nets, const DecPomdpModel& model, const Episode& ep,
                   FactorAlgo algo) {
  const int n = model.numAgents;
  Unrolled u;
  u.hidden.resize(n);
  u.q.resize(n);
  for (int i = 0; i < n; ++i) {
    LocalTrajectory tr = localTrajectory(ep, i);
    const auto inputs = nn::localInputs(tr.prefix(tr.length()), model.numActions[i], model.numObservations[i]);
    u.hidden[i] = nets.agents[i].unroll(g, inputs);
    for (const auto& h : u.hidden[i]) {
      u.q[i].push_back(nets.agents[i].head(g, h));
    }
    if (isWqmix(algo)) {
      u.starQ.emplace_back();
      for (const auto& h : nets.starAgents[i].unroll(g, inputs)) {
        u.starQ[i].push_back(nets.starAgents[i].head(g, h));
      }
    }
  }
  if (isQtran(algo)) {
    JointHistory jh = JointHistory::empty(n);
    for (const auto& st : ep.steps) {
      jh.append(st.actions, st.observations);
    }
    for (const auto& h : nets.joint.unroll(g, nn::jointInputs(jh, model))) {
      u.jointOut.push_back(nets.joint.head(g, h));
    }
  }
  return u;
}

} // namespace

FactorResult trainFactorized(const DecPomdpModel& model, const FactorConfig& cfg, std::uint64_t seed,
                             const EpisodeHook& hook) {
  const int n = model.numAgents;
  const int nJA = model.numJointActions();
  const int nS = model.numStates;
  const double gamma = cfg.gamma >= 0.0 ? cfg.gamma : model.discount;
  if (cfg.targetSync <= 0 || cfg.batchEpisodes <= 0) {
    throw std::invalid_argument("trainFactorized: targetSync and batchEpisodes must be positive");
  }
  if (isWqmix(cfg.algo) && !(cfg.wqmixAlpha > 0.0 && cfg.wqmixAlpha <= 1.0)) {
    throw std::invalid_argument("trainFactorized: wqmix alpha must lie in (0, 1]");
  }
  const Rng root(seed);
  const int stateDim = cfg.mixerInput == MixerInput::State ? nS : n * cfg.hidden;

  FactorNets nets;
  for (int i = 0; i < n; ++i) {
    Rng init = root.split(200 + i);
    nets.agents.emplace_back("agent" + std::to_string(i), nn::localInputDim(model, i), cfg.hidden,
                             model.numActions[i], init);
  }
  Rng mixInit = root.split(300);
  if (usesQmixMixer(cfg.algo)) {
    nets.qmix = QmixMixer(n, stateDim, cfg.embed, mixInit, cfg.qmixOneLayer);
  }
  if (cfg.algo == FactorAlgo::Qplex) {
    nets.qplex = QplexMixer(n, stateDim, nJA, mixInit);
  }
  if (isWqmix(cfg.algo)) {
    for (int i = 0; i < n; ++i) {
      nets.starAgents.emplace_back("star" + std::to_string(i), nn::localInputDim(model, i), cfg.hidden,
                                   model.numActions[i], mixInit);
    }
    nets.starMix = nn::Mlp::create(nets.starParams, "star.mix", {n + stateDim, cfg.embed, cfg.embed, 1},
                                   mixInit, nn::Activation::Relu);
  }
  if (isQtran(cfg.algo)) {
    nets.joint = nn::RecurrentNet("qtran.joint", nn::jointInputDim(model), cfg.hidden, nJA + 1, mixInit,
                                  0, cfg.embed);
  }
  FactorNets target = nets;
  std::vector<ad::Adam> adams;
  for (std::size_t k = 0; k < nets.stores(cfg.algo).size(); ++k) {
    adams.emplace_back(cfg.lr);
  }

  Rng envRng = root.split(1);
  std::vector<Rng> exploreRngs;
  for (int i = 0; i < n; ++i) {
    exploreRngs.push_back(root.split(2 + i));
  }
  Rng replayRng = root.split(100);
  std::deque<Episode> replay;

  FactorResult result;
  const GreedyFn greedy = [&]() {
    FactorResult r{nets.agents};
    return EvalPolicy::of(model, r.greedyPolicy(model));
  };

  auto stateInput = [&](Graph& g, const Unrolled& u, int state, int t) -> Var {
    if (cfg.mixerInput == MixerInput::State) {
      return g.oneHot(state, nS);
    }
    std::vector<Var> hs;
    for (int i = 0; i < n; ++i) {
      hs.push_back(u.hidden[i][t]);
    }
    return g.stopGradient(g.concat(hs));
  };

  Graph g, gt;
  for (int ep = 0; ep < cfg.episodes; ++ep) {
    const double eps = cfg.epsilon.at(ep);
    Controller ctl = [&](const JointHistory& jh, int) {
      std::vector<int> a(n);
      for (int i = 0; i < n; ++i) {
        const auto q = nets.agents[i].evaluate(
            nn::localInputs(jh.perAgent[i], model.numActions[i], model.numObservations[i]));
        a[i] = epsilonGreedy(q, eps, exploreRngs[i]);
      }
      return a;
    };
    Episode episode = runEpisode(model, ctl, envRng);
    const double trainReturn = episode.totalReward(gamma);
    if (replay.size() == std::max<std::size_t>(1, cfg.bufferCapacity)) {
      replay.pop_front();
    }
    replay.push_back(std::move(episode));

    double lossSum = 0.0;
    int lossCount = 0;
    auto stores = nets.stores(cfg.algo);
    for (int upd = 0; upd < cfg.updatesPerEpisode; ++upd) {
      for (auto* s : stores) {
        s->zeroGrad();
      }
      std::vector<const Episode*> batch;
      for (int b = 0; b < cfg.batchEpisodes; ++b) {
        batch.push_back(&replay[replayRng.uniformInt(static_cast<int>(replay.size()))]);
      }
      int samples = 0;
      for (const Episode* e : batch) {
        samples += e->length();
      }
      for (const Episode* e : batch) {
        g.clear();
        gt.clear();
        Unrolled on = unrollAll(g, nets, model, *e, cfg.algo);
        Unrolled tg = unrollAll(gt, target, model, *e, cfg.algo);
        std::vector<Var> terms;
        const int L = e->length();
        for (int t = 0; t < L; ++t) {
          const auto& st = e->steps[t];
          const bool terminal = t + 1 >= model.horizon || st.done;
          // online greedy actions at h_{t+1} and at h_t
          std::vector<int> nextGreedy(n), curGreedy(n);
          for (int i = 0; i < n; ++i) {
            curGreedy[i] = argmaxLowest(g.value(on.q[i][t]));
            nextGreedy[i] = argmaxLowest(g.value(on.q[i][t + 1]));
          }
          const int nextGreedyJa = model.jointAction(nextGreedy);
          double y = st.reward;
          if (!terminal) {
            double boot = 0.0;
            switch (cfg.algo) {
            case FactorAlgo::Vdn:
              for (int i = 0; i < n; ++i) {
                const auto row = gt.value(tg.q[i][t + 1]);
                boot += *std::max_element(row.begin(), row.end());
              }
              break;
            case FactorAlgo::Qmix: {
              std::vector<Var> chosen;
              for (int i = 0; i < n; ++i) {
                chosen.push_back(gt.gather(tg.q[i][t + 1], nextGreedy[i]));
              }
              boot = gt.scalarValue(
                  target.qmix.forward(gt, gt.concat(chosen), stateInput(gt, tg, st.nextState, t + 1)));
              break;
            }
            case FactorAlgo::WqmixCw:
            case FactorAlgo::WqmixOw: {
              std::vector<Var> chosen;
              for (int i = 0; i < n; ++i) {
                chosen.push_back(gt.gather(tg.starQ[i][t + 1], nextGreedy[i]));
              }
              chosen.push_back(stateInput(gt, tg, st.nextState, t + 1));
              boot = gt.scalarValue(target.starMix(gt, target.starParams, gt.concat(chosen)));
              break;
            }
            case FactorAlgo::Qtran:
            case FactorAlgo::QtranAlt:
              boot = gt.value(tg.jointOut[t + 1])[nextGreedyJa];
              break;
            case FactorAlgo::Qplex: {
              std::vector<Var> rows;
              for (int i = 0; i < n; ++i) {
                rows.push_back(tg.q[i][t + 1]);
              }
              boot = gt.scalarValue(target.qplex
                                        .forward(gt, rows, nextGreedy, nextGreedyJa,
                                                 stateInput(gt, tg, st.nextState, t + 1))
                                        .qtot);
              break;
            }
            }
            y += gamma * boot;
          }

          std::vector<Var> chosen;
          for (int i = 0; i < n; ++i) {
            chosen.push_back(g.gather(on.q[i][t], st.actions[i]));
          }
          Var term;
          switch (cfg.algo) {
          case FactorAlgo::Vdn:
            term = g.square(g.sub(g.scalar(y), vdnMix(g, chosen)));
            break;
          case FactorAlgo::Qmix:
            term = g.square(
                g.sub(g.scalar(y), nets.qmix.forward(g, g.concat(chosen), stateInput(g, on, st.state, t))));
            break;
          case FactorAlgo::WqmixCw:
          case FactorAlgo::WqmixOw: {
            Var s = stateInput(g, on, st.state, t);
            Var qtot = nets.qmix.forward(g, g.concat(chosen), s);
            auto starAt = [&](const std::vector<int>& a) {
              std::vector<Var> parts;
              for (int i = 0; i < n; ++i) {
                parts.push_back(g.gather(on.starQ[i][t], a[i]));
              }
              parts.push_back(s);
              return nets.starMix(g, nets.starParams, g.concat(parts));
            };
            Var qStar = starAt(st.actions);
            const bool isGreedy = curGreedy == st.actions;
            const double qStarGreedy = isGreedy ? g.scalarValue(qStar) : g.scalarValue(starAt(curGreedy));
            const double w = wqmixWeight(cfg.algo == FactorAlgo::WqmixCw ? WqmixWeighting::Central
                                                                          : WqmixWeighting::Optimistic,
                                         cfg.wqmixAlpha, y, g.scalarValue(qtot), qStarGreedy, isGreedy);
            const auto losses = wqmixLosses(g, qStar, qtot, y, w);
            term = g.add(losses.central, losses.tot);
            break;
          }
          case FactorAlgo::Qtran:
          case FactorAlgo::QtranAlt: {
            std::vector<Var> rows;
            for (int i = 0; i < n; ++i) {
              rows.push_back(on.q[i][t]);
            }
            Var out = on.jointOut[t];
            term = qtranLosses(g, model, rows, g.slice(out, 0, nJA), g.slice(out, nJA, 1), st.jointAction, y,
                               cfg.algo == FactorAlgo::Qtran ? QtranVariant::Base : QtranVariant::Alt,
                               cfg.lambdaOpt, cfg.lambdaNopt)
                       .total;
            break;
          }
          case FactorAlgo::Qplex: {
            std::vector<Var> rows;
            for (int i = 0; i < n; ++i) {
              rows.push_back(on.q[i][t]);
            }
            Var qtot = nets.qplex.forward(g, rows, st.actions, st.jointAction, stateInput(g, on, st.state, t)).qtot;
            term = g.square(g.sub(g.scalar(y), qtot));
            break;
          }
          }
          terms.push_back(term);
        }
        Var loss = g.scale(g.sum(g.concat(terms)), 1.0 / samples);
        lossSum += g.scalarValue(loss);
        g.backward(loss);
      }
      ++lossCount;
      for (std::size_t k = 0; k < stores.size(); ++k) {
        if (cfg.gradClip > 0.0) {
          ad::clipGradNorm(*stores[k], cfg.gradClip);
        }
        adams[k].step(*stores[k]);
      }
    }
    if ((ep + 1) % cfg.targetSync == 0) {
      target = nets;
    }
    if (hook) {
      hook({ep, trainReturn, lossCount ? lossSum / lossCount : 0.0, eps}, greedy);
    }
  }
  result.agents = nets.agents;
  return result;
}

} // namespace marl
