// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Usage: marl_acceptance [--only N]...

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "calibration.hpp"
#include "marl/ctde_value.hpp"
#include "marl/cte.hpp"
#include "marl/dte_value.hpp"
#include "marl/envs.hpp"
#include "marl/harness.hpp"
#include "marl/oracle.hpp"
#include "marl/pg.hpp"
#include "test_util.hpp"

using namespace marl;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Accumulates failed checks; the first few failure messages are kept.
class Checks {
public:
  void require(bool ok, const std::string& what) {
    if (ok) return;
    ++failures_;
    if (failures_ <= 3) messages_ += (messages_.empty() ? "" : "; ") + what;
  }
  void note(const std::string& s) { notes_ += (notes_.empty() ? "" : ", ") + s; }
  Outcome outcome() const {
    Outcome o;
    o.pass = failures_ == 0;
    o.detail = notes_;
    if (!o.pass) o.detail += (notes_.empty() ? "" : "; ") + std::to_string(failures_) + " failed: " + messages_;
    return o;
  }

private:
  int failures_ = 0;
  std::string messages_;
  std::string notes_;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double seconds(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<double> randomVec(Rng& rng, int n, double lo = -2.0, double hi = 2.0) {
  std::vector<double> v(n);
  for (double& x : v) x = lo + (hi - lo) * rng.uniform();
  return v;
}

// Deterministic policy assigning a hashed action to every local history.
JointPolicy randomDeterministic(const DecPomdpModel& m, Rng& rng) {
  JointPolicy jp;
  for (int i = 0; i < m.numAgents; ++i) {
    const int nA = m.numActions[i];
    const std::uint64_t salt = rng.next();
    jp.push_back(std::make_shared<FunctionPolicy>(nA, [nA, salt](const LocalHistory& h) {
      std::uint64_t x = salt;
      for (int k : historyKey(h)) x = splitmix64(x ^ static_cast<std::uint64_t>(k + 7));
      return static_cast<int>(x % nA);
    }));
  }
  return jp;
}

naive::MeanStderr monteCarlo(const DecPomdpModel& m, const JointPolicy& jp, int n, std::uint64_t base) {
  std::vector<double> returns(n);
  for (int k = 0; k < n; ++k) returns[k] = rollout(m, jp, Rng(base + k)).totalReward(m.discount);
  return naive::meanStderr(returns);
}

int successCount(const DecPomdpModel& m, double threshold, int seeds,
                 const std::function<JointPolicy(std::uint64_t)>& train) {
  int good = 0;
  for (int s = 0; s < seeds; ++s) good += evaluateJointPolicy(m, train(static_cast<std::uint64_t>(s))) >= threshold;
  return good;
}

// ---------------------------------------------------------------- criteria

Outcome oracleCorrectness() {
  Checks c;
  const auto t0 = std::chrono::steady_clock::now();
  const auto m = makeDecTiger(2);
  const auto bf = bruteForceOptimal(m);
  const double naiveBest = naive::naiveOptimum(m);
  c.require(std::abs(bf.value - naiveBest) <= 1e-12, "brute force vs naive enumeration");
  const auto mc = monteCarlo(m, bf.tree.toJointPolicy(m), 1'000'000, 1);
  c.require(std::abs(mc.mean - bf.value) <= 4.0 * mc.stderr_, "Monte Carlo outside 4 SE");
  const double sec = seconds(t0);
  c.require(sec < 60.0, "runtime");
  c.note("V*=" + fmt("%.6f", bf.value) + " naive=" + fmt("%.6f", naiveBest) + " MC=" + fmt("%.4f", mc.mean) +
         "+-" + fmt("%.4f", mc.stderr_) + " " + fmt("%.1fs", sec));
  return c.outcome();
}

Outcome bellmanConsistency() {
  Checks c;
  const auto m = makeDecTiger(3);
  Rng rng(2024);
  double worstSe = 0.0;
  for (int k = 0; k < 20; ++k) {
    const auto jp = randomDeterministic(m, rng);
    const auto root = JointHistory::empty(2);
    const int ja = m.jointAction(std::vector<int>{jp[0]->act(root.perAgent[0], rng), jp[1]->act(root.perAgent[1], rng)});
    const double v = evaluateJointPolicy(m, jp);
    c.require(std::abs(v - evaluateJointQ(m, jp, root, ja)) <= 1e-12, "V != Q(h0, pi(h0))");
    const auto mc = monteCarlo(m, jp, 20000, 1000 * (k + 1));
    const double z = std::abs(mc.mean - v) / mc.stderr_;
    worstSe = std::max(worstSe, z);
    c.require(z <= 4.0, "Monte Carlo outside 4 SE");
  }
  c.note("20 policies, worst |MC-V|/SE=" + fmt("%.2f", worstSe));
  return c.outcome();
}

Outcome centralizedConvergence() {
  Checks c;
  const auto t0 = std::chrono::steady_clock::now();
  const auto m = makeGridMmdp(3, 4, 0.9);
  CentralConfig cfg;
  cfg.episodes = calib::kCentralGridEpisodes;
  cfg.alpha = 1.0;
  cfg.epsilon = {1.0, 1.0, 0};
  const auto res = trainCentralMmdp(m, cfg, 0);
  const auto vi = valueIteration(m);
  const auto reach = reachableStates(m);
  double worst = 0.0;
  for (int t = 0; t < m.horizon; ++t) {
    for (int s = 0; s < m.numStates; ++s) {
      if (!reach[t][s]) continue;
      for (int ja = 0; ja < m.numJointActions(); ++ja) {
        worst = std::max(worst, std::abs(res.Q.get(mmdpKey(t, s), ja) - vi.Q[t][s][ja]));
      }
    }
  }
  const double sec = seconds(t0);
  c.require(worst <= 1e-3, "max |Q - Q_VI| = " + fmt("%.3g", worst));
  c.require(sec < 30.0, "runtime");
  c.note("alpha=1, eps=1, " + std::to_string(cfg.episodes) + " episodes, max err " + fmt("%.2g", worst) + ", " +
         fmt("%.1fs", sec));
  return c.outcome();
}

Outcome distributedEquivalence() {
  Checks c;
  const auto m = makeGridMmdp(3, 4, 0.9);
  const double vstar = valueIteration(m).initialValue;
  TabularConfig cfg;
  cfg.algo = TabularAlgo::Distributed;
  cfg.markovKeys = true;
  cfg.episodes = calib::kDistGridEpisodes;
  cfg.epsilon = {1.0, 1.0, 0};
  int exact = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    exact += evaluateJointPolicy(m, trainTabular(m, cfg, s).greedyPolicy(m)) == vstar;
  }
  c.require(exact == 100, "optimal in " + std::to_string(exact) + "/100");
  c.note("V*=" + fmt("%.6f", vstar) + ", exact optimum in " + std::to_string(exact) + "/100");
  return c.outcome();
}

Outcome optimismOrdering() {
  Checks c;
  const auto m = makeClimbGame();
  TabularConfig base;
  base.episodes = calib::kClimbEpisodes;
  base.alpha = calib::kClimbAlpha;
  base.beta = calib::kClimbBeta;
  base.epsilon = {calib::kClimbEpsilon, calib::kClimbEpsilon, 0};
  auto count = [&](TabularAlgo algo) {
    auto cfg = base;
    cfg.algo = algo;
    return successCount(m, 11.0, 100, [&](std::uint64_t s) { return trainTabular(m, cfg, s).greedyPolicy(m); });
  };
  const int dist = count(TabularAlgo::Distributed);
  const int hyst = count(TabularAlgo::Hysteretic);
  const int iql = count(TabularAlgo::Iql);
  const double p = naive::fisherOneSided(dist, 100, iql, 100);
  c.require(dist >= calib::kClimbDistMin, "distributed below threshold");
  c.require(dist >= hyst && hyst >= iql, "ordering");
  c.require(p < 0.01, "distributed vs IQL p=" + fmt("%.3g", p));
  c.note("distributed " + std::to_string(dist) + ", hysteretic " + std::to_string(hyst) + ", iql " +
         std::to_string(iql) + ", Fisher p=" + fmt("%.2g", p));
  return c.outcome();
}

// Random joint-action layout with at most 5^3 joint actions.
std::vector<int> randomLayout(Rng& rng) {
  std::vector<int> nA(2 + rng.uniformInt(2));
  for (int& a : nA) a = 2 + rng.uniformInt(4);
  return nA;
}

std::vector<std::vector<double>> randomRows(Rng& rng, const std::vector<int>& nA) {
  std::vector<std::vector<double>> rows;
  for (int a : nA) rows.push_back(randomVec(rng, a));
  return rows;
}

double qmixValue(QmixMixer& mixer, const std::vector<double>& q, const std::vector<double>& s) {
  Graph g;
  return g.scalarValue(mixer.forward(g, g.constant(q), g.constant(s)));
}

Outcome igmSuite() {
  Checks c;
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(606);
  int checked = 0;
  for (int k = 0; k < 1000; ++k) {
    const auto nA = randomLayout(rng);
    const auto rows = randomRows(rng, nA);
    auto vdn = [&](const std::vector<int>& a) {
      double sum = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) sum += rows[i][a[i]];
      return sum;
    };
    c.require(igmCheck(vdn, rows), "VDN instance " + std::to_string(k));
    ++checked;
  }
  for (int k = 0; k < 1000; ++k) {
    const auto nA = randomLayout(rng);
    const auto rows = randomRows(rng, nA);
    const int n = static_cast<int>(nA.size());
    QmixMixer mixer(n, 3, 4, rng, k % 2 == 1);
    const auto s = randomVec(rng, 3);
    auto joint = [&](const std::vector<int>& a) {
      std::vector<double> q(n);
      for (int i = 0; i < n; ++i) q[i] = rows[i][a[i]];
      return qmixValue(mixer, q, s);
    };
    c.require(igmCheck(joint, rows, 1e-9), "QMIX instance " + std::to_string(k));
    ++checked;
  }
  for (int k = 0; k < 1000; ++k) {
    const auto nA = randomLayout(rng);
    const auto rows = randomRows(rng, nA);
    int nJA = 1;
    for (int a : nA) nJA *= a;
    QplexMixer mixer(static_cast<int>(nA.size()), 3, nJA, rng);
    const auto s = randomVec(rng, 3);
    auto joint = [&](const std::vector<int>& a) {
      Graph g;
      std::vector<Var> q;
      for (const auto& r : rows) q.push_back(g.constant(r));
      return g.scalarValue(mixer.forward(g, q, a, mixedRadixIndex(a, nA), g.constant(s)).qtot);
    };
    c.require(igmCheck(joint, rows, 1e-9), "QPLEX instance " + std::to_string(k));
    ++checked;
  }
  const double sec = seconds(t0);
  c.require(sec < 60.0, "runtime");
  c.note(std::to_string(checked) + " instances, " + fmt("%.1fs", sec));
  return c.outcome();
}

Outcome qmixMonotonicity() {
  Checks c;
  Rng rng(707);
  double worst = 1e300;
  for (int k = 0; k < 1000; ++k) {
    QmixMixer mixer(3, 4, 8, rng, k % 2 == 1);
    const auto q = randomVec(rng, 3, -5.0, 5.0);
    const auto s = randomVec(rng, 4);
    const double base = qmixValue(mixer, q, s);
    for (int i = 0; i < 3; ++i) {
      auto qp = q;
      qp[i] += 1e-5;
      const double d = (qmixValue(mixer, qp, s) - base) / 1e-5;
      worst = std::min(worst, d);
      c.require(d >= -1e-9, "negative slope " + fmt("%.3g", d));
    }
  }
  c.note("1000 points, min dQtot/dQi=" + fmt("%.3g", worst));
  return c.outcome();
}

Outcome qplexStructure() {
  Checks c;
  Rng rng(808);
  for (int k = 0; k < 1000; ++k) {
    const auto nA = randomLayout(rng);
    const auto rows = randomRows(rng, nA);
    int nJA = 1;
    for (int a : nA) nJA *= a;
    QplexMixer mixer(static_cast<int>(nA.size()), 3, nJA, rng);
    const auto s = randomVec(rng, 3);
    std::vector<int> greedy;
    for (const auto& r : rows) greedy.push_back(argmaxLowest(r));
    for (int ja = 0; ja < nJA; ++ja) {
      const auto a = mixedRadixDigits(ja, nA);
      Graph g;
      std::vector<Var> q;
      for (const auto& r : rows) q.push_back(g.constant(r));
      const double adv = g.scalarValue(mixer.forward(g, q, a, ja, g.constant(s)).advantage);
      if (a == greedy) {
        c.require(std::abs(adv) <= 1e-12, "greedy advantage " + fmt("%.3g", adv));
      } else {
        c.require(adv <= 0.0, "positive advantage " + fmt("%.3g", adv));
      }
    }
  }
  c.note("1000 instances");
  return c.outcome();
}

Outcome qtranConstraints() {
  Checks c;
  const PayoffMatrix payoff{{{11.0, -30.0, 0.0}, {-30.0, 7.0, 6.0}, {0.0, 0.0, 5.0}}};
  const std::vector<int> nA{3, 3};
  ad::ParamStore ps;
  const int q1 = ps.add("q1", 3, 1);
  const int q2 = ps.add("q2", 3, 1);
  const int qj = ps.add("qj", 9, 1);
  const int v = ps.add("v", 1, 1);
  Rng rng(4);
  for (double& x : ps.values()) x = rng.uniform() - 0.5;
  ad::Adam opt(0.05);
  double loss = 1.0;
  int it = 0;
  for (; it < 20000 && loss > 1e-10; ++it) {
    ps.zeroGrad();
    loss = 0.0;
    for (int ja = 0; ja < 9; ++ja) {
      Graph g;
      std::vector<Var> rows{g.param(ps, q1), g.param(ps, q2)};
      auto t = qtranLosses(g, nA, rows, g.param(ps, qj), g.param(ps, v), ja, payoff[ja / 3][ja % 3],
                           QtranVariant::Base);
      loss += g.scalarValue(t.total);
      g.backward(t.total);
    }
    opt.step(ps);
  }
  c.require(loss < 1e-6, "fit loss " + fmt("%.3g", loss));
  const std::vector<std::vector<double>> rows{{ps.value(q1).begin(), ps.value(q1).end()},
                                              {ps.value(q2).begin(), ps.value(q2).end()}};
  const auto table = ps.value(qj);
  const double V = ps.value(v)[0];
  const std::vector<int> greedy{argmaxLowest(rows[0]), argmaxLowest(rows[1])};
  double worstEq = 0.0, worstIneq = 0.0;
  for (int ja = 0; ja < 9; ++ja) {
    const auto a = mixedRadixDigits(ja, nA);
    const double gap = rows[0][a[0]] + rows[1][a[1]] - table[ja] + V;
    if (a == greedy) {
      worstEq = std::max(worstEq, std::abs(gap));
    } else {
      worstIneq = std::min(worstIneq, gap);
    }
  }
  c.require(worstEq <= 1e-3, "equality gap " + fmt("%.3g", worstEq));
  c.require(worstIneq >= -1e-3, "inequality gap " + fmt("%.3g", worstIneq));
  auto joint = [&](const std::vector<int>& a) { return table[a[0] * 3 + a[1]]; };
  c.require(igmCheck(joint, rows, 1e-4), "IGM");
  c.note("loss " + fmt("%.2g", loss) + " after " + std::to_string(it) + " steps, |eq gap| " + fmt("%.2g", worstEq) +
         ", min ineq gap " + fmt("%.2g", worstIneq));
  return c.outcome();
}

Outcome comaIdentity() {
  Checks c;
  Rng rng(1010);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const auto nA = randomLayout(rng);
    int nJA = 1;
    for (int a : nA) nJA *= a;
    const auto table = randomVec(rng, nJA, -10.0, 10.0);
    auto q = [&](const std::vector<int>& ja) { return table[mixedRadixIndex(ja, nA)]; };
    const int agent = rng.uniformInt(static_cast<int>(nA.size()));
    auto pi = randomVec(rng, nA[agent], 1e-3, 1.0);
    double z = 0.0;
    for (double p : pi) z += p;
    for (double& p : pi) p /= z;
    std::vector<int> ja(nA.size());
    for (std::size_t i = 0; i < nA.size(); ++i) ja[i] = rng.uniformInt(nA[i]);
    double total = 0.0;
    for (int a = 0; a < nA[agent]; ++a) {
      ja[agent] = a;
      total += pi[a] * comaAdvantage(q, ja, pi, agent);
    }
    worst = std::max(worst, std::abs(total));
    c.require(std::abs(total) <= 1e-12, "sum " + fmt("%.3g", total));
  }
  c.note("1000 instances, max |sum| " + fmt("%.2g", worst));
  return c.outcome();
}

Outcome gradientDecomposition() {
  Checks c;
  const auto m = makeDecTiger(3);
  Rng rng(1111);
  std::vector<nn::RecurrentNet> actors;
  for (int i = 0; i < 2; ++i) actors.emplace_back("a" + std::to_string(i), nn::localInputDim(m, i), 8, 3, rng);
  ReinforceEstimator est;
  est.gamma = 0.9;
  const JointPolicy uniform{uniformPolicy(3), uniformPolicy(3)};
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto ep = rollout(m, uniform, Rng(seed));
    Graph g;
    for (auto& a : actors) a.params.zeroGrad();
    g.backward(jointReinforceSurrogate(g, actors, m, ep, est));
    for (int i = 0; i < 2; ++i) {
      const auto joint = actors[i].params.grads();
      auto copy = actors[i];
      Graph gl;
      copy.params.zeroGrad();
      gl.backward(reinforceSurrogate(gl, copy, localTrajectory(ep, i), est, m.horizon, 3, 2));
      const auto local = copy.params.grads();
      for (std::size_t k = 0; k < joint.size(); ++k) worst = std::max(worst, std::abs(joint[k] - local[k]));
    }
  }
  c.require(worst <= 1e-12, "max difference " + fmt("%.3g", worst));
  c.note("100 episodes, max |joint - per-agent| " + fmt("%.2g", worst));
  return c.outcome();
}

Outcome gradientChecks() {
  Checks c;
  double worst = 0.0;
  int checks = 0;
  auto check = [&](const std::string& name, ad::ParamStore& ps, const std::function<Var(Graph&)>& build) {
    const auto r = ad::gradCheck(ps, build);
    worst = std::max(worst, r.maxRelError);
    ++checks;
    c.require(r.maxRelError < 1e-4, name + " rel err " + fmt("%.3g", r.maxRelError));
  };
  const auto m = makeDecTiger(3);
  const int nA = 3, nO = 2;
  Rng rng(1212);
  const JointPolicy uniform{uniformPolicy(3), uniformPolicy(3)};
  const auto ep = rollout(m, uniform, Rng(7));
  const int L = ep.length();
  auto tr = localTrajectory(ep, 0);
  // Unit-scale rewards keep central differences above rounding noise.
  auto scaled = tr;
  for (double& r : scaled.rewards) r /= 100.0;
  JointHistory jh = JointHistory::empty(2);
  for (int t = 0; t + 1 < L; ++t) jh.append(ep.steps[t].actions, ep.steps[t].observations);
  const auto jointIn = nn::jointInputs(jh, m);
  const auto stateHot = nn::oneHot(ep.steps[L - 1].state, m.numStates);

  // Recurrent Q-network (IDRQN, Dec-HDRQN, agent nets of every factorization).
  nn::RecurrentNet qnet("q", nn::localInputDim(m, 0), 6, nA, rng);
  auto qtarget = qnet;
  check("drqn", qnet.params, [&](Graph& g) { return drqnLoss(g, qnet, qtarget, scaled, L - 1, 0.9, nA, nO); });

  // Utilities feeding each mixer.
  std::vector<nn::RecurrentNet> agents;
  for (int i = 0; i < 2; ++i) agents.emplace_back("agent" + std::to_string(i), nn::localInputDim(m, i), 6, nA, rng);
  auto chosen = [&](Graph& g) {
    std::vector<Var> qs;
    for (int i = 0; i < 2; ++i) {
      Var row = agents[i].forward(g, nn::localInputs(jh.perAgent[i], nA, nO));
      qs.push_back(g.gather(row, ep.steps[L - 1].actions[i]));
    }
    return qs;
  };
  auto sq = [](Graph& g, Var x, double y) { return g.square(g.addScalar(x, -y)); };
  check("vdn", agents[0].params, [&](Graph& g) { auto qs = chosen(g); return sq(g, vdnMix(g, qs), 0.3); });

  for (bool oneLayer : {false, true}) {
    QmixMixer mixer(2, m.numStates, 5, rng, oneLayer);
    const std::string tag = oneLayer ? "qmix-1layer" : "qmix-hypernet";
    auto loss = [&](Graph& g) {
      auto qs = chosen(g);
      return sq(g, mixer.forward(g, g.concat(qs), g.constant(stateHot)), 0.3);
    };
    check(tag + " mixer", mixer.params, loss);
    check(tag + " agent", agents[1].params, loss);
  }

  {
    // Weighted-QMIX unrestricted central mixer.
    ad::ParamStore ps;
    const auto mix = nn::Mlp::create(ps, "star", {2 + m.numStates, 5, 5, 1}, rng, nn::Activation::Relu);
    check("wqmix central", ps, [&](Graph& g) {
      auto qs = chosen(g);
      qs.push_back(g.constant(stateHot));
      return sq(g, mix(g, ps, g.concat(qs)), 0.3);
    });
  }

  {
    QplexMixer mixer(2, m.numStates, m.numJointActions(), rng);
    auto loss = [&](Graph& g) {
      std::vector<Var> rows;
      for (int i = 0; i < 2; ++i) rows.push_back(agents[i].forward(g, nn::localInputs(jh.perAgent[i], nA, nO)));
      const auto& a = ep.steps[L - 1].actions;
      return sq(g, mixer.forward(g, rows, a, m.jointAction(a), g.constant(stateHot)).qtot, 0.3);
    };
    check("qplex mixer", mixer.params, loss);
    check("qplex agent", agents[0].params, loss);
  }

  {
    nn::RecurrentNet joint("qtran.joint", nn::jointInputDim(m), 6, m.numJointActions() + 1, rng, 0, 5);
    const int nJA = m.numJointActions();
    // The constraint terms read a detached copy of the joint Q; central
    // differences must see that copy as a constant too.
    const auto out0 = joint.evaluate(jointIn);
    const std::vector<double> frozen(out0.begin(), out0.begin() + nJA);
    auto loss = [&](Graph& g) {
      std::vector<Var> rows;
      for (int i = 0; i < 2; ++i) rows.push_back(agents[i].forward(g, nn::localInputs(jh.perAgent[i], nA, nO)));
      Var out = joint.forward(g, jointIn);
      Var v = g.slice(out, nJA, 1);
      const int ja = ep.steps[L - 1].jointAction;
      const auto live = qtranLosses(g, m, rows, g.slice(out, 0, nJA), v, ja, 0.3, QtranVariant::Base);
      const auto held = qtranLosses(g, m, rows, g.constant(frozen), v, ja, 0.3, QtranVariant::Base);
      return g.add(live.td, g.add(held.opt, held.nopt));
    };
    check("qtran joint", joint.params, loss);
    check("qtran agent", agents[1].params, loss);
  }

  // Softmax actor (REINFORCE, actor-critic family, PPO).
  nn::RecurrentNet actor("actor", nn::localInputDim(m, 0), 6, nA, rng);
  check("actor", actor.params, [&](Graph& g) {
    auto lps = actorLogProbs(g, actor, tr, nA, nO);
    return g.sum(g.concat(lps));
  });

  // Critics of every kind.
  nn::RecurrentNet local("critic", nn::localInputDim(m, 0), 6, 1, rng);
  check("local critic", local.params,
        [&](Graph& g) { return sq(g, local.forward(g, nn::localInputs(jh.perAgent[0], nA, nO)), 0.5); });
  nn::RecurrentNet jointCritic("critic", nn::jointInputDim(m), 6, m.numJointActions(), rng);
  check("joint critic", jointCritic.params,
        [&](Graph& g) { return sq(g, g.gather(jointCritic.forward(g, jointIn), 4), 0.5); });
  nn::RecurrentNet histState("critic", nn::jointInputDim(m), 6, 1, rng, m.numStates, 6);
  check("history-state critic", histState.params, [&](Graph& g) {
    auto hs = histState.unroll(g, jointIn);
    return sq(g, histState.head(g, hs.back(), g.constant(stateHot)), 0.5);
  });
  {
    ad::ParamStore ps;
    const auto mlp = nn::Mlp::create(ps, "critic", {m.numStates, 6, 1}, rng);
    check("state critic", ps, [&](Graph& g) { return sq(g, mlp(g, ps, g.constant(stateHot)), 0.5); });
  }

  // MADDPG: actor through the critic, and the critic's TD loss.
  {
    Rendezvous1D env(3);
    Rng init(13), envRng(3), noiseRng(4);
    MaddpgNets nets(2, 6, init);
    auto target = nets;
    const auto cep = rolloutMaddpg(env, nets, 0.3, envRng, noiseRng);
    for (int agent = 0; agent < 2; ++agent) {
      check("maddpg mu o Q", nets.actors[agent].params,
            [&](Graph& g) { return maddpgActorObjective(g, nets, cep, 1, agent); });
    }
    check("maddpg critic", nets.critic.params, [&](Graph& g) {
      Graph gt;
      return maddpgCriticLoss(g, gt, nets, target, cep, 0, 0.95, env.horizon());
    });
  }
  c.note(std::to_string(checks) + " checks, worst rel err " + fmt("%.2g", worst));
  return c.outcome();
}

Outcome ppoClip() {
  Checks c;
  c.require(ppoClipObjective(1.0, 1.0, 0.2) == 1.0, "ratio 1");
  c.require(ppoClipObjective(2.0, 1.0, 0.2) == 1.2, "ratio 2, A=+1");
  c.require(ppoClipObjective(2.0, -1.0, 0.2) == -2.0, "ratio 2, A=-1");
  c.note("1, 1.2, -2");
  return c.outcome();
}

Outcome stateCriticBias() {
  Checks c;
  const auto t0 = std::chrono::steady_clock::now();
  const auto m = makeDecTiger(3);
  BruteForceOptions opts;
  opts.allowedActions = {{tiger::kOpenLeft, tiger::kOpenRight}, {tiger::kOpenLeft, tiger::kOpenRight}};
  const double noListen = bruteForceOptimal(m, opts).value;
  auto count = [&](CriticKind kind) {
    PgConfig cfg;
    cfg.algo = PgAlgo::Ia2cc;
    cfg.critic = kind;
    cfg.episodes = calib::kCriticBiasEpisodes;
    cfg.actorLr = calib::kCriticBiasActorLr;
    cfg.criticLr = calib::kCriticBiasCriticLr;
    cfg.gradClip = calib::kCriticBiasGradClip;
    cfg.adam = false;
    return successCount(m, noListen + 1e-9, 100,
                        [&](std::uint64_t s) { return trainPolicyGradient(m, cfg, s).greedyPolicy(m); });
  };
  const int hist = count(CriticKind::HistoryState);
  const int state = count(CriticKind::State);
  const double sec = seconds(t0);
  c.require(hist >= calib::kCriticBiasHistoryMin, "history-state critic " + std::to_string(hist));
  c.require(state < calib::kCriticBiasStateMax, "state critic " + std::to_string(state));
  c.require(sec < 600.0, "runtime");
  c.note("no-listen value " + fmt("%.2f", noListen) + "; beats it: history-state " + std::to_string(hist) +
         "/100, state " + std::to_string(state) + "/100, " + fmt("%.0fs", sec));
  return c.outcome();
}

Outcome certAlignment() {
  Checks c;
  const auto m = makeDecTiger(3);
  const JointPolicy uniform{uniformPolicy(3), uniformPolicy(3)};
  std::vector<CertBuffer> bufs(2, CertBuffer(100));
  for (int e = 0; e < 150; ++e) {
    const auto ep = rollout(m, uniform, Rng(e));
    for (int i = 0; i < 2; ++i) bufs[i].push(e, localTrajectory(ep, i));
  }
  Rng rng(1515);
  int identical = 0;
  for (int k = 0; k < 10000; ++k) {
    const auto idx = certSample(bufs, rng);
    identical += idx[0] == idx[1];
  }
  c.require(identical == 10000, "identical draws " + std::to_string(identical));
  bufs[1].push(999, localTrajectory(rollout(m, uniform, Rng(999)), 1));
  bool threw = false;
  try {
    certSample(bufs, rng);
  } catch (const std::logic_error&) {
    threw = true;
  }
  c.require(threw, "misaligned buffers accepted");
  c.note(std::to_string(identical) + "/10000 identical, misaligned rejected");
  return c.outcome();
}

Outcome hysteresisDegeneracy() {
  Checks c;
  const auto m = makeDecTiger(2);
  TabularConfig iql;
  iql.episodes = 2000;
  iql.alpha = 0.2;
  TabularConfig hyst = iql;
  hyst.algo = TabularAlgo::Hysteretic;
  hyst.beta = iql.alpha;
  const auto a = trainTabular(m, iql, 16), b = trainTabular(m, hyst, 16);
  for (int i = 0; i < 2; ++i) {
    c.require(a.q[i].size() == b.q[i].size(), "table sizes differ");
    for (const auto& [k, row] : a.q[i].table()) {
      const auto it = b.q[i].table().find(k);
      c.require(it != b.q[i].table().end() && it->second == row, "tabular entries differ");
    }
  }
  DrqnConfig d;
  d.episodes = 100;
  d.hidden = 6;
  DrqnConfig dh = d;
  dh.hysteretic = true;
  dh.beta = d.lr;
  const auto ra = trainDrqn(m, d, 16, {}, true), rb = trainDrqn(m, dh, 16, {}, true);
  c.require(ra.updates.size() == rb.updates.size(), "update counts differ");
  for (std::size_t k = 0; k < std::min(ra.updates.size(), rb.updates.size()); ++k) {
    c.require(ra.updates[k].delta == rb.updates[k].delta && ra.updates[k].lr == rb.updates[k].lr,
              "deep step " + std::to_string(k));
  }
  for (int i = 0; i < 2; ++i) c.require(ra.nets[i].params.values() == rb.nets[i].params.values(), "deep weights");
  c.note("tabular 2000 episodes bit-identical, deep " + std::to_string(ra.updates.size()) + " steps identical");
  return c.outcome();
}

// Number of action assignments to the observation-history nodes of one
// tree, visited one by one with an odometer over the nodes.
std::size_t enumerateTrees(int nA, int nO, int h) {
  long long nodes = 0, width = 1;
  for (int t = 0; t < h; ++t, width *= nO) nodes += width;
  std::vector<int> tree(nodes, 0);
  std::size_t count = 0;
  while (true) {
    ++count;
    long long i = nodes - 1;
    while (i >= 0 && ++tree[i] == nA) tree[i--] = 0;
    if (i < 0) return count;
  }
}

Outcome policyCounts() {
  Checks c;
  int compared = 0;
  for (int a = 1; a <= 5; ++a) {
    for (int o = 1; o <= 3; ++o) {
      for (int h = 1; h <= 5; ++h) {
        for (int n = 1; n <= 3; ++n) {
          const auto counts = countPolicies(a, o, h, n);
          if (counts.decentralized <= 10000) {
            // Explicit enumeration of joint policies as tuples of per-agent trees.
            const auto perCount = enumerateTrees(a, o, h);
            BigInt tuples = 0;
            std::vector<std::size_t> odo(n, 0);
            while (true) {
              ++tuples;
              int i = n - 1;
              while (i >= 0 && ++odo[i] == perCount) odo[i--] = 0;
              if (i < 0) break;
            }
            c.require(tuples == counts.decentralized, "decentralized a=" + std::to_string(a) + " o=" +
                                                           std::to_string(o) + " h=" + std::to_string(h) +
                                                           " n=" + std::to_string(n));
            c.require(BigInt(perCount) == counts.perAgent, "per agent");
            ++compared;
          }
          int jointA = 1, jointO = 1;
          for (int k = 0; k < n; ++k) {
            jointA *= a;
            jointO *= o;
          }
          if (counts.centralized <= 10000) {
            c.require(BigInt(enumerateTrees(jointA, jointO, h)) == counts.centralized, "centralized");
            ++compared;
          }
          if (h == 1) c.require(counts.decentralized == BigInt(jointA), "H=1 closed form");
        }
      }
    }
  }
  c.note(std::to_string(compared) + " enumerations");
  return c.outcome();
}

Outcome harnessDeterminism() {
  Checks c;
  const fs::path root = fs::temp_directory_path() / "marl_forge_acceptance";
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  int compared = 0;
  for (const std::string algo : {"iql", "distq", "idrqn", "qmix", "ippo"}) {
    harness::ExperimentConfig cfg;
    cfg.env = "dectiger";
    cfg.algo = algo;
    cfg.horizon = 2;
    cfg.episodes = 100;
    cfg.evalEvery = 25;
    cfg.seeds = {7};
    std::string bytes[2];
    for (int run = 0; run < 2; ++run) {
      const fs::path dir = root / (algo + std::to_string(run));
      fs::remove_all(dir);
      cfg.out = dir.string();
      harness::runExperiment(cfg);
      bytes[run] = slurp(dir / "metrics_seed7.csv");
    }
    c.require(!bytes[0].empty() && bytes[0] == bytes[1], algo + " CSV differs");
    ++compared;
  }
  fs::remove_all(root);
  c.note(std::to_string(compared) + " algorithms byte-identical");
  return c.outcome();
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> only;
  app.add_option("--only", only, "run only these criteria");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"oracle correctness", oracleCorrectness},
      {"value/Q consistency", bellmanConsistency},
      {"centralized convergence", centralizedConvergence},
      {"distributed-Q equivalence", distributedEquivalence},
      {"optimism ordering", optimismOrdering},
      {"IGM property suite", igmSuite},
      {"QMIX monotonicity", qmixMonotonicity},
      {"QPLEX structure", qplexStructure},
      {"QTRAN constraints", qtranConstraints},
      {"COMA identity", comaIdentity},
      {"gradient decomposition", gradientDecomposition},
      {"gradient checks", gradientChecks},
      {"PPO clip arithmetic", ppoClip},
      {"state-critic bias", stateCriticBias},
      {"CERT alignment", certAlignment},
      {"hysteresis degeneracy", hysteresisDegeneracy},
      {"policy counts", policyCounts},
      {"harness determinism", harnessDeterminism},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[k].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
