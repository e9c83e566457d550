#include "marl/nn.hpp"

#include <stdexcept>

namespace marl::nn {

Var activate(Graph& g, Var x, Activation act) {
  switch (act) {
  case Activation::Tanh:
    return g.tanh(x);
  case Activation::Relu:
    return g.relu(x);
  case Activation::Elu:
    return g.elu(x);
  }
  return x;
}

Linear Linear::create(ParamStore& ps, const std::string& name, int in, int out, Rng& rng, bool bias) {
  Linear l;
  l.in = in;
  l.out = out;
  l.W = ps.add(name + ".W", out, in);
  ps.initUniformFanIn(l.W, in, rng);
  if (bias) {
    l.b = ps.add(name + ".b", out, 1);
  }
  return l;
}

Var Linear::operator()(Graph& g, ParamStore& ps, Var x) const {
  Var y = g.matvec(g.param(ps, W), x);
  if (b >= 0) {
    y = g.add(y, g.param(ps, b));
  }
  return y;
}

Mlp Mlp::create(ParamStore& ps, const std::string& name, const std::vector<int>& dims, Rng& rng,
                Activation act) {
  if (dims.size() < 2) {
    throw std::invalid_argument("Mlp needs at least input and output dims");
  }
  Mlp m;
  m.act = act;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    m.layers.push_back(Linear::create(ps, name + ".l" + std::to_string(i), dims[i], dims[i + 1], rng));
  }
  return m;
}

Var Mlp::operator()(Graph& g, ParamStore& ps, Var x) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = layers[i](g, ps, x);
    if (i + 1 < layers.size()) {
      x = activate(g, x, act);
    }
  }
  return x;
}

GatedCell GatedCell::create(ParamStore& ps, const std::string& name, int inputDim, int hidden,
                            Rng& rng) {
  GatedCell c;
  c.inputDim = inputDim;
  c.hidden = hidden;
  c.gate = Linear::create(ps, name + ".gate", inputDim + hidden, hidden, rng);
  c.cand = Linear::create(ps, name + ".cand", inputDim + hidden, hidden, rng);
  return c;
}

Var GatedCell::operator()(Graph& g, ParamStore& ps, Var x, Var h) const {
  Var xh = g.concat({x, h});
  Var z = g.sigmoid(gate(g, ps, xh));
  Var c = g.tanh(cand(g, ps, xh));
  // (1 - z) * h + z * c  ==  h + z * (c - h)
  return g.add(h, g.mul(z, g.sub(c, h)));
}

Hypernet Hypernet::create(ParamStore& ps, const std::string& name, int condDim, int rows, int cols,
                          Rng& rng) {
  Hypernet h;
  h.rows = rows;
  h.cols = cols;
  h.lin = Linear::create(ps, name, condDim, rows * cols, rng);
  return h;
}

Var Hypernet::operator()(Graph& g, ParamStore& ps, Var cond) const {
  return g.reshape(ad::positiveWeights(lin(g, ps, cond)), rows, cols);
}

RecurrentNet::RecurrentNet(const std::string& name, int inputDim, int hidden, int outDim, Rng& rng,
                           int sideDim, int headHidden)
    : outDim_(outDim), sideDim_(sideDim) {
  cell_ = GatedCell::create(params, name + ".cell", inputDim, hidden, rng);
  std::vector<int> dims{hidden + sideDim};
  if (headHidden > 0) {
    dims.push_back(headHidden);
  }
  dims.push_back(outDim);
  head_ = Mlp::create(params, name + ".head", dims, rng);
}

Var RecurrentNet::head(Graph& g, Var h) {
  if (sideDim_ != 0) {
    throw std::invalid_argument("RecurrentNet::head: side input required");
  }
  return head_(g, params, h);
}

Var RecurrentNet::head(Graph& g, Var h, Var side) {
  if (side.size() != sideDim_) {
    throw std::invalid_argument("RecurrentNet::head: side input has wrong size");
  }
  return head_(g, params, g.concat({h, side}));
}

std::vector<Var> RecurrentNet::unroll(Graph& g, const std::vector<std::vector<double>>& inputs) {
  std::vector<Var> hs;
  hs.reserve(inputs.size() + 1);
  hs.push_back(initialHidden(g));
  for (const auto& x : inputs) {
    if (static_cast<int>(x.size()) != cell_.inputDim) {
      throw std::invalid_argument("RecurrentNet::unroll: input has wrong size");
    }
    hs.push_back(step(g, g.constant(x), hs.back()));
  }
  return hs;
}

Var RecurrentNet::forward(Graph& g, const std::vector<std::vector<double>>& inputs) {
  return head(g, unroll(g, inputs).back());
}

std::vector<double> RecurrentNet::evaluate(const std::vector<std::vector<double>>& inputs) {
  Graph g;
  return forward(g, inputs).values();
}

std::vector<double> oneHot(int index, int n) {
  if (index < 0 || index >= n) {
    throw std::out_of_range("oneHot index out of range");
  }
  std::vector<double> v(n, 0.0);
  v[index] = 1.0;
  return v;
}

std::vector<std::vector<double>> localInputs(const LocalHistory& h, int nActions, int nObs) {
  std::vector<std::vector<double>> xs;
  xs.reserve(h.entries.size());
  for (const auto& e : h.entries) {
    std::vector<double> x(nActions + nObs, 0.0);
    x[e.action] = 1.0;
    x[nActions + e.observation] = 1.0;
    xs.push_back(std::move(x));
  }
  return xs;
}

std::vector<std::vector<double>> jointInputs(const JointHistory& jh, const DecPomdpModel& model) {
  std::vector<std::vector<double>> xs(jh.length());
  for (int t = 0; t < jh.length(); ++t) {
    auto& x = xs[t];
    x.reserve(jointInputDim(model));
    for (int i = 0; i < model.numAgents; ++i) {
      const auto& e = jh.perAgent[i].entries[t];
      const std::size_t base = x.size();
      x.resize(base + model.numActions[i] + model.numObservations[i], 0.0);
      x[base + e.action] = 1.0;
      x[base + model.numActions[i] + e.observation] = 1.0;
    }
  }
  return xs;
}

int localInputDim(const DecPomdpModel& model, int agent) {
  return model.numActions[agent] + model.numObservations[agent];
}

int jointInputDim(const DecPomdpModel& model) {
  int d = 0;
  for (int i = 0; i < model.numAgents; ++i) {
    d += localInputDim(model, i);
  }
  return d;
}

} // namespace marl::nn
