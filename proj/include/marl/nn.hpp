#pragma once

#include <string>
#include <vector>

#include "marl/autodiff.hpp"
#include "marl/core.hpp"

namespace marl::nn {

using ad::Graph;
using ad::ParamStore;
using ad::Var;

enum class Activation { Tanh, Relu, Elu };

Var activate(Graph& g, Var x, Activation act);

struct Linear {
  int W = -1;
  int b = -1;
  int in = 0;
  int out = 0;

  /// Weights drawn uniformly with the fan-in scale, biases zero.
  static Linear create(ParamStore& ps, const std::string& name, int in, int out, Rng& rng,
                       bool bias = true);
  Var operator()(Graph& g, ParamStore& ps, Var x) const;
};

/// Dense layers with `act` between them and a linear output.
struct Mlp {
  std::vector<Linear> layers;
  Activation act = Activation::Tanh;

  static Mlp create(ParamStore& ps, const std::string& name, const std::vector<int>& dims, Rng& rng,
                    Activation act = Activation::Tanh);
  Var operator()(Graph& g, ParamStore& ps, Var x) const;
  int inDim() const { return layers.front().in; }
  int outDim() const { return layers.back().out; }
};

/// Single-gate recurrent cell:
///   z  = sigmoid(Wz [x; h] + bz)
///   c  = tanh(Wc [x; h] + bc)
///   h' = (1 - z) * h + z * c
struct GatedCell {
  Linear gate;
  Linear cand;
  int inputDim = 0;
  int hidden = 0;

  static GatedCell create(ParamStore& ps, const std::string& name, int inputDim, int hidden, Rng& rng);
  Var operator()(Graph& g, ParamStore& ps, Var x, Var h) const;
};

/// Produces a rows x cols weight matrix from a conditioning vector, passed
/// through positiveWeights.
struct Hypernet {
  Linear lin;
  int rows = 0;
  int cols = 0;

  static Hypernet create(ParamStore& ps, const std::string& name, int condDim, int rows, int cols,
                         Rng& rng);
  Var operator()(Graph& g, ParamStore& ps, Var cond) const;
};

/// Recurrent network: gated cell over per-step inputs, then an MLP head on
/// [hidden; side], where `side` is an optional extra input (e.g. a state).
class RecurrentNet {
public:
  RecurrentNet() = default;
  RecurrentNet(const std::string& name, int inputDim, int hidden, int outDim, Rng& rng,
               int sideDim = 0, int headHidden = 0);

  ParamStore params;

  int inputDim() const { return cell_.inputDim; }
  int hidden() const { return cell_.hidden; }
  int outDim() const { return outDim_; }
  int sideDim() const { return sideDim_; }

  Var initialHidden(Graph& g) const { return g.zeros(cell_.hidden); }
  Var step(Graph& g, Var x, Var h) { return cell_(g, params, x, h); }
  Var head(Graph& g, Var h);
  Var head(Graph& g, Var h, Var side);

  /// Hidden states after every prefix of `inputs`, starting with the zero
  /// state for the empty prefix (so the result has inputs.size() + 1 entries).
  std::vector<Var> unroll(Graph& g, const std::vector<std::vector<double>>& inputs);
  /// Output for the full input sequence.
  Var forward(Graph& g, const std::vector<std::vector<double>>& inputs);
  std::vector<double> evaluate(const std::vector<std::vector<double>>& inputs);

private:
  GatedCell cell_;
  Mlp head_;
  int outDim_ = 0;
  int sideDim_ = 0;
};

std::vector<double> oneHot(int index, int n);

/// Per-step input of a local history entry: onehot(a) ++ onehot(o).
std::vector<std::vector<double>> localInputs(const LocalHistory& h, int nActions, int nObs);
/// Concatenation of all agents' step inputs.
std::vector<std::vector<double>> jointInputs(const JointHistory& jh, const DecPomdpModel& model);
int localInputDim(const DecPomdpModel& model, int agent);
int jointInputDim(const DecPomdpModel& model);

} // namespace marl::nn
