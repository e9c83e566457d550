#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "marl/rng.hpp"

namespace marl::ad {

struct Tensor {
  std::vector<int> shape;
  std::vector<double> values;

  Tensor() = default;
  Tensor(std::vector<int> shape, std::vector<double> values);
  static Tensor vector(std::vector<double> values);
  std::size_t size() const { return values.size(); }
};

struct ParamInfo {
  std::string name;
  std::size_t offset = 0;
  int rows = 0;
  int cols = 0;
  std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
};

/// Flat parameter registry. Matrices are row-major. Copying a store (for
/// example as part of a network) yields an independent snapshot.
class ParamStore {
public:
  /// Registers a rows x cols parameter initialised to zero; returns its id.
  int add(const std::string& name, int rows, int cols);

  std::span<double> value(int id);
  std::span<const double> value(int id) const;
  std::span<double> grad(int id);
  const ParamInfo& info(int id) const { return infos_.at(id); }
  int count() const { return static_cast<int>(infos_.size()); }
  std::size_t size() const { return values_.size(); }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& grads() { return grads_; }
  const std::vector<double>& grads() const { return grads_; }

  void zeroGrad();
  /// Uniform(-1/sqrt(fanIn), 1/sqrt(fanIn)) for the given parameter.
  void initUniformFanIn(int id, int fanIn, Rng& rng);

  /// Binary layout: magic "MFPARAM1", uint64 count of doubles, then the
  /// doubles in registration order (little-endian IEEE-754). A text manifest
  /// `<path>.manifest` lists "name rows cols offset" per parameter.
  void save(const std::string& path) const;
  /// Loads values saved from a store with an identical manifest.
  void load(const std::string& path);
  std::string manifest() const;

private:
  std::vector<double> values_;
  std::vector<double> grads_;
  std::vector<ParamInfo> infos_;
};

enum class Op {
  Const,
  Param,
  Add,
  Sub,
  Mul,
  Scale,
  AddScalar,
  MatVec,
  Tanh,
  Sigmoid,
  Relu,
  Elu,
  Exp,
  Log,
  Abs,
  Square,
  Neg,
  Softmax,
  LogSoftmax,
  Gather,
  Concat,
  Slice,
  Sum,
  MaxElement,
  Min2,
  Max2,
  Clip,
  Reshape,
  StopGradient,
};

class Graph;

/// Handle to a node of a Graph.
struct Var {
  Graph* g = nullptr;
  int id = -1;

  int size() const;
  double value(int i = 0) const;
  std::vector<double> values() const;
  bool valid() const { return g != nullptr && id >= 0; }
};

/// Tape of primitive operations. Values and gradients live in two flat
/// arenas; clear() keeps their capacity for reuse across updates.
class Graph {
public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  void clear();
  int nodeCount() const { return static_cast<int>(nodes_.size()); }

  Var constant(std::span<const double> v);
  Var constant(const Tensor& t);
  Var scalar(double v);
  Var zeros(int n);
  Var oneHot(int index, int n);
  /// Parameter leaf; gradients accumulate into store.grad(id) on backward.
  Var param(ParamStore& store, int id);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  /// Elementwise product; a size-1 operand broadcasts.
  Var mul(Var a, Var b);
  Var scale(Var a, double c);
  Var addScalar(Var a, double c);
  /// A viewed as rows x cols (row-major) times vector x.
  Var matvec(Var A, Var x);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var relu(Var a);
  Var elu(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var abs(Var a);
  Var square(Var a);
  Var neg(Var a);
  Var softmax(Var a);
  Var logSoftmax(Var a);
  Var gather(Var a, int index);
  Var concat(std::span<const Var> parts);
  Var concat(std::initializer_list<Var> parts);
  Var slice(Var a, int offset, int length);
  Var sum(Var a);
  Var mean(Var a);
  /// Largest element; gradient flows to the lowest index attaining it.
  Var maxElement(Var a);
  /// Elementwise min/max; ties send the gradient to the first operand.
  Var min2(Var a, Var b);
  Var max2(Var a, Var b);
  /// Clamp to [lo, hi]; zero gradient where clamping is active.
  Var clip(Var a, double lo, double hi);
  Var reshape(Var a, int rows, int cols);
  /// Identity in the forward pass, blocks gradients in the backward pass.
  Var stopGradient(Var a);
  Var dot(Var a, Var b) { return sum(mul(a, b)); }

  /// Reverse sweep from a scalar loss. Gradients are added into parameter
  /// stores (call zeroGrad first for a fresh gradient).
  void backward(Var loss);

  std::span<const double> value(Var v) const;
  double scalarValue(Var v) const;
  /// Gradient of the last backward() loss with respect to v.
  std::span<const double> grad(Var v) const;
  int rows(Var v) const { return nodes_.at(v.id).rows; }
  int cols(Var v) const { return nodes_.at(v.id).cols; }

private:
  struct Node {
    Op op;
    int a = -1;
    int b = -1;
    std::size_t off = 0;
    int n = 0;
    int rows = 0;
    int cols = 1;
    double c0 = 0.0;
    double c1 = 0.0;
    int aux = 0;
    ParamStore* store = nullptr;
    int extraBegin = 0;
    int extraLen = 0;
  };

  int push(Op op, int n, int a = -1, int b = -1);
  const Node& node(Var v) const;
  double* val(int id) { return vals_.data() + nodes_[id].off; }
  const double* val(int id) const { return vals_.data() + nodes_[id].off; }
  double* grd(int id) { return grads_.data() + nodes_[id].off; }
  void check(Var v) const;

  std::vector<Node> nodes_;
  std::vector<double> vals_;
  std::vector<double> grads_;
  std::vector<int> extra_;
  bool haveGrads_ = false;
};

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator*(double c, Var a);
Var operator*(Var a, double c);
Var operator+(Var a, double c);
Var operator-(Var a, double c);
Var operator-(Var a);

/// Elementwise absolute value used to keep mixing weights non-negative.
Var positiveWeights(Var raw);

class Sgd {
public:
  explicit Sgd(double lr) : lr_(lr) {}
  void step(ParamStore& store) const;
  double lr() const { return lr_; }
  void setLr(double lr) { lr_ = lr; }

private:
  double lr_;
};

class Adam {
public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(ParamStore& store);
  /// Step with a one-off learning rate (used for sign-dependent hysteresis).
  void step(ParamStore& store, double lr);
  long long steps() const { return t_; }
  double lr() const { return lr_; }

private:
  double lr_, beta1_, beta2_, eps_;
  std::vector<double> m_, v_;
  long long t_ = 0;
};

/// Scales gradients so their global L2 norm is at most maxNorm.
void clipGradNorm(ParamStore& store, double maxNorm);

struct GradCheckResult {
  double maxRelError = 0.0;
  int worstIndex = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Central-difference check of d(build)/d(store). `build` must construct a
/// scalar loss on the given graph from the store's current values. Pairs whose
/// absolute difference is below 1e-10 count as exact. Throws on non-finite
/// values.
GradCheckResult gradCheck(ParamStore& store, const std::function<Var(Graph&)>& build,
                          double eps = 1e-5);

} // namespace marl::ad
