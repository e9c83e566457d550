#include "marl/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace marl::ad {

Tensor::Tensor(std::vector<int> s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) {
      throw std::invalid_argument("Tensor: negative dimension");
    }
    n *= static_cast<std::size_t>(d);
  }
  if (n != values.size()) {
    throw std::invalid_argument("Tensor: shape does not match value count");
  }
}

Tensor Tensor::vector(std::vector<double> v) {
  const int n = static_cast<int>(v.size());
  return Tensor({n}, std::move(v));
}

// ---------------------------------------------------------------- ParamStore

int ParamStore::add(const std::string& name, int rows, int cols) {
  if (rows <= 0 || cols <= 0) {
    throw std::invalid_argument("ParamStore::add: non-positive shape for " + name);
  }
  ParamInfo info{name, values_.size(), rows, cols};
  values_.resize(values_.size() + info.size(), 0.0);
  grads_.resize(values_.size(), 0.0);
  infos_.push_back(info);
  return static_cast<int>(infos_.size()) - 1;
}

std::span<double> ParamStore::value(int id) {
  const auto& in = infos_.at(id);
  return {values_.data() + in.offset, in.size()};
}

std::span<const double> ParamStore::value(int id) const {
  const auto& in = infos_.at(id);
  return {values_.data() + in.offset, in.size()};
}

std::span<double> ParamStore::grad(int id) {
  const auto& in = infos_.at(id);
  return {grads_.data() + in.offset, in.size()};
}

void ParamStore::zeroGrad() { std::fill(grads_.begin(), grads_.end(), 0.0); }

void ParamStore::initUniformFanIn(int id, int fanIn, Rng& rng) {
  const double lim = 1.0 / std::sqrt(static_cast<double>(std::max(1, fanIn)));
  for (auto& x : value(id)) {
    x = -lim + 2.0 * lim * rng.uniform();
  }
}

std::string ParamStore::manifest() const {
  std::ostringstream os;
  for (const auto& in : infos_) {
    os << in.name << ' ' << in.rows << ' ' << in.cols << ' ' << in.offset << '\n';
  }
  return os.str();
}

namespace {

constexpr char kMagic[8] = {'M', 'F', 'P', 'A', 'R', 'A', 'M', '1'};

void writeLe64(std::ostream& os, std::uint64_t x) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) {
    buf[i] = static_cast<unsigned char>(x >> (8 * i));
  }
  os.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t readLe64(std::istream& is) {
  unsigned char buf[8];
  is.read(reinterpret_cast<char*>(buf), 8);
  if (!is) {
    throw std::runtime_error("parameter file truncated");
  }
  std::uint64_t x = 0;
  for (int i = 0; i < 8; ++i) {
    x |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  }
  return x;
}

} // namespace

void ParamStore::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw std::runtime_error("cannot write parameter file " + path);
  }
  os.write(kMagic, 8);
  writeLe64(os, values_.size());
  for (double v : values_) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    writeLe64(os, bits);
  }
  std::ofstream ms(path + ".manifest");
  if (!ms) {
    throw std::runtime_error("cannot write manifest for " + path);
  }
  ms << manifest();
}

void ParamStore::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw std::runtime_error("cannot read parameter file " + path);
  }
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) {
    throw std::runtime_error("not a parameter file: " + path);
  }
  const std::uint64_t n = readLe64(is);
  if (n != values_.size()) {
    throw std::runtime_error("parameter count mismatch loading " + path);
  }
  std::ifstream ms(path + ".manifest");
  if (ms) {
    std::stringstream buf;
    buf << ms.rdbuf();
    if (buf.str() != manifest()) {
      throw std::runtime_error("parameter manifest mismatch loading " + path);
    }
  }
  for (auto& v : values_) {
    const std::uint64_t bits = readLe64(is);
    std::memcpy(&v, &bits, 8);
  }
}

// ---------------------------------------------------------------- Var

int Var::size() const { return static_cast<int>(g->value(*this).size()); }
double Var::value(int i) const { return g->value(*this)[i]; }
std::vector<double> Var::values() const {
  auto s = g->value(*this);
  return {s.begin(), s.end()};
}

// ---------------------------------------------------------------- Graph

void Graph::clear() {
  nodes_.clear();
  vals_.clear();
  grads_.clear();
  extra_.clear();
  haveGrads_ = false;
}

int Graph::push(Op op, int n, int a, int b) {
  Node nd;
  nd.op = op;
  nd.a = a;
  nd.b = b;
  nd.off = vals_.size();
  nd.n = n;
  nd.rows = n;
  nd.cols = 1;
  vals_.resize(vals_.size() + n, 0.0);
  nodes_.push_back(nd);
  haveGrads_ = false;
  return static_cast<int>(nodes_.size()) - 1;
}

void Graph::check(Var v) const {
  if (v.g != this || v.id < 0 || v.id >= static_cast<int>(nodes_.size())) {
    throw std::invalid_argument("Var does not belong to this graph");
  }
}

const Graph::Node& Graph::node(Var v) const {
  check(v);
  return nodes_[v.id];
}

std::span<const double> Graph::value(Var v) const {
  const auto& nd = node(v);
  return {vals_.data() + nd.off, static_cast<std::size_t>(nd.n)};
}

double Graph::scalarValue(Var v) const {
  const auto& nd = node(v);
  if (nd.n != 1) {
    throw std::invalid_argument("scalarValue of non-scalar node");
  }
  return vals_[nd.off];
}

std::span<const double> Graph::grad(Var v) const {
  const auto& nd = node(v);
  if (!haveGrads_) {
    throw std::logic_error("grad requested before backward");
  }
  return {grads_.data() + nd.off, static_cast<std::size_t>(nd.n)};
}

Var Graph::constant(std::span<const double> v) {
  const int id = push(Op::Const, static_cast<int>(v.size()));
  std::copy(v.begin(), v.end(), val(id));
  return {this, id};
}

Var Graph::constant(const Tensor& t) {
  Var v = constant(std::span<const double>(t.values));
  if (t.shape.size() == 2) {
    nodes_[v.id].rows = t.shape[0];
    nodes_[v.id].cols = t.shape[1];
  }
  return v;
}

Var Graph::scalar(double v) { return constant(std::span<const double>(&v, 1)); }

Var Graph::zeros(int n) {
  const int id = push(Op::Const, n);
  return {this, id};
}

Var Graph::oneHot(int index, int n) {
  if (index < 0 || index >= n) {
    throw std::out_of_range("oneHot index out of range");
  }
  const int id = push(Op::Const, n);
  val(id)[index] = 1.0;
  return {this, id};
}

Var Graph::param(ParamStore& store, int pid) {
  const auto& in = store.info(pid);
  const int id = push(Op::Param, static_cast<int>(in.size()));
  nodes_[id].store = &store;
  nodes_[id].aux = pid;
  nodes_[id].rows = in.rows;
  nodes_[id].cols = in.cols;
  auto src = store.value(pid);
  std::copy(src.begin(), src.end(), val(id));
  return {this, id};
}

namespace {

void shapeError(const char* op, int n1, int n2) {
  throw std::invalid_argument(std::string("shape mismatch in ") + op + ": " + std::to_string(n1) +
                              " vs " + std::to_string(n2));
}

} // namespace

Var Graph::add(Var a, Var b) {
  const int na = node(a).n, nb = node(b).n;
  if (na != nb) {
    shapeError("add", na, nb);
  }
  const int id = push(Op::Add, na, a.id, b.id);
  for (int i = 0; i < na; ++i) {
    val(id)[i] = val(a.id)[i] + val(b.id)[i];
  }
  return {this, id};
}

Var Graph::sub(Var a, Var b) {
  const int na = node(a).n, nb = node(b).n;
  if (na != nb) {
    shapeError("sub", na, nb);
  }
  const int id = push(Op::Sub, na, a.id, b.id);
  for (int i = 0; i < na; ++i) {
    val(id)[i] = val(a.id)[i] - val(b.id)[i];
  }
  return {this, id};
}

Var Graph::mul(Var a, Var b) {
  const int na = node(a).n, nb = node(b).n;
  if (na != nb && na != 1 && nb != 1) {
    shapeError("mul", na, nb);
  }
  const int n = std::max(na, nb);
  const int id = push(Op::Mul, n, a.id, b.id);
  for (int i = 0; i < n; ++i) {
    val(id)[i] = val(a.id)[na == 1 ? 0 : i] * val(b.id)[nb == 1 ? 0 : i];
  }
  return {this, id};
}

Var Graph::scale(Var a, double c) {
  const int n = node(a).n;
  const int id = push(Op::Scale, n, a.id);
  nodes_[id].c0 = c;
  for (int i = 0; i < n; ++i) {
    val(id)[i] = c * val(a.id)[i];
  }
  return {this, id};
}

Var Graph::addScalar(Var a, double c) {
  const int n = node(a).n;
  const int id = push(Op::AddScalar, n, a.id);
  for (int i = 0; i < n; ++i) {
    val(id)[i] = val(a.id)[i] + c;
  }
  return {this, id};
}

Var Graph::matvec(Var A, Var x) {
  const auto& na = node(A);
  const int rows = na.rows, cols = na.cols;
  const int nx = node(x).n;
  if (cols != nx || rows * cols != na.n) {
    shapeError("matvec", cols, nx);
  }
  const int id = push(Op::MatVec, rows, A.id, x.id);
  const double* a = val(A.id);
  const double* xv = val(x.id);
  double* out = val(id);
  for (int r = 0; r < rows; ++r) {
    double s = 0.0;
    for (int c = 0; c < cols; ++c) {
      s += a[r * cols + c] * xv[c];
    }
    out[r] = s;
  }
  return {this, id};
}

#define MARL_UNARY(NAME, OP, EXPR)                   \
  Var Graph::NAME(Var a) {                           \
    const int n = node(a).n;                         \
    const int id = push(Op::OP, n, a.id);            \
    for (int i = 0; i < n; ++i) {                    \
      const double x = val(a.id)[i];                 \
      val(id)[i] = (EXPR);                           \
    }                                                \
    return {this, id};                               \
  }

MARL_UNARY(tanh, Tanh, std::tanh(x))
MARL_UNARY(sigmoid, Sigmoid, 1.0 / (1.0 + std::exp(-x)))
MARL_UNARY(relu, Relu, x > 0.0 ? x : 0.0)
MARL_UNARY(elu, Elu, x > 0.0 ? x : std::expm1(x))
MARL_UNARY(exp, Exp, std::exp(x))
MARL_UNARY(log, Log, std::log(x))
MARL_UNARY(abs, Abs, std::abs(x))
MARL_UNARY(square, Square, x * x)
MARL_UNARY(neg, Neg, -x)
MARL_UNARY(stopGradient, StopGradient, x)

#undef MARL_UNARY

Var Graph::softmax(Var a) {
  const int n = node(a).n;
  const int id = push(Op::Softmax, n, a.id);
  const double* x = val(a.id);
  const double mx = *std::max_element(x, x + n);
  double z = 0.0;
  for (int i = 0; i < n; ++i) {
    val(id)[i] = std::exp(x[i] - mx);
    z += val(id)[i];
  }
  for (int i = 0; i < n; ++i) {
    val(id)[i] /= z;
  }
  return {this, id};
}

Var Graph::logSoftmax(Var a) {
  const int n = node(a).n;
  const int id = push(Op::LogSoftmax, n, a.id);
  const double* x = val(a.id);
  const double mx = *std::max_element(x, x + n);
  double z = 0.0;
  for (int i = 0; i < n; ++i) {
    z += std::exp(x[i] - mx);
  }
  const double lz = mx + std::log(z);
  for (int i = 0; i < n; ++i) {
    val(id)[i] = x[i] - lz;
  }
  return {this, id};
}

Var Graph::gather(Var a, int index) {
  const int n = node(a).n;
  if (index < 0 || index >= n) {
    throw std::out_of_range("gather index out of range");
  }
  const int id = push(Op::Gather, 1, a.id);
  nodes_[id].aux = index;
  val(id)[0] = val(a.id)[index];
  return {this, id};
}

Var Graph::concat(std::span<const Var> parts) {
  int n = 0;
  for (const auto& p : parts) {
    n += node(p).n;
  }
  const int begin = static_cast<int>(extra_.size());
  for (const auto& p : parts) {
    extra_.push_back(p.id);
  }
  const int id = push(Op::Concat, n);
  nodes_[id].extraBegin = begin;
  nodes_[id].extraLen = static_cast<int>(parts.size());
  int k = 0;
  for (const auto& p : parts) {
    const int m = nodes_[p.id].n;
    std::copy(val(p.id), val(p.id) + m, val(id) + k);
    k += m;
  }
  return {this, id};
}

Var Graph::concat(std::initializer_list<Var> parts) {
  return concat(std::span<const Var>(parts.begin(), parts.size()));
}

Var Graph::slice(Var a, int offset, int length) {
  const int n = node(a).n;
  if (offset < 0 || length < 0 || offset + length > n) {
    throw std::out_of_range("slice out of range");
  }
  const int id = push(Op::Slice, length, a.id);
  nodes_[id].aux = offset;
  std::copy(val(a.id) + offset, val(a.id) + offset + length, val(id));
  return {this, id};
}

Var Graph::sum(Var a) {
  const int n = node(a).n;
  const int id = push(Op::Sum, 1, a.id);
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    s += val(a.id)[i];
  }
  val(id)[0] = s;
  return {this, id};
}

Var Graph::mean(Var a) { return scale(sum(a), 1.0 / node(a).n); }

Var Graph::maxElement(Var a) {
  const int n = node(a).n;
  if (n == 0) {
    throw std::invalid_argument("maxElement of empty node");
  }
  const int id = push(Op::MaxElement, 1, a.id);
  const double* x = val(a.id);
  int best = 0;
  for (int i = 1; i < n; ++i) {
    if (x[i] > x[best]) {
      best = i;
    }
  }
  nodes_[id].aux = best;
  val(id)[0] = x[best];
  return {this, id};
}

Var Graph::min2(Var a, Var b) {
  const int na = node(a).n, nb = node(b).n;
  if (na != nb) {
    shapeError("min2", na, nb);
  }
  const int id = push(Op::Min2, na, a.id, b.id);
  for (int i = 0; i < na; ++i) {
    val(id)[i] = std::min(val(a.id)[i], val(b.id)[i]);
  }
  return {this, id};
}

Var Graph::max2(Var a, Var b) {
  const int na = node(a).n, nb = node(b).n;
  if (na != nb) {
    shapeError("max2", na, nb);
  }
  const int id = push(Op::Max2, na, a.id, b.id);
  for (int i = 0; i < na; ++i) {
    val(id)[i] = std::max(val(a.id)[i], val(b.id)[i]);
  }
  return {this, id};
}

Var Graph::clip(Var a, double lo, double hi) {
  if (lo > hi) {
    throw std::invalid_argument("clip: lo > hi");
  }
  const int n = node(a).n;
  const int id = push(Op::Clip, n, a.id);
  nodes_[id].c0 = lo;
  nodes_[id].c1 = hi;
  for (int i = 0; i < n; ++i) {
    val(id)[i] = std::clamp(val(a.id)[i], lo, hi);
  }
  return {this, id};
}

Var Graph::reshape(Var a, int rows, int cols) {
  const int n = node(a).n;
  if (rows * cols != n) {
    shapeError("reshape", rows * cols, n);
  }
  const int id = push(Op::Reshape, n, a.id);
  nodes_[id].rows = rows;
  nodes_[id].cols = cols;
  std::copy(val(a.id), val(a.id) + n, val(id));
  return {this, id};
}

void Graph::backward(Var loss) {
  const auto& ln = node(loss);
  if (ln.n != 1) {
    throw std::invalid_argument("backward: loss must be scalar");
  }
  grads_.assign(vals_.size(), 0.0);
  grd(loss.id)[0] = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    const Node& nd = nodes_[id];
    const double* g = grads_.data() + nd.off;
    const double* y = vals_.data() + nd.off;
    const int n = nd.n;
    bool any = false;
    for (int i = 0; i < n && !any; ++i) {
      any = g[i] != 0.0;
    }
    if (!any) {
      continue;
    }
    switch (nd.op) {
    case Op::Const:
    case Op::StopGradient:
      break;
    case Op::Param: {
      auto pg = nd.store->grad(nd.aux);
      for (int i = 0; i < n; ++i) {
        pg[i] += g[i];
      }
      break;
    }
    case Op::Add:
      for (int i = 0; i < n; ++i) {
        grd(nd.a)[i] += g[i];
        grd(nd.b)[i] += g[i];
      }
      break;
    case Op::Sub:
      for (int i = 0; i < n; ++i) {
        grd(nd.a)[i] += g[i];
        grd(nd.b)[i] -= g[i];
      }
      break;
    case Op::Mul: {
      const int na = nodes_[nd.a].n, nb = nodes_[nd.b].n;
      const double* xa = val(nd.a);
      const double* xb = val(nd.b);
      for (int i = 0; i < n; ++i) {
        const int ia = na == 1 ? 0 : i;
        const int ib = nb == 1 ? 0 : i;
        grd(nd.a)[ia] += g[i] * xb[ib];
        grd(nd.b)[ib] += g[i] * xa[ia];
      }
      break;
    }
    case Op::Scale:
      for (int i = 0; i < n; ++i) {
        grd(nd.a)[i] += nd.c0 * g[i];
      }
      break;
    case Op::AddScalar:
    case Op::Reshape:
      for (int i = 0; i < n; ++i) {
        grd(nd.a)[i] += g[i];
      }
      break;
    case Op::MatVec: {
      const auto& An = nodes_[nd.a];
      const int rows = An.rows, cols = An.cols;
      const double* A = val(nd.a);
      const double* x = val(nd.b);
      double* gA = grd(nd.a);
      double* gx = grd(nd.b);
      for (int r = 0; r < rows; ++r) {
        const double gr = g[r];
        if (gr == 0.0) {
          continue;
        }
        for (int c = 0; c < cols; ++c) {
          gA[r * cols + c] += gr * x[c];
          gx[c] += gr * A[r * cols + c];
        }
      }
      break;
    }
    case Op::Tanh:
      for (int i = 0; i < n; ++i) {
        grd(nd.a)[i] += g[i] * (1.0 - y[i] * y[i]);
      }
      break;
    case Op::Sigmoid:
      for (int i = 0; i < n; ++i) {
        grd(nd.a)[i] += g[i] * y[i] * (1.0 - y[i]);
      }
      break;
    case Op::Relu:
      for (int i = 0; i < n; ++i) {
        grd(nd.a)[i] += val(nd.a)[i] > 0.0 ? g[i] : 0.0;
      }
      break;
    case Op::Elu:
      for (int i = 0; i < n; ++i) {
        grd(nd.a)[i] += val(nd.a)[i] > 0.0 ? g[i] : g[i] * (y[i] + 1.0);
      }
      break;
    case Op::Exp:
      for (int i = 0; i < n; ++i) {
        grd(nd.a)[i] += g[i] * y[i];
      }
      break;
    case Op::Log:
      for (int i = 0; i < n; ++i) {
        grd(nd.a)[i] += g[i] / val(nd.a)[i];
      }
      break;
    case Op::Abs:
      for (int i = 0; i < n; ++i) {
        const double x = val(nd.a)[i];
        grd(nd.a)[i] += x > 0.0 ? g[i] : (x < 0.0 ? -g[i] : 0.0);
      }
      break;
    case Op::Square:
      for (int i = 0; i < n; ++i) {
        grd(nd.a)[i] += 2.0 * val(nd.a)[i] * g[i];
      }
      break;
    case Op::Neg:
      for (int i = 0; i < n; ++i) {
        grd(nd.a)[i] -= g[i];
      }
      break;
    case Op::Softmax: {
      double dot = 0.0;
      for (int i = 0; i < n; ++i) {
        dot += g[i] * y[i];
      }
      for (int i = 0; i < n; ++i) {
        grd(nd.a)[i] += y[i] * (g[i] - dot);
      }
      break;
    }
    case Op::LogSoftmax: {
      double gs = 0.0;
      for (int i = 0; i < n; ++i) {
        gs += g[i];
      }
      for (int i = 0; i < n; ++i) {
        grd(nd.a)[i] += g[i] - std::exp(y[i]) * gs;
      }
      break;
    }
    case Op::Gather:
      grd(nd.a)[nd.aux] += g[0];
      break;
    case Op::Concat: {
      int k = 0;
      for (int j = 0; j < nd.extraLen; ++j) {
        const int pid = extra_[nd.extraBegin + j];
        const int m = nodes_[pid].n;
        for (int i = 0; i < m; ++i) {
          grd(pid)[i] += g[k + i];
        }
        k += m;
      }
      break;
    }
    case Op::Slice:
      for (int i = 0; i < n; ++i) {
        grd(nd.a)[nd.aux + i] += g[i];
      }
      break;
    case Op::Sum: {
      const int m = nodes_[nd.a].n;
      for (int i = 0; i < m; ++i) {
        grd(nd.a)[i] += g[0];
      }
      break;
    }
    case Op::MaxElement:
      grd(nd.a)[nd.aux] += g[0];
      break;
    case Op::Min2:
      for (int i = 0; i < n; ++i) {
        if (val(nd.a)[i] <= val(nd.b)[i]) {
          grd(nd.a)[i] += g[i];
        } else {
          grd(nd.b)[i] += g[i];
        }
      }
      break;
    case Op::Max2:
      for (int i = 0; i < n; ++i) {
        if (val(nd.a)[i] >= val(nd.b)[i]) {
          grd(nd.a)[i] += g[i];
        } else {
          grd(nd.b)[i] += g[i];
        }
      }
      break;
    case Op::Clip:
      for (int i = 0; i < n; ++i) {
        const double x = val(nd.a)[i];
        if (x >= nd.c0 && x <= nd.c1) {
          grd(nd.a)[i] += g[i];
        }
      }
      break;
    }
  }
  haveGrads_ = true;
}

Var operator+(Var a, Var b) { return a.g->add(a, b); }
Var operator-(Var a, Var b) { return a.g->sub(a, b); }
Var operator*(Var a, Var b) { return a.g->mul(a, b); }
Var operator*(double c, Var a) { return a.g->scale(a, c); }
Var operator*(Var a, double c) { return a.g->scale(a, c); }
Var operator+(Var a, double c) { return a.g->addScalar(a, c); }
Var operator-(Var a, double c) { return a.g->addScalar(a, -c); }
Var operator-(Var a) { return a.g->neg(a); }

Var positiveWeights(Var raw) { return raw.g->abs(raw); }

// ---------------------------------------------------------------- optimizers

void Sgd::step(ParamStore& store) const {
  auto& v = store.values();
  const auto& g = store.grads();
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] -= lr_ * g[i];
  }
}

void Adam::step(ParamStore& store) { step(store, lr_); }

void Adam::step(ParamStore& store, double lr) {
  auto& v = store.values();
  const auto& g = store.grads();
  if (m_.size() != v.size()) {
    m_.assign(v.size(), 0.0);
    v_.assign(v.size(), 0.0);
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < v.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g[i] * g[i];
    const double mh = m_[i] / c1;
    const double vh = v_[i] / c2;
    v[i] -= lr * mh / (std::sqrt(vh) + eps_);
  }
}

void clipGradNorm(ParamStore& store, double maxNorm) {
  double sq = 0.0;
  for (double g : store.grads()) {
    sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > maxNorm && norm > 0.0) {
    const double s = maxNorm / norm;
    for (auto& g : store.grads()) {
      g *= s;
    }
  }
}

GradCheckResult gradCheck(ParamStore& store, const std::function<Var(Graph&)>& build, double eps) {
  Graph g;
  store.zeroGrad();
  Var loss = build(g);
  if (!std::isfinite(g.scalarValue(loss))) {
    throw std::domain_error("gradCheck: non-finite loss");
  }
  g.backward(loss);
  const std::vector<double> analytic = store.grads();
  auto& vals = store.values();
  GradCheckResult res;
  for (std::size_t i = 0; i < vals.size(); ++i) {
    const double orig = vals[i];
    vals[i] = orig + eps;
    g.clear();
    const double fp = g.scalarValue(build(g));
    vals[i] = orig - eps;
    g.clear();
    const double fm = g.scalarValue(build(g));
    vals[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm) || !std::isfinite(analytic[i])) {
      throw std::domain_error("gradCheck: non-finite value encountered");
    }
    const double numeric = (fp - fm) / (2.0 * eps);
    const double diff = std::abs(numeric - analytic[i]);
    double rel = 0.0;
    if (diff >= 1e-10) {
      rel = diff / std::max(std::abs(numeric), std::abs(analytic[i]));
    }
    if (rel > res.maxRelError || res.worstIndex < 0) {
      if (rel >= res.maxRelError) {
        res.maxRelError = rel;
        res.worstIndex = static_cast<int>(i);
        res.analytic = analytic[i];
        res.numeric = numeric;
      }
    }
  }
  store.zeroGrad();
  return res;
}

} // namespace marl::ad
