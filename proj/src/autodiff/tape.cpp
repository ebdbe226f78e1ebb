#include "autodiff/tape.hpp"

#include <algorithm>
#include <cmath>

namespace ocpg::ad {

const char* op_name(Op op) {
  switch (op) {
    case Op::Param: return "param";
    case Op::Constant: return "constant";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Neg: return "neg";
    case Op::Scale: return "scale";
    case Op::MatVec: return "matvec";
    case Op::Softmax: return "softmax";
    case Op::LogSoftmax: return "log_softmax";
    case Op::Sigmoid: return "sigmoid";
    case Op::Log: return "log";
    case Op::Exp: return "exp";
    case Op::Tanh: return "tanh";
    case Op::Square: return "square";
    case Op::Max: return "max";
    case Op::Sum: return "sum";
    case Op::Dot: return "dot";
    case Op::Index: return "index";
    case Op::Concat: return "concat";
    case Op::Detach: return "detach";
  }
  return "?";
}

ShapeError::ShapeError(std::uint32_t node, Op op, const std::string& what)
    : std::runtime_error("node " + std::to_string(node) + " (" + op_name(op) + "): " + what),
      node_(node),
      op_(op) {}

namespace {

bool broadcastable(std::size_t a, std::size_t b) { return a == b || a == 1 || b == 1; }

}  // namespace

Var Tape::push(Node n) {
  nodes_.push_back(n);
  evaluated_ = false;
  differentiated_ = false;
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

std::uint32_t Tape::check(Var v) const {
  if (v.tape() != this) throw std::invalid_argument("variable belongs to a different tape");
  return v.id();
}

Var Tape::param(std::size_t offset, std::size_t size) {
  Node n{Op::Param};
  n.aux = offset;
  n.rows = size;
  return push(n);
}

Var Tape::param_matrix(std::size_t offset, std::size_t rows, std::size_t cols) {
  Node n{Op::Param};
  n.aux = offset;
  n.rows = rows * cols;
  n.cols = cols;
  return push(n);
}

Var Tape::constant(std::span<const double> values) {
  Node n{Op::Constant};
  n.aux = constants_.size();
  n.rows = values.size();
  constants_.insert(constants_.end(), values.begin(), values.end());
  return push(n);
}

Var Tape::constant(std::initializer_list<double> values) {
  return constant(std::span<const double>(values.begin(), values.size()));
}

Var Tape::scalar(double value) { return constant(std::span<const double>(&value, 1)); }

#define OCPG_BINARY(name, OP)          \
  Var Tape::name(Var a, Var b) {       \
    Node n{OP};                        \
    n.a = check(a);                    \
    n.b = check(b);                    \
    return push(n);                    \
  }
OCPG_BINARY(add, Op::Add)
OCPG_BINARY(sub, Op::Sub)
OCPG_BINARY(mul, Op::Mul)
OCPG_BINARY(matvec, Op::MatVec)
OCPG_BINARY(dot, Op::Dot)
OCPG_BINARY(concat, Op::Concat)
#undef OCPG_BINARY

#define OCPG_UNARY(name, OP)   \
  Var Tape::name(Var a) {      \
    Node n{OP};                \
    n.a = check(a);            \
    return push(n);            \
  }
OCPG_UNARY(neg, Op::Neg)
OCPG_UNARY(softmax, Op::Softmax)
OCPG_UNARY(log_softmax, Op::LogSoftmax)
OCPG_UNARY(sigmoid, Op::Sigmoid)
OCPG_UNARY(log, Op::Log)
OCPG_UNARY(exp, Op::Exp)
OCPG_UNARY(tanh, Op::Tanh)
OCPG_UNARY(square, Op::Square)
OCPG_UNARY(max, Op::Max)
OCPG_UNARY(sum, Op::Sum)
OCPG_UNARY(detach, Op::Detach)
#undef OCPG_UNARY

Var Tape::scale(Var a, double c) {
  Node n{Op::Scale};
  n.a = check(a);
  n.c = c;
  return push(n);
}

Var Tape::index(Var a, std::size_t i) {
  Node n{Op::Index};
  n.a = check(a);
  n.aux = i;
  return push(n);
}

void Tape::forward(const ParameterStore& store) {
  // Sizes first so the value arena is allocated once.
  std::size_t total = 0;
  for (std::uint32_t id = 0; id < nodes_.size(); ++id) {
    Node& n = nodes_[id];
    const std::size_t sa = (n.op == Op::Param || n.op == Op::Constant) ? 0 : nodes_[n.a].size;
    const std::size_t sb = nodes_[n.b].size;
    switch (n.op) {
      case Op::Param:
        if (n.aux + n.rows > store.size()) {
          throw ShapeError(id, n.op,
                           "parameter range [" + std::to_string(n.aux) + ", " +
                               std::to_string(n.aux + n.rows) + ") exceeds store of size " +
                               std::to_string(store.size()));
        }
        n.size = n.rows;
        break;
      case Op::Constant: n.size = n.rows; break;
      case Op::Add:
      case Op::Sub:
      case Op::Mul:
        if (!broadcastable(sa, sb)) {
          throw ShapeError(id, n.op,
                           "operand sizes " + std::to_string(sa) + " and " + std::to_string(sb));
        }
        n.size = std::max(sa, sb);
        break;
      case Op::MatVec: {
        const Node& w = nodes_[n.a];
        if (w.op != Op::Param || w.cols == 0) {
          throw ShapeError(id, n.op, "left operand must be a parameter matrix");
        }
        if (w.cols != sb) {
          throw ShapeError(id, n.op,
                           "matrix has " + std::to_string(w.cols) + " columns, vector has " +
                               std::to_string(sb) + " entries");
        }
        n.size = w.rows / w.cols;
        break;
      }
      case Op::Dot:
        if (sa != sb) {
          throw ShapeError(id, n.op,
                           "operand sizes " + std::to_string(sa) + " and " + std::to_string(sb));
        }
        n.size = 1;
        break;
      case Op::Concat: n.size = sa + sb; break;
      case Op::Softmax:
      case Op::LogSoftmax:
      case Op::Max:
        if (sa == 0) throw ShapeError(id, n.op, "empty operand");
        n.size = (n.op == Op::Max) ? 1 : sa;
        break;
      case Op::Sum: n.size = 1; break;
      case Op::Index:
        if (n.aux >= sa) {
          throw ShapeError(id, n.op,
                           "index " + std::to_string(n.aux) + " out of range for size " +
                               std::to_string(sa));
        }
        n.size = 1;
        break;
      default: n.size = sa; break;
    }
    n.at = total;
    total += n.size;
  }
  values_.assign(total, 0.0);
  for (std::uint32_t id = 0; id < nodes_.size(); ++id) eval_node(id, store);
  n_params_ = store.size();
  evaluated_ = true;
  differentiated_ = false;
}

double Tape::forward(const ParameterStore& store, Var output) {
  forward(store);
  return scalar_value(output);
}

void Tape::eval_node(std::uint32_t id, const ParameterStore& store) {
  const Node& n = nodes_[id];
  double* out = val(id);
  const std::size_t m = n.size;
  auto in_a = [&]() { return val(n.a); };
  auto in_b = [&]() { return val(n.b); };
  switch (n.op) {
    case Op::Param:
      for (std::size_t i = 0; i < m; ++i) out[i] = store[n.aux + i];
      break;
    case Op::Constant:
      std::copy_n(constants_.data() + n.aux, m, out);
      break;
    case Op::Add:
    case Op::Sub:
    case Op::Mul: {
      const double* a = in_a();
      const double* b = in_b();
      const bool ba = nodes_[n.a].size == 1;
      const bool bb = nodes_[n.b].size == 1;
      for (std::size_t i = 0; i < m; ++i) {
        const double x = a[ba ? 0 : i];
        const double y = b[bb ? 0 : i];
        out[i] = n.op == Op::Add ? x + y : (n.op == Op::Sub ? x - y : x * y);
      }
      break;
    }
    case Op::Neg: {
      const double* a = in_a();
      for (std::size_t i = 0; i < m; ++i) out[i] = -a[i];
      break;
    }
    case Op::Scale: {
      const double* a = in_a();
      for (std::size_t i = 0; i < m; ++i) out[i] = n.c * a[i];
      break;
    }
    case Op::MatVec: {
      const double* w = in_a();
      const double* x = in_b();
      const std::size_t cols = nodes_[n.a].cols;
      for (std::size_t r = 0; r < m; ++r) {
        double s = 0.0;
        const double* row = w + r * cols;
        for (std::size_t c = 0; c < cols; ++c) s += row[c] * x[c];
        out[r] = s;
      }
      break;
    }
    case Op::Softmax:
    case Op::LogSoftmax: {
      const double* a = in_a();
      const double mx = *std::max_element(a, a + m);
      double z = 0.0;
      for (std::size_t i = 0; i < m; ++i) z += std::exp(a[i] - mx);
      if (n.op == Op::Softmax) {
        for (std::size_t i = 0; i < m; ++i) out[i] = std::exp(a[i] - mx) / z;
      } else {
        const double lz = mx + std::log(z);
        for (std::size_t i = 0; i < m; ++i) out[i] = a[i] - lz;
      }
      break;
    }
    case Op::Sigmoid: {
      const double* a = in_a();
      for (std::size_t i = 0; i < m; ++i) {
        const double x = a[i];
        out[i] = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      }
      break;
    }
    case Op::Log: {
      const double* a = in_a();
      for (std::size_t i = 0; i < m; ++i) out[i] = std::log(a[i]);
      break;
    }
    case Op::Exp: {
      const double* a = in_a();
      for (std::size_t i = 0; i < m; ++i) out[i] = std::exp(a[i]);
      break;
    }
    case Op::Tanh: {
      const double* a = in_a();
      for (std::size_t i = 0; i < m; ++i) out[i] = std::tanh(a[i]);
      break;
    }
    case Op::Square: {
      const double* a = in_a();
      for (std::size_t i = 0; i < m; ++i) out[i] = a[i] * a[i];
      break;
    }
    case Op::Max: {
      const double* a = in_a();
      out[0] = *std::max_element(a, a + nodes_[n.a].size);
      break;
    }
    case Op::Sum: {
      const double* a = in_a();
      double s = 0.0;
      for (std::size_t i = 0; i < nodes_[n.a].size; ++i) s += a[i];
      out[0] = s;
      break;
    }
    case Op::Dot: {
      const double* a = in_a();
      const double* b = in_b();
      double s = 0.0;
      for (std::size_t i = 0; i < nodes_[n.a].size; ++i) s += a[i] * b[i];
      out[0] = s;
      break;
    }
    case Op::Index: out[0] = in_a()[n.aux]; break;
    case Op::Concat: {
      const std::size_t sa = nodes_[n.a].size;
      std::copy_n(in_a(), sa, out);
      std::copy_n(in_b(), nodes_[n.b].size, out + sa);
      break;
    }
    case Op::Detach: std::copy_n(in_a(), m, out); break;
  }
}

std::span<const double> Tape::value(Var v) const {
  const std::uint32_t id = check(v);
  if (!evaluated_) throw std::logic_error("value() before forward()");
  return {val(id), nodes_[id].size};
}

double Tape::scalar_value(Var v) const {
  auto s = value(v);
  if (s.size() != 1) {
    throw ShapeError(v.id(), nodes_[v.id()].op, "expected a scalar, got size " + std::to_string(s.size()));
  }
  return s[0];
}

std::span<const double> Tape::adjoint(Var v) const {
  const std::uint32_t id = check(v);
  if (!differentiated_) throw std::logic_error("adjoint() before backward()");
  return {adjoints_.data() + nodes_[id].at, nodes_[id].size};
}

GradientVector Tape::backward(Var output) {
  const std::uint32_t out_id = check(output);
  if (!evaluated_) throw std::logic_error("backward() before forward()");
  if (nodes_[out_id].size != 1) {
    throw ShapeError(out_id, nodes_[out_id].op, "backward() requires a scalar output");
  }
  adjoints_.assign(values_.size(), 0.0);
  GradientVector grad(n_params_);
  adj(out_id)[0] = 1.0;

  for (std::int64_t k = out_id; k >= 0; --k) {
    const auto id = static_cast<std::uint32_t>(k);
    const Node& n = nodes_[id];
    const double* g = adj(id);
    const std::size_t m = n.size;
    switch (n.op) {
      case Op::Param:
        for (std::size_t i = 0; i < m; ++i) grad.values[n.aux + i] += g[i];
        break;
      case Op::Constant:
      case Op::Detach:
        break;
      case Op::Add:
      case Op::Sub:
      case Op::Mul: {
        const bool ba = nodes_[n.a].size == 1;
        const bool bb = nodes_[n.b].size == 1;
        double* ga = adj(n.a);
        double* gb = adj(n.b);
        const double* a = val(n.a);
        const double* b = val(n.b);
        for (std::size_t i = 0; i < m; ++i) {
          const std::size_t ia = ba ? 0 : i;
          const std::size_t ib = bb ? 0 : i;
          if (n.op == Op::Mul) {
            ga[ia] += g[i] * b[ib];
            gb[ib] += g[i] * a[ia];
          } else {
            ga[ia] += g[i];
            gb[ib] += n.op == Op::Add ? g[i] : -g[i];
          }
        }
        break;
      }
      case Op::Neg: {
        double* ga = adj(n.a);
        for (std::size_t i = 0; i < m; ++i) ga[i] -= g[i];
        break;
      }
      case Op::Scale: {
        double* ga = adj(n.a);
        for (std::size_t i = 0; i < m; ++i) ga[i] += n.c * g[i];
        break;
      }
      case Op::MatVec: {
        const std::size_t cols = nodes_[n.a].cols;
        const double* w = val(n.a);
        const double* x = val(n.b);
        double* gw = adj(n.a);
        double* gx = adj(n.b);
        for (std::size_t r = 0; r < m; ++r) {
          if (g[r] == 0.0) continue;
          const double* row = w + r * cols;
          double* grow = gw + r * cols;
          for (std::size_t c = 0; c < cols; ++c) {
            grow[c] += g[r] * x[c];
            gx[c] += g[r] * row[c];
          }
        }
        break;
      }
      case Op::Softmax: {
        const double* y = val(id);
        double* ga = adj(n.a);
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += g[i] * y[i];
        for (std::size_t i = 0; i < m; ++i) ga[i] += y[i] * (g[i] - s);
        break;
      }
      case Op::LogSoftmax: {
        const double* y = val(id);
        double* ga = adj(n.a);
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += g[i];
        for (std::size_t i = 0; i < m; ++i) ga[i] += g[i] - std::exp(y[i]) * s;
        break;
      }
      case Op::Sigmoid: {
        const double* y = val(id);
        double* ga = adj(n.a);
        for (std::size_t i = 0; i < m; ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
        break;
      }
      case Op::Log: {
        const double* a = val(n.a);
        double* ga = adj(n.a);
        for (std::size_t i = 0; i < m; ++i) ga[i] += g[i] / a[i];
        break;
      }
      case Op::Exp: {
        const double* y = val(id);
        double* ga = adj(n.a);
        for (std::size_t i = 0; i < m; ++i) ga[i] += g[i] * y[i];
        break;
      }
      case Op::Tanh: {
        const double* y = val(id);
        double* ga = adj(n.a);
        for (std::size_t i = 0; i < m; ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
        break;
      }
      case Op::Square: {
        const double* a = val(n.a);
        double* ga = adj(n.a);
        for (std::size_t i = 0; i < m; ++i) ga[i] += 2.0 * a[i] * g[i];
        break;
      }
      case Op::Max: {
        const double* a = val(n.a);
        const std::size_t sa = nodes_[n.a].size;
        const std::size_t arg = static_cast<std::size_t>(std::max_element(a, a + sa) - a);
        adj(n.a)[arg] += g[0];
        break;
      }
      case Op::Sum: {
        double* ga = adj(n.a);
        for (std::size_t i = 0; i < nodes_[n.a].size; ++i) ga[i] += g[0];
        break;
      }
      case Op::Dot: {
        const double* a = val(n.a);
        const double* b = val(n.b);
        double* ga = adj(n.a);
        double* gb = adj(n.b);
        for (std::size_t i = 0; i < nodes_[n.a].size; ++i) {
          ga[i] += g[0] * b[i];
          gb[i] += g[0] * a[i];
        }
        break;
      }
      case Op::Index: adj(n.a)[n.aux] += g[0]; break;
      case Op::Concat: {
        const std::size_t sa = nodes_[n.a].size;
        double* ga = adj(n.a);
        double* gb = adj(n.b);
        for (std::size_t i = 0; i < sa; ++i) ga[i] += g[i];
        for (std::size_t i = 0; i < nodes_[n.b].size; ++i) gb[i] += g[sa + i];
        break;
      }
    }
  }
  differentiated_ = true;
  return grad;
}

Var operator+(Var a, Var b) { return a.tape()->add(a, b); }
Var operator-(Var a, Var b) { return a.tape()->sub(a, b); }
Var operator*(Var a, Var b) { return a.tape()->mul(a, b); }
Var operator-(Var a) { return a.tape()->neg(a); }
Var operator*(double c, Var a) { return a.tape()->scale(a, c); }
Var operator*(Var a, double c) { return a.tape()->scale(a, c); }

}  // namespace ocpg::ad
