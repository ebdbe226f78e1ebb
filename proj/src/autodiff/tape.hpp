#pragma once

// Reverse-mode automatic differentiation over a recorded program of vector
// primitives. Building a Tape only records nodes; forward() evaluates every
// node against a ParameterStore and backward() accumulates adjoints.

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "autodiff/parameter_store.hpp"

namespace ocpg::ad {

enum class Op : std::uint8_t {
  Param,
  Constant,
  Add,
  Sub,
  Mul,
  Neg,
  Scale,
  MatVec,
  Softmax,
  LogSoftmax,
  Sigmoid,
  Log,
  Exp,
  Tanh,
  Square,
  Max,
  Sum,
  Dot,
  Index,
  Concat,
  Detach,
};

const char* op_name(Op op);

/// Raised by forward() when a primitive receives operands of incompatible
/// shape, or a parameter reference does not resolve.
class ShapeError : public std::runtime_error {
 public:
  ShapeError(std::uint32_t node, Op op, const std::string& what);
  std::uint32_t node() const { return node_; }
  Op op() const { return op_; }

 private:
  std::uint32_t node_;
  Op op_;
};

class Tape;

/// Handle to a node of a Tape. Cheap to copy; only valid with its tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  // Leaves.
  Var param(std::size_t offset, std::size_t size);
  Var param_matrix(std::size_t offset, std::size_t rows, std::size_t cols);
  Var constant(std::span<const double> values);
  Var constant(std::initializer_list<double> values);
  Var scalar(double value);

  // Elementwise binary ops accept equal sizes or a size-1 operand.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var neg(Var a);
  Var scale(Var a, double c);
  /// Matrix (row-major param_matrix) times vector.
  Var matvec(Var w, Var x);
  Var softmax(Var a);
  Var log_softmax(Var a);
  Var sigmoid(Var a);
  Var log(Var a);
  Var exp(Var a);
  Var tanh(Var a);
  Var square(Var a);
  /// Maximum element; the gradient flows to the lowest-index maximiser.
  Var max(Var a);
  Var sum(Var a);
  Var dot(Var a, Var b);
  Var index(Var a, std::size_t i);
  Var concat(Var a, Var b);
  /// Identity in the forward pass, blocks all adjoint flow in backward.
  Var detach(Var a);

  std::size_t num_nodes() const { return nodes_.size(); }
  Op op(Var v) const { return nodes_.at(v.id()).op; }

  /// Evaluates every node against `store` and returns the (scalar) value of
  /// `output`.
  double forward(const ParameterStore& store, Var output);
  /// Evaluates every node; for inspecting non-scalar values afterwards.
  void forward(const ParameterStore& store);
  bool evaluated() const { return evaluated_; }

  std::span<const double> value(Var v) const;
  double scalar_value(Var v) const;

  /// Gradient of scalar `output` with respect to every parameter index of the
  /// store used in the last forward(). Throws std::logic_error before forward.
  GradientVector backward(Var output);
  /// Adjoint of a node after backward().
  std::span<const double> adjoint(Var v) const;

 private:
  struct Node {
    Op op;
    std::uint32_t a = 0;
    std::uint32_t b = 0;
    std::size_t aux = 0;   // param offset, constant offset, or index
    std::size_t rows = 0;  // param size / matrix rows
    std::size_t cols = 0;  // matrix cols (0 for vectors)
    double c = 0.0;        // scale factor
    // Filled by forward().
    std::size_t size = 0;
    std::size_t at = 0;
  };

  Var push(Node n);
  std::uint32_t check(Var v) const;
  void eval_node(std::uint32_t id, const ParameterStore& store);
  double* val(std::uint32_t id) { return values_.data() + nodes_[id].at; }
  const double* val(std::uint32_t id) const { return values_.data() + nodes_[id].at; }
  double* adj(std::uint32_t id) { return adjoints_.data() + nodes_[id].at; }

  std::vector<Node> nodes_;
  std::vector<double> constants_;
  std::vector<double> values_;
  std::vector<double> adjoints_;
  std::size_t n_params_ = 0;
  bool evaluated_ = false;
  bool differentiated_ = false;
};

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator-(Var a);
Var operator*(double c, Var a);
Var operator*(Var a, double c);

}  // namespace ocpg::ad
