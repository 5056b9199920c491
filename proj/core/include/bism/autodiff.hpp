// SPDX-License-Identifier: Apache-2.0
#pragma once

// Reverse-mode automatic differentiation over dense tensors.
//
// Every backward rule is written in terms of the same differentiable
// primitives used in the forward pass, so a gradient computed with
// `retain_graph = true` is itself a graph that can be differentiated again.
// This gives score functions (first derivatives in the data), Hessian traces
// and Hessian-vector products (second derivatives), and gradients through
// unrolled optimisation steps (third derivatives) from one mechanism.
//
// Broadcasting follows right-aligned rules restricted to rank <= 2:
// a scalar, a [d] row or a [1 x d] / [n x 1] tensor expands to [n x d].

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "bism/tensor.hpp"

namespace bism::ad {

enum class Op : std::uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  Div,
  Affine,  // c * x + d for constants c, d
  MatMul,
  Transpose,
  Reshape,
  SumTo,
  BroadcastTo,
  Square,
  Sqrt,
  Exp,
  Log,
  Tanh,
  Sigmoid,
  Softplus,
  Elu,
  Concat,
  Slice,
};

const char* op_name(Op op) noexcept;

/// Graph vertex. Users hold nodes through `Var`.
struct Node {
  Node();
  ~Node();
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  Tensor value;
  std::vector<std::shared_ptr<Node>> parents;
  Op op = Op::Leaf;
  bool requires_grad = false;
  bool freed = false;

  // Per-op attributes.
  double scale = 1.0;
  double shift = 0.0;
  int axis = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  Tensor::Shape shape;  // source shape for SumTo/BroadcastTo/Reshape adjoints
};

/// Handle to a graph node. Cheap to copy; copies alias the same node.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Tensor& value() const { return node_->value; }
  const Tensor::Shape& shape() const { return node_->value.shape(); }
  std::size_t numel() const { return node_->value.numel(); }
  double item() const { return node_->value.item(); }
  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  Op op() const noexcept { return node_->op; }
  Node* node() const noexcept { return node_.get(); }
  const std::shared_ptr<Node>& ptr() const noexcept { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Leaf that gradients never flow into.
Var constant(Tensor value);
Var constant(double value);
/// Leaf that gradients are taken with respect to.
Var variable(Tensor value);
/// Constant copy of `x`'s current value, cut from the graph.
Var detach(const Var& x);

/// Disables graph recording on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled() noexcept;
/// Nodes currently alive on this thread.
std::size_t live_node_count() noexcept;

// Primitives. Binary ops broadcast their operands to a common shape.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var affine(const Var& x, double scale, double shift);
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& x);
Var reshape(const Var& x, Tensor::Shape shape);
/// Sums `x` down to a shape it broadcasts from (the adjoint of broadcast_to).
Var sum_to(const Var& x, Tensor::Shape shape);
Var broadcast_to(const Var& x, Tensor::Shape shape);
Var square(const Var& x);
Var sqrt(const Var& x);
Var exp(const Var& x);
Var log(const Var& x);
Var tanh(const Var& x);
Var sigmoid(const Var& x);
Var softplus(const Var& x);
Var elu(const Var& x);
Var concat(std::span<const Var> parts, int axis);
Var slice(const Var& x, int axis, std::size_t begin, std::size_t end);

// Compositions.
Var sum(const Var& x);
/// Row sums of an [n x d] tensor as [n x 1].
Var sum_rows(const Var& x);
Var mean(const Var& x);
Var neg(const Var& x);
Var scale(const Var& x, double c);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }
inline Var operator-(const Var& x) { return neg(x); }
inline Var operator+(const Var& a, double b) { return affine(a, 1.0, b); }
inline Var operator+(double a, const Var& b) { return affine(b, 1.0, a); }
inline Var operator-(const Var& a, double b) { return affine(a, 1.0, -b); }
inline Var operator-(double a, const Var& b) { return affine(b, -1.0, a); }
inline Var operator*(const Var& a, double b) { return affine(a, b, 0.0); }
inline Var operator*(double a, const Var& b) { return affine(b, a, 0.0); }
inline Var operator/(const Var& a, double b) { return affine(a, 1.0 / b, 0.0); }

/// Derivatives of scalar `output` with respect to each of `inputs`.
///
/// Inputs may be leaves or interior nodes; an input `output` does not depend
/// on receives zeros. With `retain_graph` the results are graph nodes that can
/// be differentiated again and the traversed graph stays usable. Without it
/// the results are constants and the traversed graph is released.
///
/// Throws ContractError for a non-scalar output or a released graph and
/// NumericError naming the op if any traversed forward value is non-finite.
std::vector<Var> grad(const Var& output, std::span<const Var> inputs, bool retain_graph = false);
Var grad(const Var& output, const Var& input, bool retain_graph = false);

/// Largest input size accepted by grad2.
inline constexpr std::size_t kMaxHessianDim = 32;

/// Dense Hessian of scalar `output` in `input`, shape [D x D] with D = numel(input).
/// Leaves the forward graph intact. SizeError when D > kMaxHessianDim.
Tensor grad2(const Var& output, const Var& input);

/// Hessian-vector product by double backward; never forms the Hessian.
Tensor hvp(const Var& output, const Var& input, const Tensor& vector);

}  // namespace bism::ad
