// SPDX-License-Identifier: Apache-2.0
#include "bism/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <unordered_map>
#include <unordered_set>

#include "bism/error.hpp"
#include "eigen_map.hpp"

namespace bism::ad {

namespace {

thread_local bool tl_grad_enabled = true;
thread_local std::size_t tl_live_nodes = 0;

struct Extent2 {
  std::size_t rows;
  std::size_t cols;
};

Extent2 extent2(const Tensor::Shape& s) {
  switch (s.size()) {
    case 0: return {1, 1};
    case 1: return {1, s[0]};
    default: return {s[0], s[1]};
  }
}

bool broadcastable(const Tensor::Shape& from, const Tensor::Shape& to) {
  if (from.size() > to.size()) return false;
  const auto f = extent2(from);
  const auto t = extent2(to);
  if (to.size() == 1 && from.size() <= 1) return f.cols == 1 || f.cols == t.cols;
  return (f.rows == 1 || f.rows == t.rows) && (f.cols == 1 || f.cols == t.cols);
}

Tensor::Shape common_shape(const Tensor::Shape& a, const Tensor::Shape& b) {
  if (a == b) return a;
  const std::size_t rank = std::max(a.size(), b.size());
  Tensor::Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
    const std::size_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("cannot broadcast " + shape_string(a) + " with " + shape_string(b));
    }
    out[rank - 1 - i] = std::max(da, db);
  }
  return out;
}

Tensor broadcast_kernel(const Tensor& x, const Tensor::Shape& to) {
  const auto f = extent2(x.shape());
  const auto t = extent2(to);
  Tensor out(to);
  auto src = x.data();
  auto dst = out.data();
  for (std::size_t r = 0; r < t.rows; ++r) {
    const std::size_t sr = f.rows == 1 ? 0 : r;
    for (std::size_t c = 0; c < t.cols; ++c) {
      dst[r * t.cols + c] = src[sr * f.cols + (f.cols == 1 ? 0 : c)];
    }
  }
  return out;
}

Tensor sum_to_kernel(const Tensor& x, const Tensor::Shape& to) {
  const auto f = extent2(x.shape());
  const auto t = extent2(to);
  Tensor out(to);
  auto src = x.data();
  auto dst = out.data();
  for (std::size_t r = 0; r < f.rows; ++r) {
    const std::size_t tr = t.rows == 1 ? 0 : r;
    for (std::size_t c = 0; c < f.cols; ++c) {
      dst[tr * t.cols + (t.cols == 1 ? 0 : c)] += src[r * f.cols + c];
    }
  }
  return out;
}

template <class F>
Tensor map_unary(const Tensor& x, F f) {
  Tensor out(x.shape());
  auto src = x.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

template <class F>
Tensor map_binary(const Tensor& a, const Tensor& b, F f) {
  Tensor out(a.shape());
  auto x = a.data();
  auto y = b.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) dst[i] = f(x[i], y[i]);
  return out;
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

std::shared_ptr<Node> make_node(Op op, Tensor value, std::initializer_list<const Var*> parents) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op;
  bool track = false;
  if (tl_grad_enabled) {
    for (const Var* p : parents) track = track || p->requires_grad();
  }
  if (track) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (const Var* p : parents) node->parents.push_back(p->ptr());
  }
#ifndef NDEBUG
  if (!node->value.all_finite()) {
    throw NumericError(op_name(op), std::string("non-finite value produced by ") + op_name(op));
  }
#endif
  return node;
}

std::shared_ptr<Node> make_node_n(Op op, Tensor value, std::span<const Var> parents) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op;
  bool track = false;
  if (tl_grad_enabled) {
    for (const Var& p : parents) track = track || p.requires_grad();
  }
  if (track) {
    node->requires_grad = true;
    for (const Var& p : parents) node->parents.push_back(p.ptr());
  }
#ifndef NDEBUG
  if (!node->value.all_finite()) {
    throw NumericError(op_name(op), std::string("non-finite value produced by ") + op_name(op));
  }
#endif
  return node;
}

// Brings both operands of a binary op to their common shape.
std::pair<Var, Var> harmonize(const Var& a, const Var& b) {
  if (a.shape() == b.shape()) return {a, b};
  const auto shape = common_shape(a.shape(), b.shape());
  return {a.shape() == shape ? a : broadcast_to(a, shape),
          b.shape() == shape ? b : broadcast_to(b, shape)};
}

Var zeros_like_shape(const Tensor::Shape& shape) { return constant(Tensor(shape)); }

}  // namespace

const char* op_name(Op op) noexcept {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Affine: return "affine";
    case Op::MatMul: return "matmul";
    case Op::Transpose: return "transpose";
    case Op::Reshape: return "reshape";
    case Op::SumTo: return "sum";
    case Op::BroadcastTo: return "broadcast";
    case Op::Square: return "square";
    case Op::Sqrt: return "sqrt";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Tanh: return "tanh";
    case Op::Sigmoid: return "sigmoid";
    case Op::Softplus: return "softplus";
    case Op::Elu: return "elu";
    case Op::Concat: return "concat";
    case Op::Slice: return "slice";
  }
  return "unknown";
}

Node::Node() { ++tl_live_nodes; }
Node::~Node() { --tl_live_nodes; }

NoGradGuard::NoGradGuard() : previous_(tl_grad_enabled) { tl_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { tl_grad_enabled = previous_; }

bool grad_enabled() noexcept { return tl_grad_enabled; }
std::size_t live_node_count() noexcept { return tl_live_nodes; }

Var constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var constant(double value) { return constant(Tensor::scalar(value)); }

Var variable(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

Var detach(const Var& x) { return constant(x.value()); }

// ---------------------------------------------------------------------------
// Primitives

Var add(const Var& a0, const Var& b0) {
  auto [a, b] = harmonize(a0, b0);
  return Var(make_node(Op::Add, map_binary(a.value(), b.value(), std::plus<>()), {&a, &b}));
}

Var sub(const Var& a0, const Var& b0) {
  auto [a, b] = harmonize(a0, b0);
  return Var(make_node(Op::Sub, map_binary(a.value(), b.value(), std::minus<>()), {&a, &b}));
}

Var mul(const Var& a0, const Var& b0) {
  auto [a, b] = harmonize(a0, b0);
  return Var(make_node(Op::Mul, map_binary(a.value(), b.value(), std::multiplies<>()), {&a, &b}));
}

Var div(const Var& a0, const Var& b0) {
  auto [a, b] = harmonize(a0, b0);
  return Var(make_node(Op::Div, map_binary(a.value(), b.value(), std::divides<>()), {&a, &b}));
}

Var affine(const Var& x, double scale, double shift) {
  auto node = make_node(Op::Affine, map_unary(x.value(), [=](double v) { return scale * v + shift; }),
                        {&x});
  node->scale = scale;
  node->shift = shift;
  return Var(std::move(node));
}

Var matmul(const Var& a, const Var& b) {
  if (a.value().rank() != 2 || b.value().rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw ShapeError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()));
  }
  Tensor out({a.shape()[0], b.shape()[1]});
  detail::as_matrix(out).noalias() = detail::as_matrix(a.value()) * detail::as_matrix(b.value());
  return Var(make_node(Op::MatMul, std::move(out), {&a, &b}));
}

Var transpose(const Var& x) {
  if (x.value().rank() != 2) throw ShapeError("transpose: rank-2 tensor required");
  Tensor out({x.shape()[1], x.shape()[0]});
  detail::as_matrix(out) = detail::as_matrix(x.value()).transpose();
  return Var(make_node(Op::Transpose, std::move(out), {&x}));
}

Var reshape(const Var& x, Tensor::Shape shape) {
  auto node = make_node(Op::Reshape, x.value().reshaped(std::move(shape)), {&x});
  node->shape = x.shape();
  return Var(std::move(node));
}

Var sum_to(const Var& x, Tensor::Shape shape) {
  if (x.shape() == shape) return x;
  if (!broadcastable(shape, x.shape())) {
    throw ShapeError("sum_to: " + shape_string(x.shape()) + " does not reduce to " +
                     shape_string(shape));
  }
  auto node = make_node(Op::SumTo, sum_to_kernel(x.value(), shape), {&x});
  node->shape = x.shape();
  return Var(std::move(node));
}

Var broadcast_to(const Var& x, Tensor::Shape shape) {
  if (x.shape() == shape) return x;
  if (!broadcastable(x.shape(), shape)) {
    throw ShapeError("broadcast_to: " + shape_string(x.shape()) + " does not expand to " +
                     shape_string(shape));
  }
  auto node = make_node(Op::BroadcastTo, broadcast_kernel(x.value(), shape), {&x});
  node->shape = x.shape();
  return Var(std::move(node));
}

Var square(const Var& x) {
  return Var(make_node(Op::Square, map_unary(x.value(), [](double v) { return v * v; }), {&x}));
}

Var sqrt(const Var& x) {
  return Var(make_node(Op::Sqrt, map_unary(x.value(), [](double v) { return std::sqrt(v); }), {&x}));
}

Var exp(const Var& x) {
  return Var(make_node(Op::Exp, map_unary(x.value(), [](double v) { return std::exp(v); }), {&x}));
}

Var log(const Var& x) {
  return Var(make_node(Op::Log, map_unary(x.value(), [](double v) { return std::log(v); }), {&x}));
}

Var tanh(const Var& x) {
  return Var(make_node(Op::Tanh, map_unary(x.value(), [](double v) { return std::tanh(v); }), {&x}));
}

Var sigmoid(const Var& x) {
  return Var(make_node(Op::Sigmoid, map_unary(x.value(), stable_sigmoid), {&x}));
}

Var softplus(const Var& x) {
  return Var(make_node(Op::Softplus, map_unary(x.value(), stable_softplus), {&x}));
}

Var elu(const Var& x) {
  return Var(make_node(
      Op::Elu, map_unary(x.value(), [](double v) { return v > 0 ? v : std::expm1(v); }), {&x}));
}

Var concat(std::span<const Var> parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const std::size_t rank = parts[0].value().rank();
  if (rank == 0 || rank > 2 || axis < 0 || static_cast<std::size_t>(axis) >= rank) {
    throw ShapeError("concat: bad axis for shape " + shape_string(parts[0].shape()));
  }
  Tensor::Shape shape = parts[0].shape();
  shape[static_cast<std::size_t>(axis)] = 0;
  for (const Var& p : parts) {
    if (p.value().rank() != rank) throw ShapeError("concat: rank mismatch");
    for (std::size_t d = 0; d < rank; ++d) {
      if (d != static_cast<std::size_t>(axis) && p.shape()[d] != shape[d]) {
        throw ShapeError("concat: extent mismatch " + shape_string(p.shape()));
      }
    }
    shape[static_cast<std::size_t>(axis)] += p.shape()[static_cast<std::size_t>(axis)];
  }
  Tensor out(shape);
  const auto e = extent2(shape);
  if (rank == 1 || axis == 0) {
    std::size_t offset = 0;
    for (const Var& p : parts) {
      std::copy(p.value().data().begin(), p.value().data().end(), out.data().begin() + offset);
      offset += p.numel();
    }
  } else {
    std::size_t col = 0;
    for (const Var& p : parts) {
      const std::size_t pc = p.shape()[1];
      for (std::size_t r = 0; r < e.rows; ++r) {
        for (std::size_t c = 0; c < pc; ++c) out(r, col + c) = p.value()(r, c);
      }
      col += pc;
    }
  }
  auto node = make_node_n(Op::Concat, std::move(out), parts);
  node->axis = axis;
  return Var(std::move(node));
}

Var slice(const Var& x, int axis, std::size_t begin, std::size_t end) {
  const std::size_t rank = x.value().rank();
  if (rank == 0 || axis < 0 || static_cast<std::size_t>(axis) >= rank) {
    throw ShapeError("slice: bad axis for shape " + shape_string(x.shape()));
  }
  const std::size_t extent = x.shape()[static_cast<std::size_t>(axis)];
  if (begin > end || end > extent) throw ShapeError("slice: range out of bounds");
  Tensor::Shape shape = x.shape();
  shape[static_cast<std::size_t>(axis)] = end - begin;
  Tensor out(shape);
  if (rank == 1 || axis == 0) {
    const std::size_t stride = rank == 1 ? 1 : x.shape()[1];
    std::copy(x.value().data().begin() + static_cast<std::ptrdiff_t>(begin * stride),
              x.value().data().begin() + static_cast<std::ptrdiff_t>(end * stride),
              out.data().begin());
  } else {
    for (std::size_t r = 0; r < shape[0]; ++r) {
      for (std::size_t c = begin; c < end; ++c) out(r, c - begin) = x.value()(r, c);
    }
  }
  auto node = make_node(Op::Slice, std::move(out), {&x});
  node->axis = axis;
  node->begin = begin;
  node->end = end;
  node->shape = x.shape();
  return Var(std::move(node));
}

// ---------------------------------------------------------------------------
// Compositions

Var sum(const Var& x) { return sum_to(x, {}); }

Var sum_rows(const Var& x) {
  if (x.value().rank() != 2) throw ShapeError("sum_rows: rank-2 tensor required");
  return sum_to(x, {x.shape()[0], 1});
}

Var mean(const Var& x) { return affine(sum(x), 1.0 / static_cast<double>(x.numel()), 0.0); }
Var neg(const Var& x) { return affine(x, -1.0, 0.0); }
Var scale(const Var& x, double c) { return affine(x, c, 0.0); }

// ---------------------------------------------------------------------------
// Backward

namespace {

Var parent(const Node& n, std::size_t i) { return Var(n.parents[i]); }

// Vector-Jacobian products of `node` for the parents flagged in `want`.
std::vector<Var> vjp(const std::shared_ptr<Node>& self_ptr, const Var& g,
                     const std::vector<bool>& want) {
  const Node& n = *self_ptr;
  const Var self(self_ptr);
  std::vector<Var> out(n.parents.size());
  auto a = [&] { return parent(n, 0); };
  auto b = [&] { return parent(n, 1); };
  switch (n.op) {
    case Op::Leaf:
      break;
    case Op::Add:
      if (want[0]) out[0] = g;
      if (want[1]) out[1] = g;
      break;
    case Op::Sub:
      if (want[0]) out[0] = g;
      if (want[1]) out[1] = neg(g);
      break;
    case Op::Mul:
      if (want[0]) out[0] = mul(g, b());
      if (want[1]) out[1] = mul(g, a());
      break;
    case Op::Div:
      if (want[0]) out[0] = div(g, b());
      if (want[1]) out[1] = neg(div(mul(g, self), b()));
      break;
    case Op::Affine:
      out[0] = scale(g, n.scale);
      break;
    case Op::MatMul:
      if (want[0]) out[0] = matmul(g, transpose(b()));
      if (want[1]) out[1] = matmul(transpose(a()), g);
      break;
    case Op::Transpose:
      out[0] = transpose(g);
      break;
    case Op::Reshape:
      out[0] = reshape(g, n.shape);
      break;
    case Op::SumTo:
      out[0] = broadcast_to(g, n.shape);
      break;
    case Op::BroadcastTo:
      out[0] = sum_to(g, n.shape);
      break;
    case Op::Square:
      out[0] = mul(g, scale(a(), 2.0));
      break;
    case Op::Sqrt:
      out[0] = div(g, scale(self, 2.0));
      break;
    case Op::Exp:
      out[0] = mul(g, self);
      break;
    case Op::Log:
      out[0] = div(g, a());
      break;
    case Op::Tanh:
      out[0] = mul(g, affine(square(self), -1.0, 1.0));
      break;
    case Op::Sigmoid:
      out[0] = mul(g, sub(self, square(self)));
      break;
    case Op::Softplus:
      out[0] = mul(g, sigmoid(a()));
      break;
    case Op::Elu: {
      // d elu = 1 on x > 0 and elu(x) + 1 elsewhere.
      const Tensor neg_mask =
          map_unary(n.parents[0]->value, [](double v) { return v > 0 ? 0.0 : 1.0; });
      out[0] = mul(g, affine(mul(constant(neg_mask), self), 1.0, 1.0));
      break;
    }
    case Op::Concat: {
      std::size_t offset = 0;
      for (std::size_t i = 0; i < n.parents.size(); ++i) {
        const std::size_t extent = n.parents[i]->value.shape()[static_cast<std::size_t>(n.axis)];
        if (want[i]) out[i] = slice(g, n.axis, offset, offset + extent);
        offset += extent;
      }
      break;
    }
    case Op::Slice: {
      std::vector<Var> pieces;
      const std::size_t extent = n.shape[static_cast<std::size_t>(n.axis)];
      if (n.begin > 0) {
        Tensor::Shape s = n.shape;
        s[static_cast<std::size_t>(n.axis)] = n.begin;
        pieces.push_back(zeros_like_shape(s));
      }
      pieces.push_back(g);
      if (n.end < extent) {
        Tensor::Shape s = n.shape;
        s[static_cast<std::size_t>(n.axis)] = extent - n.end;
        pieces.push_back(zeros_like_shape(s));
      }
      out[0] = pieces.size() == 1 ? g : concat(pieces, n.axis);
      break;
    }
  }
  return out;
}

std::vector<Var> grad_impl(const Var& output, std::span<const Var> inputs, bool create_graph,
                           bool keep_graph) {
  if (!output.defined() || output.numel() != 1) {
    throw ContractError("grad: output must be a scalar, got shape " +
                        (output.defined() ? shape_string(output.shape()) : std::string("<null>")));
  }
  std::unordered_set<const Node*> input_set;
  for (const Var& in : inputs) input_set.insert(in.node());

  // Post-order DFS over the recorded graph; `needed` marks nodes on a path
  // to some input.
  std::vector<std::shared_ptr<Node>> order;
  std::unordered_map<const Node*, bool> needed;
  if (output.requires_grad() || input_set.count(output.node())) {
    struct Frame {
      std::shared_ptr<Node> node;
      std::size_t next;
    };
    std::vector<Frame> stack{{output.ptr(), 0}};
    needed.emplace(output.node(), false);
    while (!stack.empty()) {
      Frame& top = stack.back();
      Node* n = top.node.get();
      if (top.next == 0 && n->freed && !input_set.count(n)) {
        throw ContractError("grad: graph through a '" + std::string(op_name(n->op)) +
                            "' node was already released; pass retain_graph to reuse it");
      }
      if (top.next < n->parents.size()) {
        const auto& p = n->parents[top.next++];
        if (p->requires_grad && !needed.count(p.get())) {
          needed.emplace(p.get(), false);
          stack.push_back({p, 0});
        }
        continue;
      }
      bool is_needed = input_set.count(n) > 0;
      for (const auto& p : n->parents) {
        auto it = needed.find(p.get());
        if (it != needed.end() && it->second) is_needed = true;
      }
      needed[n] = is_needed;
      if (!n->value.all_finite()) {
        throw NumericError(op_name(n->op), std::string("non-finite forward value produced by ") +
                                               op_name(n->op));
      }
      order.push_back(top.node);
      stack.pop_back();
    }
  }

  std::unordered_map<const Node*, Var> grads;
  {
    std::optional<NoGradGuard> no_grad;
    if (!create_graph) no_grad.emplace();
    if (!order.empty()) grads.emplace(output.node(), constant(Tensor::ones(output.shape())));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const auto& node = *it;
      if (node->parents.empty() || !needed[node.get()]) continue;
      auto git = grads.find(node.get());
      if (git == grads.end()) continue;
      const Var g = git->second;
      std::vector<bool> want(node->parents.size());
      for (std::size_t i = 0; i < want.size(); ++i) {
        const auto nit = needed.find(node->parents[i].get());
        want[i] = nit != needed.end() && nit->second;
      }
      std::vector<Var> pg = vjp(node, g, want);
      for (std::size_t i = 0; i < pg.size(); ++i) {
        if (!want[i] || !pg[i].defined()) continue;
        const Node* p = node->parents[i].get();
        auto [slot, inserted] = grads.try_emplace(p, pg[i]);
        if (!inserted) slot->second = add(slot->second, pg[i]);
      }
      // Interior gradients that are not requested can go once consumed.
      if (!input_set.count(node.get())) grads.erase(node.get());
    }
  }

  std::vector<Var> result;
  result.reserve(inputs.size());
  for (const Var& in : inputs) {
    auto it = grads.find(in.node());
    if (it == grads.end()) {
      result.push_back(constant(Tensor(in.shape())));
    } else if (!create_graph && it->second.requires_grad()) {
      result.push_back(detach(it->second));
    } else {
      result.push_back(it->second);
    }
  }

  if (!keep_graph) {
    for (const auto& node : order) {
      if (!node->parents.empty()) {
        node->parents.clear();
        node->freed = true;
      }
    }
  }
  return result;
}

}  // namespace

std::vector<Var> grad(const Var& output, std::span<const Var> inputs, bool retain_graph) {
  return grad_impl(output, inputs, retain_graph, retain_graph);
}

Var grad(const Var& output, const Var& input, bool retain_graph) {
  return grad(output, std::span<const Var>(&input, 1), retain_graph)[0];
}

Tensor grad2(const Var& output, const Var& input) {
  const std::size_t dim = input.numel();
  if (dim > kMaxHessianDim) {
    throw SizeError("grad2: input dimension " + std::to_string(dim) + " exceeds limit " +
                    std::to_string(kMaxHessianDim) + "; use hvp instead");
  }
  const Var g = reshape(grad_impl(output, std::span<const Var>(&input, 1), true, true)[0],
                        {1, dim});
  Tensor hessian({dim, dim});
  for (std::size_t i = 0; i < dim; ++i) {
    const Var gi = sum(slice(g, 1, i, i + 1));
    const Tensor row = grad_impl(gi, std::span<const Var>(&input, 1), false, true)[0].value();
    std::copy(row.data().begin(), row.data().end(), hessian.data().begin() + i * dim);
  }
  return hessian;
}

Tensor hvp(const Var& output, const Var& input, const Tensor& vector) {
  if (vector.shape() != input.shape()) {
    throw ShapeError("hvp: vector shape " + shape_string(vector.shape()) +
                     " differs from input shape " + shape_string(input.shape()));
  }
  const Var g = grad_impl(output, std::span<const Var>(&input, 1), true, true)[0];
  const Var gv = sum(mul(g, constant(vector)));
  return grad_impl(gv, std::span<const Var>(&input, 1), false, true)[0].value();
}

}  // namespace bism::ad
