#pragma once

// Dense n-dimensional arrays with a reverse-mode differentiation graph.
//
// Layout is row-major; images and feature maps use channels x height x width.
// A Tensor is a cheap handle onto a shared graph node. Values are immutable
// once an operation has produced them; parameters are the only tensors whose
// values are written in place, and only between graph executions.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "dro/error.hpp"

namespace dro {

using Shape = std::vector<int>;

inline std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (int e : shape) n *= static_cast<std::size_t>(e);
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

inline void check_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have rank >= 1");
  for (int e : shape)
    if (e < 1) throw DimensionError("non-positive extent in shape " + shape_str(shape));
}

/// Byte counters over all live tensor buffers (values and gradients).
struct MemoryStats {
  static std::atomic<std::int64_t>& current() {
    static std::atomic<std::int64_t> c{0};
    return c;
  }
  static std::atomic<std::int64_t>& peak() {
    static std::atomic<std::int64_t> p{0};
    return p;
  }
  static void add(std::int64_t bytes) {
    std::int64_t now = current().fetch_add(bytes) + bytes;
    std::int64_t prev = peak().load();
    while (now > prev && !peak().compare_exchange_weak(prev, now)) {
    }
  }
  static void sub(std::int64_t bytes) { current().fetch_sub(bytes); }
  static void reset_peak() { peak().store(current().load()); }
};

/// Graph construction is skipped entirely while disabled (inference).
class GradMode {
 public:
  static bool enabled() { return flag(); }
  static void set(bool on) { flag() = on; }

 private:
  static bool& flag() {
    thread_local bool on = true;
    return on;
  }
};

class NoGradGuard {
 public:
  NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set(false); }
  ~NoGradGuard() { GradMode::set(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  explicit Node(Shape s) : shape(std::move(s)), value(numel(shape)) {
    MemoryStats::add(static_cast<std::int64_t>(value.size() * sizeof(T)));
  }
  ~Node() {
    MemoryStats::sub(static_cast<std::int64_t>((value.size() + grad.size()) * sizeof(T)));
  }
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  T* ensure_grad() {
    if (grad.empty()) {
      grad.assign(value.size(), T(0));
      MemoryStats::add(static_cast<std::int64_t>(grad.size() * sizeof(T)));
    }
    return grad.data();
  }
  void release_grad() {
    MemoryStats::sub(static_cast<std::int64_t>(grad.size() * sizeof(T)));
    std::vector<T>().swap(grad);
  }
};

template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<Node<T>>;

  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor zeros(const Shape& shape, bool requires_grad = false) {
    return full(shape, T(0), requires_grad);
  }
  static Tensor full(const Shape& shape, T v, bool requires_grad = false) {
    check_shape(shape);
    auto n = std::make_shared<Node<T>>(shape);
    std::fill(n->value.begin(), n->value.end(), v);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }
  static Tensor from(const Shape& shape, std::vector<T> data, bool requires_grad = false) {
    check_shape(shape);
    if (data.size() != dro::numel(shape))
      throw DimensionError("data length " + std::to_string(data.size()) +
                           " does not match shape " + shape_str(shape));
    auto n = std::make_shared<Node<T>>(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }
  static Tensor scalar(T v, bool requires_grad = false) { return full({1}, v, requires_grad); }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int axis) const {
    if (axis < 0) axis += rank();
    return node_->shape.at(static_cast<std::size_t>(axis));
  }
  std::size_t numel() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const T> data() const { return node_->value; }
  /// Direct write access; only for leaves (inputs, parameters) between graph executions.
  std::span<T> mutable_data() { return node_->value; }
  const T& operator[](std::size_t i) const { return node_->value[i]; }
  T item() const {
    if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
  }
  std::vector<T> to_vector() const { return node_->value; }

  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient buffer; empty span until a backward pass reached this tensor.
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return {node_->ensure_grad(), node_->value.size()}; }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  }

  /// Same values, cut from the graph.
  Tensor detach() const { return from(shape(), node_->value, false); }

  Node<T>& node() const { return *node_; }
  const NodePtr& node_ptr() const { return node_; }

 private:
  NodePtr node_;
};

namespace detail {

template <typename T>
void check_finite(const Node<T>& n) {
  for (const T& v : n.value)
    if (!std::isfinite(v))
      throw NumericsError(std::string("non-finite value produced by ") + n.op);
}

/// Creates the output node of an operation. Parents are recorded only when
/// a gradient can flow back to them.
template <typename T>
std::shared_ptr<Node<T>> make_result(const Shape& shape, const char* op,
                                     std::initializer_list<const Tensor<T>*> inputs) {
  check_shape(shape);
  auto n = std::make_shared<Node<T>>(shape);
  n->op = op;
  if (GradMode::enabled()) {
    for (const Tensor<T>* in : inputs)
      if (in->requires_grad()) n->requires_grad = true;
    if (n->requires_grad)
      for (const Tensor<T>* in : inputs) n->parents.push_back(in->node_ptr());
  }
  return n;
}

template <typename T>
std::shared_ptr<Node<T>> make_result(const Shape& shape, const char* op,
                                     const std::vector<Tensor<T>>& inputs) {
  check_shape(shape);
  auto n = std::make_shared<Node<T>>(shape);
  n->op = op;
  if (GradMode::enabled()) {
    for (const auto& in : inputs)
      if (in.requires_grad()) n->requires_grad = true;
    if (n->requires_grad)
      for (const auto& in : inputs) n->parents.push_back(in.node_ptr());
  }
  return n;
}

/// Gradient buffer of parent `i`, or nullptr when that parent takes no gradient.
template <typename T>
T* parent_grad(Node<T>& n, std::size_t i) {
  Node<T>& p = *n.parents[i];
  return p.requires_grad ? p.ensure_grad() : nullptr;
}

}  // namespace detail

/// Reverse sweep from a scalar loss. Gradients accumulate into every reachable
/// tensor that requires them; intermediate gradient buffers are released once
/// consumed, leaf buffers (parameters, inputs) are kept.
template <typename T>
void backward(const Tensor<T>& loss) {
  if (loss.numel() != 1)
    throw DimensionError("backward() needs a scalar loss, got " + shape_str(loss.shape()));
  if (!loss.requires_grad()) return;

  // Iterative DFS post-order; a node seen again while still on the stack is a cycle.
  std::vector<Node<T>*> order;
  std::unordered_map<Node<T>*, int> state;  // 1 = on stack, 2 = done
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(&loss.node(), 0);
  state[&loss.node()] = 1;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (!p->requires_grad) continue;
      auto it = state.find(p);
      if (it == state.end()) {
        state[p] = 1;
        stack.emplace_back(p, 0);
      } else if (it->second == 1) {
        throw GraphError("cycle detected in differentiation graph at op " + std::string(p->op));
      }
    } else {
      state[node] = 2;
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node().ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn && !n->grad.empty()) {
      n->backward_fn(*n);
      if (!n->parents.empty()) n->release_grad();
    }
  }
}

}  // namespace dro
