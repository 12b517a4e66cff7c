#pragma once

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
#include <unordered_set>
#include <utility>
#include <vector>

#include "cxr/common/error.hpp"

namespace cxr::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t numel_of(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {

inline std::uint64_t next_seq() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a gradient arrives
  bool requires_grad = false;
  std::uint64_t seq = next_seq();
  std::vector<std::shared_ptr<Node>> parents;
  // Pushes this node's grad into its parents' grads.
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const { return !backward_fn; }

  std::span<T> grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

}  // namespace detail

// N-dimensional row-major array with an optional gradient. Copies share the
// underlying storage (handle semantics); use clone() for a deep copy.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0)) : node_(std::make_shared<detail::Node<T>>()) {
    node_->data.assign(numel_of(shape), fill);
    node_->shape = std::move(shape);
  }

  Tensor(Shape shape, std::vector<T> data) : node_(std::make_shared<detail::Node<T>>()) {
    if (numel_of(shape) != data.size()) {
      throw DimensionError("tensor data length " + std::to_string(data.size()) +
                           " does not match shape " + shape_str(shape));
    }
    node_->shape = std::move(shape);
    node_->data = std::move(data);
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T(0)); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), T(1)); }
  static Tensor scalar(T v) { return Tensor(Shape{}, std::vector<T>{v}); }

  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t ndim() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<T> data() { return node_->data; }
  std::span<const T> data() const { return node_->data; }
  T item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
  }
  T operator[](std::size_t i) const { return node_->data[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    if (!node_->is_leaf()) throw ContractError("requires_grad can only be toggled on leaf tensors");
    node_->requires_grad = on;
    if (!on) node_->grad.clear();
    return *this;
  }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad.clear(); }

  // New leaf holding a copy of the values, cut from any graph.
  Tensor detach() const { return Tensor(shape(), std::vector<T>(node_->data)); }
  Tensor clone() const {
    Tensor out = detach();
    out.node_->requires_grad = node_->requires_grad;
    return out;
  }

  bool is_leaf() const { return node_->is_leaf(); }
  const NodePtr& node() const { return node_; }

  bool all_finite() const {
    return std::all_of(node_->data.begin(), node_->data.end(),
                       [](T v) { return std::isfinite(v); });
  }

 private:
  NodePtr node_;
};

// Ordered record of the operations that produced a value, oldest first.
// Creation order is a valid topological order because an operation's inputs
// always exist before its output.
template <typename T>
class Tape {
 public:
  using NodePtr = typename Tensor<T>::NodePtr;

  static Tape record_from(const Tensor<T>& root) {
    Tape tape;
    std::vector<detail::Node<T>*> stack{root.node().get()};
    std::unordered_set<detail::Node<T>*> seen{root.node().get()};
    tape.nodes_.push_back(root.node());
    while (!stack.empty()) {
      auto* n = stack.back();
      stack.pop_back();
      for (const auto& p : n->parents) {
        if (!p->requires_grad || !seen.insert(p.get()).second) continue;
        tape.nodes_.push_back(p);
        stack.push_back(p.get());
      }
    }
    std::sort(tape.nodes_.begin(), tape.nodes_.end(),
              [](const NodePtr& a, const NodePtr& b) { return a->seq < b->seq; });
    return tape;
  }

  const std::vector<NodePtr>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<NodePtr> nodes_;
};

// Reverse-mode sweep from a scalar loss. Interior nodes release their saved
// state afterwards, so a graph can be backpropagated once.
template <typename T>
void backward(const Tensor<T>& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) return;
  Tape<T> tape = Tape<T>::record_from(loss);
  loss.node()->grad_buffer()[0] += T(1);
  const auto& nodes = tape.nodes();
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    auto& n = **it;
    if (n.is_leaf() || n.grad.empty()) continue;
    n.backward_fn(n);
    n.backward_fn = nullptr;
    n.parents.clear();
  }
}

namespace detail {

// Builds an op result. The graph edge is recorded only if some input needs a
// gradient; otherwise the result is a constant leaf.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data,
                      std::initializer_list<const Tensor<T>*> inputs,
                      std::function<void(Node<T>&)> backward_fn) {
  Tensor<T> out(std::move(shape), std::move(data));
  bool needs = std::any_of(inputs.begin(), inputs.end(),
                           [](const Tensor<T>* t) { return t->requires_grad(); });
  if (needs) {
    auto& n = *out.node();
    n.requires_grad = true;
    for (const auto* t : inputs) n.parents.push_back(t->node());
    n.backward_fn = std::move(backward_fn);
  }
  return out;
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, const std::vector<Tensor<T>>& inputs,
                      std::function<void(Node<T>&)> backward_fn) {
  Tensor<T> out(std::move(shape), std::move(data));
  bool needs = std::any_of(inputs.begin(), inputs.end(),
                           [](const Tensor<T>& t) { return t.requires_grad(); });
  if (needs) {
    auto& n = *out.node();
    n.requires_grad = true;
    for (const auto& t : inputs) n.parents.push_back(t.node());
    n.backward_fn = std::move(backward_fn);
  }
  return out;
}

// Gradient sink for input `i` of node `n`, or an empty span if that input is
// not tracked.
template <typename T>
std::span<T> parent_grad(Node<T>& n, std::size_t i) {
  auto& p = *n.parents[i];
  if (!p.requires_grad) return {};
  return p.grad_buffer();
}

}  // namespace detail

}  // namespace cxr::ad
