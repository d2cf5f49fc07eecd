#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "craft/error.hpp"

// Dense double-precision tensors with a reverse-mode tape. Each op output keeps
// its parents and a closure that pushes its gradient into them; backward()
// replays closures in reverse topological order. Reductions run in a fixed
// index order so results are reproducible bit for bit.

namespace craft::tc {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backward;

  std::vector<double>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false) {
    if (numel(shape) != values.size())
      throw ShapeError("tensor: shape " + shape_str(shape) + " does not match " + std::to_string(values.size()) +
                       " values");
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const std::size_t n = numel(shape);
    return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor scalar(double v, bool requires_grad = false) { return from({1}, {v}, requires_grad); }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  /// Size of the last dimension; rows() * cols() == size().
  std::size_t cols() const { return node_->shape.empty() ? 1 : node_->shape.back(); }
  std::size_t rows() const { return cols() == 0 ? 0 : size() / cols(); }

  std::span<const double> values() const { return node_->value; }
  std::span<double> mutable_values() { return node_->value; }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->ensure_grad(); }
  double operator[](std::size_t i) const { return node_->value[i]; }
  double item() const {
    if (size() != 1) throw UsageError("item() on a tensor with " + std::to_string(size()) + " elements");
    return node_->value[0];
  }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }
  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& handle() const { return node_; }

  /// Leaf copy of the values, cut from the graph.
  Tensor detach() const { return from(shape(), node_->value, false); }

 private:
  std::shared_ptr<Node> node_;
};

/// Builds an op output. The backward closure is kept only when some input
/// needs gradients.
template <class Backward>
Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> inputs, Backward&& bw) {
  Tensor out = Tensor::from(std::move(shape), std::move(value));
  bool rg = false;
  for (const auto& t : inputs) rg = rg || t.requires_grad();
  if (rg) {
    Node* self = out.node();
    self->requires_grad = true;
    for (auto& t : inputs) self->parents.push_back(t.handle());
    self->backward = [self, fn = std::forward<Backward>(bw)]() mutable { fn(self->grad); };
  }
  return out;
}

/// Accumulates d(loss)/d(leaf) into every reachable tensor that requires
/// gradients.
inline void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) throw UsageError("backward: loss must be a scalar tensor");
  if (!loss.requires_grad()) return;
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node(), 0}};
  seen.insert(loss.node());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  loss.node()->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) {
      for (auto& p : n->parents)
        if (p->requires_grad) p->ensure_grad();
      n->backward();
    }
  }
  // intermediate grads are not needed after the sweep; leaves keep theirs
  for (Node* n : order)
    if (n->backward) std::vector<double>().swap(n->grad);
}

}  // namespace craft::tc
