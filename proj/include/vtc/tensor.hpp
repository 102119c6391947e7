#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "vtc/errors.hpp"

namespace vtc {

using Shape = std::vector<int>;

inline std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) n *= std::size_t(d);
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

namespace detail {

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

// One vertex of the define-by-run graph. `backprop` scatters this node's
// gradient into its inputs; leaves have no backprop.
struct Node {
  Shape shape;
  std::vector<float> value;
  std::vector<float> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void()> backprop;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0f);
  }
};

}  // namespace detail

// Suppresses graph construction on ops built inside its scope. Used for
// inference and finite-difference probes.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Dense row-major f32 tensor; a cheap shared handle into the graph.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape) { return filled(std::move(shape), 0.0f); }

  static Tensor filled(Shape shape, float v) {
    check_shape(shape);
    Tensor t;
    t.node_ = std::make_shared<detail::Node>();
    t.node_->value.assign(numel(shape), v);
    t.node_->shape = std::move(shape);
    return t;
  }

  static Tensor of(Shape shape, std::vector<float> data) {
    check_shape(shape);
    if (numel(shape) != data.size())
      throw dimension_error("tensor data length " + std::to_string(data.size()) +
                            " does not match shape " + shape_str(shape));
    Tensor t;
    t.node_ = std::make_shared<detail::Node>();
    t.node_->shape = std::move(shape);
    t.node_->value = std::move(data);
    return t;
  }

  // Allocates the output node of an op. Gradient tracking is inherited from
  // the inputs and gated by grad mode; input edges are only kept when the
  // result participates in backprop.
  static Tensor result(Shape shape, const std::vector<Tensor>& inputs) {
    Tensor t = zeros(std::move(shape));
    bool req = false;
    for (const Tensor& in : inputs) req = req || in.node_->requires_grad;
    if (req && detail::grad_mode()) {
      t.node_->requires_grad = true;
      t.node_->inputs.reserve(inputs.size());
      for (const Tensor& in : inputs) t.node_->inputs.push_back(in.node_);
    }
    return t;
  }

  bool defined() const { return node_ != nullptr; }

  Tensor& set_requires_grad(bool on = true) {
    node_->requires_grad = on;
    return *this;
  }
  bool requires_grad() const { return node_->requires_grad; }

  const Shape& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape[std::size_t(i)]; }
  int rank() const { return int(node_->shape.size()); }
  std::size_t size() const { return node_->value.size(); }

  float* data() { return node_->value.data(); }
  const float* data() const { return node_->value.data(); }
  std::vector<float>& values() { return node_->value; }
  const std::vector<float>& values() const { return node_->value; }

  float item() const {
    if (size() != 1)
      throw contract_error("item() on non-scalar tensor " + shape_str(shape()));
    return node_->value[0];
  }

  float at(int i) const { return node_->value[std::size_t(i)]; }
  float at(int i, int j) const {
    return node_->value[std::size_t(i) * std::size_t(dim(1)) + std::size_t(j)];
  }

  bool has_grad() const { return node_ && node_->grad.size() == node_->value.size(); }
  std::vector<float>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  const std::vector<float>& grad() const {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() {
    if (has_grad()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0f);
  }

  std::shared_ptr<detail::Node> node() const { return node_; }

 private:
  static void check_shape(const Shape& s) {
    if (s.empty()) throw dimension_error("tensor rank must be >= 1");
    for (int d : s)
      if (d <= 0)
        throw dimension_error("tensor dimensions must be positive, got " + shape_str(s));
  }

  std::shared_ptr<detail::Node> node_;
};

// Reverse sweep from a scalar loss. Interior gradients are reset on every
// call; leaf gradients accumulate until explicitly zeroed, so two backward
// passes without a zero_grad in between double the leaf gradients.
inline void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw contract_error("backward() requires a scalar loss tensor");
  const auto root = loss.node();
  if (!root->requires_grad)
    throw contract_error("backward() on a tensor with no trainable ancestry");

  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& top = stack.back();
    detail::Node* node = top.first;
    if (top.second < node->inputs.size()) {
      detail::Node* in = node->inputs[top.second++].get();
      if (in->requires_grad && seen.insert(in).second) stack.emplace_back(in, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (detail::Node* n : order) {
    n->ensure_grad();
    if (n->backprop) std::fill(n->grad.begin(), n->grad.end(), 0.0f);
  }
  root->grad[0] += 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backprop) (*it)->backprop();
}

}  // namespace vtc
