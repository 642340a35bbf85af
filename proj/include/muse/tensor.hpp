// Copyright 2026 The muse Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Dense tensors with a dynamic reverse-mode tape.
//
// A Tensor is a shared handle to a node holding values, an optional
// gradient buffer and, for op outputs, the closure that pushes the output
// gradient back into the op's inputs. Nodes only point at their inputs, so
// a graph is released as soon as the last handle to its root goes away.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "muse/error.hpp"

namespace muse {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

enum class Mode { Train, Eval };

namespace detail {

inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;
  const char* op = "leaf";

  bool is_leaf() const { return !backward; }

  std::span<T> ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T{0});
    return grad;
  }
};

}  // namespace detail

// Disables tape recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

inline bool grad_enabled() { return detail::grad_mode_flag(); }

template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), T{0}, requires_grad);
  }

  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    const std::size_t n = shape_numel(shape);
    return from(std::move(shape), std::vector<T>(n, value), requires_grad);
  }

  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false) {
    if (shape.empty()) throw ConfigError("tensor shape must have at least one dimension");
    for (std::size_t d : shape) {
      if (d == 0) throw ConfigError("tensor extents must be positive, got " + shape_str(shape));
    }
    if (shape_numel(shape) != values.size()) {
      throw ConfigError("tensor shape " + shape_str(shape) + " does not match " +
                        std::to_string(values.size()) + " values");
    }
    auto node = std::make_shared<detail::Node<T>>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    node->requires_grad = requires_grad;
    if (requires_grad) node->ensure_grad();
    return Tensor(std::move(node));
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const T> data() const { return node_->data; }
  // Direct write access, intended for leaves (initialisation, optimiser).
  std::span<T> mutable_data() { return node_->data; }

  // Empty until a backward pass has reached this tensor.
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->ensure_grad(); }

  void zero_grad() {
    if (node_->requires_grad) std::fill(node_->grad.begin(), node_->grad.end(), T{0});
  }

  T item() const {
    if (numel() != 1) throw UsageError("item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
  }

  T operator[](std::size_t i) const { return node_->data[i]; }

  // Copy of the values as a new leaf with no history.
  Tensor detach() const { return from(shape(), node_->data, false); }

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

namespace detail {

template <typename T>
void check_finite(std::span<const T> values, std::string_view what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericError(std::string(what) + ": non-finite value at flat index " + std::to_string(i));
    }
  }
}

// Wraps freshly computed values into an op output. The backward closure is
// recorded only when recording is enabled and some input needs a gradient.
template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> values,
                      std::vector<std::shared_ptr<Node<T>>> inputs,
                      std::function<void(Node<T>&)> backward) {
  check_finite<T>(values, op);
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->op = op;
  const bool needs = grad_enabled() && std::any_of(inputs.begin(), inputs.end(), [](const auto& in) {
                       return in && in->requires_grad;
                     });
  if (needs) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
  }
  return Tensor<T>(std::move(node));
}

}  // namespace detail

// Accumulates d(loss)/d(t) into the grad buffer of every reachable tensor
// that requires a gradient. Leaf gradients accumulate across calls;
// intermediate gradients are rebuilt from zero on every call.
template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw UsageError("backward() needs a scalar loss, got shape " +
                     (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  using NodeT = detail::Node<T>;
  NodeT* root = loss.node().get();
  if (!root->requires_grad) throw UsageError("backward(): loss does not depend on any gradient-requiring tensor");

  // Iterative post-order DFS gives a topological order (inputs first).
  std::vector<NodeT*> order;
  std::unordered_set<NodeT*> visited;
  std::vector<std::pair<NodeT*, std::size_t>> stack{{root, 0}};
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      NodeT* in = node->inputs[next++].get();
      if (in && in->requires_grad && visited.insert(in).second) stack.emplace_back(in, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (NodeT* n : order) {
    if (n->is_leaf()) {
      n->ensure_grad();
    } else {
      n->grad.assign(n->data.size(), T{0});
    }
  }
  root->grad[0] += T{1};

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT* n = *it;
    if (n->is_leaf()) continue;
    n->backward(*n);
    detail::check_finite<T>(std::span<const T>(n->grad), n->op);
    std::vector<T>().swap(n->grad);
  }
  for (NodeT* n : order) {
    if (n->is_leaf()) detail::check_finite<T>(std::span<const T>(n->grad), "gradient");
  }
}

enum class LrGroup { Base, Boosted };

// A trainable tensor plus its optimiser state.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  std::vector<T> momentum_buffer;
  LrGroup group = LrGroup::Base;

  Parameter(std::string n, Tensor<T> v, LrGroup g)
      : name(std::move(n)), value(std::move(v)), momentum_buffer(value.numel(), T{0}), group(g) {}
};

template <typename T>
struct SgdOptions {
  T lr = T(0.01);
  T momentum = T(0);
  T weight_decay = T(0);
};

// g <- grad + wd * value ; buf <- momentum * buf + g ; value <- value - lr * buf.
// Gradients are zeroed afterwards.
template <typename T>
void sgd_step(std::span<Parameter<T>* const> params, const SgdOptions<T>& opt) {
  if (!(opt.lr > T(0))) throw ConfigError("sgd_step: learning rate must be positive");
  if (opt.momentum < T(0) || opt.momentum >= T(1)) throw ConfigError("sgd_step: momentum must lie in [0,1)");
  if (opt.weight_decay < T(0)) throw ConfigError("sgd_step: weight decay must be non-negative");
  for (Parameter<T>* p : params) {
    auto value = p->value.mutable_data();
    auto grad = p->value.mutable_grad();
    auto& buf = p->momentum_buffer;
    for (std::size_t i = 0; i < value.size(); ++i) {
      const T g = grad[i] + opt.weight_decay * value[i];
      buf[i] = opt.momentum * buf[i] + g;
      value[i] -= opt.lr * buf[i];
    }
    p->value.zero_grad();
  }
}

template <typename T>
void sgd_step(std::span<Parameter<T>> params, const SgdOptions<T>& opt) {
  std::vector<Parameter<T>*> ptrs;
  ptrs.reserve(params.size());
  for (auto& p : params) ptrs.push_back(&p);
  sgd_step<T>(std::span<Parameter<T>* const>(ptrs), opt);
}

}  // namespace muse
