// Copyright 2026 The fsed Authors.
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

/**
 * @file autograd.hpp
 * @brief Minimal reverse-mode automatic differentiation over Tensor values.
 *
 * A Var wraps a shared graph node. Operations in ops.hpp create new nodes
 * that remember their parents and a backward closure; calling backward() on
 * a scalar result walks the graph in reverse topological order and
 * accumulates gradients into every node that requires them. Leaf nodes that
 * require gradients are the trainable parameters.
 *
 * The graph is rebuilt on every forward pass and released when the last Var
 * referencing it goes out of scope. Inside a NoGradGuard no graph is
 * recorded at all, which is how inference runs.
 */
#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "fsed/tensor.hpp"

namespace fsed::ag {

struct Node {
  Tensor value;
  Tensor grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  /// Gradient buffer, zero-allocated on first use.
  Tensor& grad_ref() {
    if (grad.size() != value.size()) grad = Tensor(value.shape(), 0.0);
    return grad;
  }
  bool has_grad() const { return !grad.empty() || value.empty(); }
};

namespace detail {
inline bool& grad_enabled_flag() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_enabled_flag(); }

/// Disables graph recording for the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_enabled_flag()) {
    detail::grad_enabled_flag() = false;
  }
  ~NoGradGuard() { detail::grad_enabled_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

class Var {
 public:
  Var() : node_(std::make_shared<Node>()) {}
  explicit Var(Tensor value, bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t dim(std::size_t i) const { return node_->value.dim(i); }
  bool requires_grad() const { return node_->requires_grad; }
  void zero_grad() { node_->grad = Tensor(); }

  const std::shared_ptr<Node>& node() const { return node_; }
  bool same_node(const Var& other) const { return node_ == other.node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Wraps an operation result. Records parents and the backward closure only
/// when recording is on and some parent needs a gradient.
inline Var make_result(Tensor value, std::vector<Var> parents,
                       std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool needs = false;
  if (grad_enabled()) {
    for (const Var& p : parents) needs = needs || p.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (const Var& p : parents) node->parents.push_back(p.node());
    node->backward_fn = std::move(backward_fn);
  }
  return Var(std::move(node));
}

/// Back-propagates from `root`. A scalar root is seeded with 1; otherwise a
/// seed of matching shape must be supplied.
inline void backward(const Var& root, const Tensor* seed = nullptr) {
  if (!root.requires_grad()) return;
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  // Iterative post-order DFS.
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && !visited.count(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  Node& r = *root.node();
  if (seed) {
    if (seed->size() != r.value.size()) {
      throw ShapeError("backward seed shape mismatch");
    }
    r.grad_ref() += *seed;
  } else {
    if (r.value.size() != 1) {
      throw ShapeError("backward() without a seed needs a scalar root, got " +
                       shape_string(r.value.shape()));
    }
    r.grad_ref()[0] += 1.0;
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

}  // namespace fsed::ag
