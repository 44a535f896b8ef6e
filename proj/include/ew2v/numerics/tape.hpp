// Copyright 2026 The ew2v Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ew2v/numerics/tensor.hpp"

namespace ew2v {

// A trainable array. `grad` accumulates across backward() calls until
// zero_grad() is called; nothing clears it implicitly. A frozen parameter
// enters the tape as a constant, so its gradient stays exactly zero.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool frozen = false;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad.fill(T(0)); }
  std::size_t numel() const { return value.numel(); }
};

template <typename T>
class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor<T>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const { return tape_->requires_grad(id_); }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Reverse-mode tape. Nodes are appended in evaluation order, so a reverse
// sweep visits every node after all of its consumers.
template <typename T>
class Tape {
 public:
  // Receives the node's output gradient; adds into parent gradients.
  using BackwardFn = std::function<void(Tape&, const Tensor<T>&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value) {
    nodes_.push_back(Node{std::move(value), {}, false, false, {}, nullptr});
    return {this, nodes_.size() - 1};
  }

  // One leaf per parameter per tape; repeated calls return the same node.
  Var<T> param(Parameter<T>& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return {this, it->second};
    nodes_.push_back(Node{p.value, {}, false, !p.frozen, {}, &p});
    param_nodes_.emplace(&p, nodes_.size() - 1);
    param_order_.emplace_back(&p, nodes_.size() - 1);
    return {this, nodes_.size() - 1};
  }

  template <typename... Parents>
  Var<T> record(Tensor<T> value, BackwardFn backward, const Parents&... parents) {
    const bool needs = (false || ... || parents.requires_grad());
    nodes_.push_back(
        Node{std::move(value), {}, false, needs, needs ? std::move(backward) : BackwardFn{}, nullptr});
    return {this, nodes_.size() - 1};
  }

  Var<T> record_many(Tensor<T> value, BackwardFn backward, const std::vector<Var<T>>& parents) {
    bool needs = false;
    for (const auto& p : parents) needs = needs || p.requires_grad();
    nodes_.push_back(
        Node{std::move(value), {}, false, needs, needs ? std::move(backward) : BackwardFn{}, nullptr});
    return {this, nodes_.size() - 1};
  }

  const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Gradient buffer of a node, allocated as zeros on first touch.
  Tensor<T>& grad(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.has_grad) {
      n.grad = Tensor<T>(n.value.shape());
      n.has_grad = true;
    }
    return n.grad;
  }

  // Propagates d(loss)/d(node) through the tape and adds the result into
  // every non-frozen Parameter::grad reached.
  void backward(const Var<T>& loss) {
    if (loss.value().numel() != 1) {
      throw ShapeError("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));
    }
    if (!requires_grad(loss.id())) return;
    grad(loss.id())[0] = T(1);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.has_grad || !n.backward) continue;
      n.backward(*this, n.grad);
    }
    for (auto& [p, id] : param_order_) {
      Node& n = nodes_[id];
      if (!n.has_grad) continue;
      if (!n.grad.all_finite()) {
        throw NonFiniteError("non-finite gradient for parameter '" + p->name + "'");
      }
      auto dst = p->grad.data();
      auto src = n.grad.data();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool has_grad;
    bool requires_grad;
    BackwardFn backward;
    Parameter<T>* param;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<T>*, std::size_t> param_nodes_;
  std::vector<std::pair<Parameter<T>*, std::size_t>> param_order_;
};

}  // namespace ew2v
