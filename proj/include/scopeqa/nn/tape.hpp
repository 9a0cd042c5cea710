#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

#include "scopeqa/nn/tensor.hpp"

namespace scopeqa::nn {

// Handle to a node recorded on a Tape.
struct Var {
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::size_t id = kNone;
  bool valid() const { return id != kNone; }
};

// Reverse-mode record of one forward pass. Nodes are appended in execution
// order, so reverse insertion order is a valid topological order and
// backward() runs each node's rule exactly once.
template <class T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, Var self)>;

  // When recording is off, ops keep values but store no backward rules.
  explicit Tape(bool recording = true) : recording_(recording) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }

  Var constant(Tensor<T> value) { return push(std::move(value), false, nullptr); }

  // Differentiable input that is not a Parameter (gradient checks, heads).
  Var leaf(Tensor<T> value) { return push(std::move(value), recording_, nullptr); }

  // Gradients reaching this node are added into param.grad by backward().
  Var parameter(Parameter<T>& param, bool trainable = true) {
    Var v = push(param.value, recording_ && trainable, nullptr);
    if (recording_ && trainable) nodes_[v.id].param = &param;
    return v;
  }

  // Records an op output. The rule is kept only if some parent needs grad.
  Var record(Tensor<T> value, std::initializer_list<Var> parents,
             BackwardFn rule) {
    bool needs = false;
    if (recording_) {
      for (Var p : parents) needs = needs || nodes_.at(p.id).requires_grad;
    }
    return push(std::move(value), needs, needs ? std::move(rule) : nullptr);
  }

  const Tensor<T>& value(Var v) const { return nodes_.at(v.id).value; }
  Tensor<T>& mutable_value(Var v) { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  bool has_grad(Var v) const { return !nodes_.at(v.id).grad.empty(); }

  // Gradient buffer of v, zero-initialized on first access.
  Tensor<T>& grad(Var v) {
    Node& n = nodes_.at(v.id);
    if (n.grad.empty() && !n.value.empty()) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }

  std::size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 and propagates to every node that requires grad.
  void backward(Var loss) {
    require(value(loss).size() == 1, ErrorCode::kShape,
            "backward() needs a scalar loss, got shape " +
                shape_string(value(loss).shape()));
    grad(loss)[0] = T(1);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.empty()) continue;
      if (n.rule) n.rule(*this, Var{i});
    }
    for (Node& n : nodes_) {
      if (n.param == nullptr || n.grad.empty()) continue;
      Tensor<T>& pg = n.param->grad;
      if (pg.shape() != n.param->value.shape()) pg = Tensor<T>(n.param->value.shape());
      for (std::size_t j = 0; j < pg.size(); ++j) pg[j] += n.grad[j];
    }
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    BackwardFn rule;
    Parameter<T>* param = nullptr;
    bool requires_grad = false;
  };

  Var push(Tensor<T> value, bool requires_grad, BackwardFn rule) {
    nodes_.push_back(Node{std::move(value), {}, std::move(rule), nullptr, requires_grad});
    return Var{nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
  bool recording_;
};

}  // namespace scopeqa::nn
