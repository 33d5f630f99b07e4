#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "pfnmt/errors.hpp"
#include "pfnmt/tensor.hpp"

namespace pfnmt {
inline namespace PFNMT_PRECISION_NS {

class Tape;

// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool valid() const { return tape != nullptr; }
};

// Single-use record of executed primitive operations. Leaves are either
// bound parameters (whose gradient is flushed into the external Tensor's
// grad slot), tracked variables (gradient kept on the tape), or constants.
// Values that do not depend on a gradient-carrying leaf are not recorded for
// the backward pass at all.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var param(Tensor& p) {
    Node n;
    n.ref = &p;
    n.target = &p;
    n.requires_grad = record_;
    return push_node(std::move(n));
  }

  // Read-only parameter: no copy, no gradient.
  Var param(const Tensor& p) {
    Node n;
    n.ref = &p;
    return push_node(std::move(n));
  }

  Var constant(Tensor t) {
    Node n;
    n.own = std::move(t);
    return push_node(std::move(n));
  }

  Var variable(Tensor t) {
    Node n;
    n.own = std::move(t);
    n.requires_grad = record_;
    return push_node(std::move(n));
  }

  const Tensor& value(Var v) const { return nodes_.at(v.id).value(); }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  // Gradient accumulated for v; empty when none reached it.
  std::span<const Real> grad(Var v) const { return nodes_.at(v.id).grad; }

  std::size_t size() const { return nodes_.size(); }

  // Order in which the last backward() visited recorded operations.
  const std::vector<std::size_t>& backward_order() const { return visited_; }

  // Reverse-mode sweep from a scalar loss. When flush_params is set the
  // parameter-leaf gradients are added into the bound tensors' grad slots;
  // otherwise the caller invokes flush_param_grads() later (for serialized
  // reduction across worker tapes).
  void backward(Var loss, bool flush_params = true) {
    if (loss.tape != this) throw ContractError("backward: loss was not produced on this tape");
    const Tensor& lv = value(loss);
    if (lv.size() != 1) {
      throw ContractError("backward: loss must be scalar, got shape " + shape_str(lv.shape()));
    }
    if (backward_done_) throw ContractError("backward: tape already consumed");
    backward_done_ = true;
    visited_.clear();
    grad_mut(loss.id)[0] += 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.backward || n.grad.empty()) continue;
      visited_.push_back(i);
      n.backward(*this, i);
    }
    if (flush_params) flush_param_grads();
  }

  void flush_param_grads() {
    for (auto& n : nodes_) {
      if (n.target == nullptr || n.grad.empty()) continue;
      n.target->ensure_grad();
      auto& g = n.target->grad();
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += n.grad[k];
    }
  }

  // Used by operations to write results and gradients.
  std::vector<Real>& grad_mut(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad.assign(n.value().size(), 0.0);
    return n.grad;
  }

  Var record(Tensor out, std::initializer_list<Var> inputs, BackwardFn fn) {
    return record(std::move(out), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
  }

  Var record(Tensor out, std::span<const Var> inputs, BackwardFn fn) {
    Node n;
    n.own = std::move(out);
    if (record_) {
      for (const auto& in : inputs) {
        if (in.tape != this) throw ContractError("operation mixes values from different tapes");
        if (nodes_[in.id].requires_grad) n.requires_grad = true;
      }
      if (n.requires_grad) n.backward = std::move(fn);
    }
    return push_node(std::move(n));
  }

 private:
  struct Node {
    Tensor own;
    const Tensor* ref = nullptr;
    Tensor* target = nullptr;
    std::vector<Real> grad;
    BackwardFn backward;
    bool requires_grad = false;

    const Tensor& value() const { return ref ? *ref : own; }
  };

  Var push_node(Node n) {
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
  }

  std::deque<Node> nodes_;
  std::vector<std::size_t> visited_;
  bool record_;
  bool backward_done_ = false;
};

inline const Tensor& Var::value() const { return tape->value(*this); }

}  // namespace PFNMT_PRECISION_NS
}  // namespace pfnmt
