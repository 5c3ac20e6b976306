#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "him/tensor.hpp"

namespace him {

struct GraphNode;
using NodePtr = std::shared_ptr<GraphNode>;

// One value in the reverse-mode tape. Backward closures accumulate into the
// parents' grad tensors; they receive the node itself so they can read both
// this node's grad and its parents.
struct GraphNode {
  Tensor value;
  Tensor grad;  // allocated on first use, same shape as value
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(GraphNode&)> backward_fn;

  Tensor& ensure_grad() {
    if (!grad.defined()) grad = Tensor::zeros(value.shape());
    return grad;
  }
};

// Lightweight handle over a graph node. Copy = same node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(n_); }
  const Tensor& val() const { return n_->value; }
  Tensor& grad() const { return n_->ensure_grad(); }
  bool has_grad() const { return n_->grad.defined(); }
  bool requires_grad() const { return n_ && n_->requires_grad; }
  const NodePtr& node() const { return n_; }
  double scalar() const;
  void zero_grad() const {
    if (n_ && n_->grad.defined()) n_->grad.zero_();
  }

  static Var wrap(NodePtr n) {
    Var v;
    v.n_ = std::move(n);
    return v;
  }

 private:
  NodePtr n_;
};

// Grad mode: when disabled, ops produce detached constant nodes (no parents,
// no closures), keeping inference cheap.
bool grad_enabled();
void set_grad_enabled(bool on);

struct NoGradGuard {
  NoGradGuard() : prev_(grad_enabled()) { set_grad_enabled(false); }
  ~NoGradGuard() { set_grad_enabled(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Reverse sweep from a scalar root. Leaf grads accumulate across sweeps of
// independently built graphs (micro-batch accumulation); call at most once
// per graph instance, since intermediate grads are kept on the nodes.
void backward(const Var& root);

// Node factory used by every op. requires_grad is inferred from parents and
// the global grad mode; constant results drop parents and closure.
Var make_op(Tensor value, std::vector<Var> parents,
            std::function<void(GraphNode&)> backward_fn);

}  // namespace him
