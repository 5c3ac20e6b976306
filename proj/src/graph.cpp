#include "him/graph.hpp"

#include <unordered_set>

namespace him {

namespace {
bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool on) { g_grad_enabled = on; }

Var::Var(Tensor value, bool requires_grad) {
  n_ = std::make_shared<GraphNode>();
  n_->value = std::move(value);
  n_->requires_grad = requires_grad;
}

double Var::scalar() const {
  if (!n_ || n_->value.numel() != 1)
    throw ShapeError("Var::scalar on non-scalar value");
  return n_->value[0];
}

Var make_op(Tensor value, std::vector<Var> parents,
            std::function<void(GraphNode&)> backward_fn) {
  bool needs = false;
  if (g_grad_enabled) {
    for (const Var& p : parents)
      if (p.requires_grad()) {
        needs = true;
        break;
      }
  }
  auto n = std::make_shared<GraphNode>();
  n->value = std::move(value);
  n->requires_grad = needs;
  if (needs) {
    n->parents.reserve(parents.size());
    for (const Var& p : parents) n->parents.push_back(p.node());
    n->backward_fn = std::move(backward_fn);
  }
  return Var::wrap(std::move(n));
}

void backward(const Var& root) {
  if (!root.defined()) throw ShapeError("backward on undefined Var");
  if (root.val().numel() != 1)
    throw ShapeError("backward root must be scalar");
  if (!root.requires_grad()) return;

  // Iterative post-order over requires_grad nodes.
  std::vector<GraphNode*> order;
  std::unordered_set<GraphNode*> visited;
  std::vector<std::pair<GraphNode*, size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      GraphNode* p = node->parents[idx++].get();
      if (p->requires_grad && visited.insert(p).second)
        stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    GraphNode* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

}  // namespace him
