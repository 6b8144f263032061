#include "recnet/autograd.hpp"

#include <stdexcept>
#include <unordered_set>

namespace recnet {

namespace detail {
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;
};
}  // namespace detail

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<detail::Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Var Var::from_op(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Var out(std::move(value), false);
  if (!g_grad_enabled) return out;
  bool any = false;
  for (const Var& in : inputs) any = any || (in.defined() && in.requires_grad());
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->inputs.reserve(inputs.size());
  for (Var& in : inputs) out.node_->inputs.push_back(std::move(in.node_));
  out.node_->backward = std::move(backward);
  return out;
}

const Tensor& Var::value() const {
  if (!node_) throw std::logic_error("use of undefined Var");
  return node_->value;
}

Tensor& Var::mutable_value() {
  if (!node_) throw std::logic_error("use of undefined Var");
  return node_->value;
}

bool Var::requires_grad() const { return node_ && node_->requires_grad; }
bool Var::has_grad() const { return node_ && !node_->grad.empty(); }

const Tensor& Var::grad() const {
  if (!has_grad()) throw std::logic_error("Var has no gradient; call backward() first");
  return node_->grad;
}

void Var::zero_grad() {
  if (node_) node_->grad = Tensor();
}

Var Var::detach() const { return Var(value(), false); }

void Var::backward() const {
  if (value().numel() != 1) {
    throw std::invalid_argument("backward() without a seed needs a single-element root, got " +
                                shape_str(shape()));
  }
  backward(Tensor(shape(), 1.0));
}

void Var::backward(const Tensor& seed) const {
  require_same_shape(value(), seed, "Var::backward seed");
  if (!requires_grad()) throw std::logic_error("backward() on a Var that does not require grad");

  // Iterative post-order DFS gives a topological order.
  // Nodes are owned here so that clearing a consumer's inputs cannot free a
  // node that is still waiting for its turn.
  std::vector<std::shared_ptr<detail::Node>> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<std::shared_ptr<detail::Node>, size_t>> stack{{node_, 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      std::shared_ptr<detail::Node> child = node->inputs[next++];
      if (child && child->requires_grad && seen.insert(child.get()).second) stack.emplace_back(std::move(child), 0);
    } else {
      order.push_back(std::move(node));
      stack.pop_back();
    }
  }

  if (node_->grad.empty()) node_->grad = Tensor::zeros_like(node_->value);
  node_->grad.add_(seed);

  std::vector<Tensor*> input_grads;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = it->get();
    if (!node->backward) continue;
    input_grads.assign(node->inputs.size(), nullptr);
    for (size_t i = 0; i < node->inputs.size(); ++i) {
      detail::Node* in = node->inputs[i].get();
      if (!in || !in->requires_grad) continue;
      if (in->grad.empty()) in->grad = Tensor::zeros_like(in->value);
      input_grads[i] = &in->grad;
    }
    if (node->grad.empty()) node->grad = Tensor::zeros_like(node->value);
    node->backward(node->grad, input_grads);
    // Interior gradients and saved activations are not needed again.
    node->backward = nullptr;
    node->inputs.clear();
    if (node != node_.get()) node->grad = Tensor();
    it->reset();
  }
}

}  // namespace recnet
