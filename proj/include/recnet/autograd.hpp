#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "recnet/tensor.hpp"

namespace recnet {

/// Receives the gradient flowing into an op's output and accumulates into the
/// gradients of its inputs. `input_grads[i]` is null when input i does not
/// require a gradient.
using BackwardFn = std::function<void(const Tensor& out_grad, std::vector<Tensor*>& input_grads)>;

namespace detail {
struct Node;
}

/// A tensor that participates in reverse-mode differentiation. Copies share
/// the underlying node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  /// Records an op result. Gradient tracking is skipped when no input needs
  /// it or a NoGradGuard is active.
  static Var from_op(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const;
  /// Direct access for optimizers and tests; does not record anything.
  Tensor& mutable_value();
  const Shape& shape() const { return value().shape(); }

  bool requires_grad() const;
  bool has_grad() const;
  const Tensor& grad() const;
  void zero_grad();

  /// Back-propagates from a single-element root.
  void backward() const;
  void backward(const Tensor& seed) const;

  /// A graph-free handle on the same values.
  Var detach() const;

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Disables graph construction on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

}  // namespace recnet
