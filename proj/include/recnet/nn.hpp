#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "recnet/autograd.hpp"

namespace recnet {

using Rng = std::mt19937_64;

namespace nn {

using ParamVisitor = std::function<void(const std::string& name, Var& param)>;

/// Anything that owns trainable tensors. Names are dot-separated paths
/// ("blocks.0.emp.conv1.weight") and are stable across runs; they key
/// checkpoints and optimizer state.
class Module {
 public:
  virtual ~Module() = default;
  virtual void visit_parameters(const std::string& prefix, const ParamVisitor& fn) = 0;

  std::vector<std::pair<std::string, Var>> named_parameters();
  int64_t parameter_count();
  void zero_grad();
};

std::string join_name(const std::string& prefix, const std::string& name);

/// Kaiming-style fan-in normal: N(0, 2 / fan_in).
Tensor kaiming_normal(Shape shape, int64_t fan_in, Rng& rng);

class Conv2d final : public Module {
 public:
  Conv2d() = default;
  Conv2d(int64_t in_channels, int64_t out_channels, int64_t kernel, Rng& rng);

  Var operator()(const Var& x) const;
  void visit_parameters(const std::string& prefix, const ParamVisitor& fn) override;

  int64_t in_channels() const { return weight.value().dim(2); }
  int64_t out_channels() const { return weight.value().dim(3); }
  int64_t kernel() const { return weight.value().dim(0); }

  Var weight;  // (k, k, in, out)
  Var bias;    // (out)
};

class DepthwiseConv2d final : public Module {
 public:
  DepthwiseConv2d() = default;
  DepthwiseConv2d(int64_t channels, int64_t kernel, Rng& rng);

  Var operator()(const Var& x) const;
  void visit_parameters(const std::string& prefix, const ParamVisitor& fn) override;

  Var weight;  // (k, k, channels)
  Var bias;    // (channels)
};

}  // namespace nn
}  // namespace recnet
