#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "recnet/nn.hpp"

namespace recnet {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
  /// Global gradient-norm clip; 0 disables.
  double grad_clip = 0.0;
};

/// Bias-corrected Adam over a module's named parameters. Parameters without
/// a gradient in a step are left untouched.
class Adam {
 public:
  struct Moments {
    Tensor m;
    Tensor v;
  };

  Adam(nn::Module& module, AdamOptions options);

  /// Applies one update from the current gradients and returns the
  /// pre-clip global gradient norm.
  double step();

  int64_t steps() const { return steps_; }
  const AdamOptions& options() const { return options_; }
  const std::map<std::string, Moments>& state() const { return state_; }

  /// Replaces the optimizer state, e.g. from a checkpoint. Throws
  /// std::invalid_argument if names or shapes disagree with the module.
  void restore(int64_t steps, std::map<std::string, Moments> state);

 private:
  std::vector<std::pair<std::string, Var>> params_;
  AdamOptions options_;
  int64_t steps_ = 0;
  std::map<std::string, Moments> state_;
};

}  // namespace recnet
