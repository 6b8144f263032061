#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "recnet/nn.hpp"

namespace recnet {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Smallest accepted image side; 5x5 kernels need this much support.
inline constexpr int64_t kMinImageSide = 8;

struct ModelConfig {
  int num_blocks = 5;
  int base_channels = 32;
  int attn_heads = 4;

  /// Throws ConfigError unless 1 <= num_blocks <= 8 and heads divide channels.
  void validate() const;
  int head_dim() const { return base_channels / attn_heads; }
  /// Softmax temperature sqrt(head_dim).
  double temperature() const;

  bool operator==(const ModelConfig&) const = default;
};

/// Checks the image contract: (B,H,W,3), H and W >= 8, finite, in [0,1].
void validate_image(const Tensor& image, const char* what = "image");

struct RegionSplit {
  Var over;   // f_in * (1 - mask_u)
  Var under;  // f_in * mask_u
};

/// Splits features by the underexposure mask (B,H,W,1), broadcast over channels.
RegionSplit split_regions(const Var& features, const Var& mask_under);

/// 1x1 projection from RGB into feature space.
class Stem final : public nn::Module {
 public:
  Stem() = default;
  Stem(int channels, Rng& rng);
  Var operator()(const Var& image) const;
  void visit_parameters(const std::string& prefix, const nn::ParamVisitor& fn) override;

  nn::Conv2d proj;
};

/// Conv-ReLU stack (C -> C/2 -> C/4 -> C/4) followed by a 1x1 conv and a
/// sigmoid. Output is the soft underexposure mask, 1 = underexposed. The
/// 1x1 logits conv starts at zero, so an untrained mask is 0.5 everywhere.
class ExposureMaskPredictor final : public nn::Module {
 public:
  ExposureMaskPredictor() = default;
  ExposureMaskPredictor(int channels, Rng& rng);
  Var operator()(const Var& features) const;
  void visit_parameters(const std::string& prefix, const nn::ParamVisitor& fn) override;

  nn::Conv2d conv1, conv2, conv3, logits;
};

/// Mask-aware instance normalization. Each exposure region is re-weighted by a
/// spatial gate computed from its channelwise max, channelwise mean and its
/// mask, then instance-normalized together with the unsplit input and
/// projected back to C channels; the two region branches are summed.
class MaskAwareInstanceNorm final : public nn::Module {
 public:
  MaskAwareInstanceNorm() = default;
  MaskAwareInstanceNorm(int channels, Rng& rng);

  Var operator()(const Var& f_over, const Var& f_under, const Var& f_in, const Var& mask_under) const;

  /// sigmoid(conv3x3([max_c(f), mean_c(f), mask])), shape (B,H,W,1).
  static Var region_gate(const nn::Conv2d& conv, const Var& region, const Var& region_mask);
  /// proj_over(IN([gated_over, f_in])) + proj_under(IN([gated_under, f_in])).
  Var fuse(const Var& gated_over, const Var& gated_under, const Var& f_in) const;

  void visit_parameters(const std::string& prefix, const nn::ParamVisitor& fn) override;

  static constexpr double kEpsilon = 1e-5;
  nn::Conv2d gate_over, gate_under;  // 3 -> 1, 3x3
  nn::Conv2d proj_over, proj_under;  // 2C -> C, 1x1
};

struct SpatialBranches {
  Var kv_small;  // relu(dw3x3(f_n))
  Var kv_large;  // relu(dw5x5(f_n))
  Var key;       // relu(conv3x3([kv_small, kv_large]))
  Var value;     // relu(conv5x5([kv_small, kv_large]))
  Var fused;     // conv1x1([key, value])
};

/// Depthwise 3x3 / 5x5 feature extraction and the spatial restoration path.
class MixedScaleSpatial final : public nn::Module {
 public:
  MixedScaleSpatial() = default;
  MixedScaleSpatial(int channels, Rng& rng);
  SpatialBranches operator()(const Var& f_norm) const;
  void visit_parameters(const std::string& prefix, const nn::ParamVisitor& fn) override;

  nn::DepthwiseConv2d dw_small, dw_large;
  nn::Conv2d key_conv, value_conv, fuse;
};

/// Dual channel-wise self-attention: queries come from the block input at two
/// scales, keys and values from the matching depthwise branch.
class ChannelSelfAttention final : public nn::Module {
 public:
  ChannelSelfAttention() = default;
  ChannelSelfAttention(int channels, int heads, Rng& rng);

  Var operator()(const Var& f_in, const Var& kv_small, const Var& kv_large) const;
  void visit_parameters(const std::string& prefix, const nn::ParamVisitor& fn) override;

  int heads = 1;
  double temperature = 1.0;
  nn::Conv2d query_small, query_large;  // 3x3, 5x5
  nn::Conv2d fuse;                      // 2C -> C
};

struct BlockOutput {
  Var features;
  Var mask_under;
};

/// One de-exposure + restoration block.
class RegionMixedBlock final : public nn::Module {
 public:
  RegionMixedBlock() = default;
  RegionMixedBlock(const ModelConfig& cfg, Rng& rng);
  BlockOutput operator()(const Var& f_in) const;
  void visit_parameters(const std::string& prefix, const nn::ParamVisitor& fn) override;

  ExposureMaskPredictor emp;
  MaskAwareInstanceNorm norm;
  MixedScaleSpatial spatial;
  ChannelSelfAttention attention;
  nn::Conv2d fuse;  // 3C -> C over [f_n, f_s, f_c]
};

/// Squeeze-and-excitation with a residual: f + f * gate(mean_hw(f)).
class RefineBlock final : public nn::Module {
 public:
  static constexpr int kReduction = 8;

  RefineBlock() = default;
  RefineBlock(int channels, Rng& rng);
  Var operator()(const Var& f) const;
  /// Channel gates, shape (B,1,1,C).
  Var gates(const Var& f) const;
  void visit_parameters(const std::string& prefix, const nn::ParamVisitor& fn) override;

  nn::Conv2d squeeze, excite;
};

struct ForwardResult {
  Var image;               // corrected image, clamped to [0,1]
  std::vector<Var> masks;  // underexposure mask of every block, in order
};

struct ModuleSize {
  std::string name;
  int64_t parameters;
};

class RecNet final : public nn::Module {
 public:
  RecNet(const ModelConfig& cfg, uint64_t seed);

  ForwardResult forward(const Var& image) const;
  ForwardResult forward(const Tensor& image) const { return forward(Var(image)); }

  const ModelConfig& config() const { return config_; }
  void visit_parameters(const std::string& prefix, const nn::ParamVisitor& fn) override;

  /// Per-submodule parameter counts in declaration order.
  std::vector<ModuleSize> summary();
  /// Deep copy of the weights, for evaluation alongside a running trainer.
  RecNet snapshot();

  Stem stem;
  std::vector<RegionMixedBlock> blocks;
  RefineBlock refine;
  nn::Conv2d head;  // C -> 3, zero-initialized

 private:
  ModelConfig config_;
};

std::string format_summary(const std::vector<ModuleSize>& rows);

}  // namespace recnet
