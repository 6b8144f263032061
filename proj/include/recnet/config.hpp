#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "recnet/losses.hpp"
#include "recnet/model.hpp"

namespace recnet {

/// Everything a training run needs. Loaded from a flat `key = value` file;
/// command-line `--set key=value` overrides are applied afterwards.
struct TrainConfig {
  // optimizer
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double adam_eps = 1e-8;
  /// Global gradient-norm clip; 0 disables.
  double grad_clip = 0.0;

  int64_t batch = 8;
  int64_t crop = 128;
  bool flips = true;
  int64_t max_steps = 1000;
  uint64_t seed = 0;

  losses::LossWeights weights;
  losses::MaskPolarity mask_polarity = losses::MaskPolarity::Underexposed;
  bool ecr_detach_mask = true;
  std::string perceptual_layer = "relu3_3";
  std::string vgg_weights;
  std::string vgg_sha256;

  ModelConfig model;

  int64_t checkpoint_every = 500;
  int64_t eval_every = 100;

  std::string train_input_dir;
  std::string train_gt_dir;
  std::string val_input_dir;
  std::string val_gt_dir;
  std::string out_dir = "runs/default";
  /// Checkpoint to continue from.
  std::string resume;

  bool flush_denormals = true;

  /// Throws ConfigError on out-of-range values.
  void validate() const;
  /// Sets one field from its text form. Throws ConfigError for unknown keys
  /// or unparsable values.
  void set(const std::string& key, const std::string& value);
  /// Applies "key=value".
  void apply_override(const std::string& assignment);
  /// Every key in file order, one `key = value` per line.
  std::string to_text() const;

  static TrainConfig from_file(const std::filesystem::path& path);
  static TrainConfig from_text(const std::string& text, const std::string& origin = "<text>");
};

struct ConfigKey {
  const char* name;
  const char* help;
};

/// Documented keys, in the order to_text() writes them.
const std::vector<ConfigKey>& config_keys();

}  // namespace recnet
