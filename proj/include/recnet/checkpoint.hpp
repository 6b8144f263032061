#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

#include "recnet/adam.hpp"
#include "recnet/archive.hpp"
#include "recnet/model.hpp"

namespace recnet {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kCheckpointVersion = 1;

/// Model weights plus (optionally) optimizer state and the step counter.
struct Checkpoint {
  ModelConfig model;
  int64_t step = 0;
  /// TrainConfig::to_text() of the run that wrote it, or empty.
  std::string train_config;
  double best_psnr = 0.0;
  int64_t best_step = -1;
  std::map<std::string, Tensor> weights;
  bool has_optimizer = false;
  int64_t optimizer_steps = 0;
  std::map<std::string, Adam::Moments> moments;
};

/// Snapshot of a model (and optimizer when given).
Checkpoint capture_checkpoint(RecNet& model, const Adam* optimizer, int64_t step);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

/// Throws CheckpointError for unreadable, truncated, corrupted or
/// wrong-version files.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies weights into `model`. Throws CheckpointError when the stored model
/// config differs or any tensor name or shape disagrees; the model is left
/// untouched in that case.
void restore_weights(RecNet& model, const Checkpoint& ckpt);

/// Loads a checkpoint and builds the model it describes.
RecNet load_model(const std::filesystem::path& path);

}  // namespace recnet
