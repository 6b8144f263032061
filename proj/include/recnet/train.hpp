#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "recnet/adam.hpp"
#include "recnet/checkpoint.hpp"
#include "recnet/config.hpp"
#include "recnet/dataset.hpp"
#include "recnet/losses.hpp"

namespace recnet {

/// Raised when a step produces a non-finite loss.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(int64_t step, const losses::LossBreakdown& loss);
  int64_t step;
  losses::LossBreakdown loss;
};

struct StepLog {
  int64_t step = 0;  // 1-based index of the update this loss was computed for
  losses::LossBreakdown loss;
  double lr = 0.0;
  double grad_norm = 0.0;
};

struct TrainReport {
  int64_t start_step = 0;
  int64_t final_step = 0;
  double initial_val_psnr = 0.0;
  double best_val_psnr = 0.0;
  int64_t best_step = 0;
  std::vector<std::pair<int64_t, double>> val_history;
  std::vector<StepLog> log;
  std::string perceptual;  // extractor provenance, or "disabled"
};

/// Produces the batch for a given step.
using BatchSource = std::function<Batch(int64_t step)>;

/// Builds the loss for a forward pass. ECR uses the last block's mask and is
/// only evaluated when its weight is nonzero.
losses::TotalLoss compute_loss(const ForwardResult& fr, const Batch& batch, const TrainConfig& cfg,
                               const PerceptualExtractor* extractor);

/// 64-bit mix of a seed and a counter.
uint64_t mix_seed(uint64_t seed, uint64_t counter);

/// Owns the model and optimizer of one run.
class Trainer {
 public:
  /// `extractor` must be set when cfg.weights.ecr > 0.
  Trainer(const TrainConfig& cfg, BatchSource batches, std::optional<PerceptualExtractor> extractor = std::nullopt);

  /// One Adam update. Throws TrainingDiverged on a non-finite loss, before
  /// touching the weights.
  StepLog step();

  /// Mean PSNR of the model's output over full images, without gradients.
  double evaluate_psnr(const std::vector<PairedSample>& samples) const;

  Checkpoint checkpoint() { return capture_checkpoint(model_, &adam_, step_); }
  /// Restores weights, optimizer state and step counter.
  void resume(const Checkpoint& ckpt);

  RecNet& model() { return model_; }
  const RecNet& model() const { return model_; }
  Adam& optimizer() { return adam_; }
  int64_t current_step() const { return step_; }
  const TrainConfig& config() const { return cfg_; }
  const PerceptualExtractor* extractor() const { return extractor_ ? &*extractor_ : nullptr; }

 private:
  TrainConfig cfg_;
  BatchSource batches_;
  std::optional<PerceptualExtractor> extractor_;
  RecNet model_;
  Adam adam_;
  int64_t step_ = 0;
};

/// Loads the extractor the config asks for. Returns nullopt when
/// lambda_ecr is 0; throws ConfigError when it is positive and the weights
/// are missing or fail verification.
std::optional<PerceptualExtractor> load_perceptual(const TrainConfig& cfg);

/// The full run described by cfg: loads data, trains, validates every
/// eval_every steps, writes out_dir/{train_log.csv,config.txt,ckpt_*.rec,
/// last.rec,best.rec}. `progress` receives each step's log when set.
TrainReport train(const TrainConfig& cfg, const std::function<void(const std::string&)>& progress = {});

}  // namespace recnet
