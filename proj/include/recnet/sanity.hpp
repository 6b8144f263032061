#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "recnet/train.hpp"

namespace recnet {

/// Overfit harness: a handful of small synthetic pairs, full-batch Adam at
/// the standard hyperparameters, pass/fail on training PSNR and mask error.
struct SanityOptions {
  uint64_t seed = 0;
  int pairs = 4;
  int64_t size = 64;
  int64_t max_steps = 2000;
  /// Metrics are checked every this many steps; the run stops at the first
  /// check that meets both thresholds when early_stop is set.
  int64_t eval_every = 25;
  bool early_stop = true;
  double psnr_threshold = 30.0;
  double mask_threshold = 0.25;
  /// Reduced width and depth so a CPU run fits in minutes.
  ModelConfig model{2, 16, 4};
  losses::LossWeights weights{1.0, 1.0, 0.25, 0.0};
  /// Needed only when weights.ecr > 0.
  std::string vgg_weights;
  RandomSpecOptions degradation = default_degradation();
  /// Use input == gt pairs.
  bool identity = false;

  static RandomSpecOptions default_degradation();
};

struct SanityPoint {
  int64_t step = 0;
  double loss = 0.0;  // loss of the update that produced this state; 0 at step 0
  double psnr = 0.0;
  double mask_error = 0.0;
};

struct SanityReport {
  bool passed = false;
  int64_t steps = 0;
  double psnr = 0.0;
  double mask_error = 0.0;
  std::vector<SanityPoint> trace;
  std::vector<StepLog> losses;
  double seconds = 0.0;
  std::string summary() const;
};

/// The i-th synthetic pair of the harness distribution for a seed. Indices
/// below `pairs` form the training set; larger ones are held out.
PairedSample sanity_pair(const SanityOptions& options, int index);

std::vector<PairedSample> sanity_dataset(const SanityOptions& options);

/// Mean per-image PSNR and mean |last-block mask - target| over the samples.
std::pair<double, double> sanity_metrics(const RecNet& model, const std::vector<PairedSample>& samples,
                                         losses::MaskPolarity polarity);

/// Runs the harness. The trained model is left in `trained` when given.
SanityReport run_overfit_sanity(const SanityOptions& options, std::optional<RecNet>* trained = nullptr,
                                const std::function<void(const SanityPoint&)>& progress = {});

}  // namespace recnet
