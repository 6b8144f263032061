#pragma once

#include <string>
#include <vector>

#include "recnet/model.hpp"
#include "recnet/perceptual.hpp"

namespace recnet::losses {

struct LossWeights {
  double mse = 1.0;
  double cos = 1.0;
  double bce = 0.25;
  double ecr = 0.1;
};

/// Which side of the ground-truth brightness mask the predictor is trained
/// to output. The gt mask marks pixels where the input is brighter than the
/// target; the predictor's output is an underexposure mask, so by default it
/// is supervised against the complement.
enum class MaskPolarity { Underexposed, Overexposed };

MaskPolarity parse_polarity(const std::string& s);
std::string polarity_name(MaskPolarity p);

/// Mean squared error over all elements.
Var mse_loss(const Var& out, const Var& gt);

/// 1 - mean over pixels of cos(out_rgb, gt_rgb); norms are floored at 1e-8.
Var cosine_color_loss(const Var& out, const Var& gt);

/// 1 where luma(input) > luma(gt), else 0. Shape (B,H,W,1).
Tensor compute_gt_mask(const Tensor& input, const Tensor& gt);

/// The BCE target for a gt mask under the given polarity.
Tensor mask_target(const Tensor& gt_mask, MaskPolarity polarity);

inline constexpr double kBceEpsilon = 1e-7;

/// Mean binary cross entropy of every predicted mask against `target`,
/// averaged over masks. Predictions are clamped to [eps, 1 - eps].
Var bce_mask_loss(const std::vector<Var>& masks, const Tensor& target);

/// (over, under) = (img * (1 - mask_u), img * mask_u).
RegionSplit extract_regions(const Var& img, const Var& mask_under);

/// Per-sample cross-Gram (1 / positions) * H_over^T H_under, shape (B,C,C).
Var style_correlation(const Var& h_over, const Var& h_under);

struct EcrOptions {
  double epsilon = 1e-7;
  /// Stop the contrastive term from back-propagating into the mask.
  bool detach_mask = true;
};

/// Exposure contrastive regularization. The same mask splits the output, the
/// ground truth (positive) and the input (negative); each region's features
/// are pulled toward the positive and away from the negative, and so is the
/// cross-region style correlation. Value in [0, 3).
Var ecr_loss(const PerceptualExtractor& extractor, const Var& out, const Tensor& input, const Tensor& gt,
             const Var& mask_under, const EcrOptions& options = {});

struct LossBreakdown {
  double mse = 0.0;
  double cos = 0.0;
  double bce = 0.0;
  double ecr = 0.0;
  double total = 0.0;
};

struct TotalLoss {
  Var total;
  LossBreakdown breakdown;
};

/// Weighted sum of the four components. `ecr` may be undefined, meaning the
/// term is not evaluated (its weight must then be zero).
TotalLoss total_loss(const Var& mse, const Var& cos, const Var& bce, const Var& ecr, const LossWeights& weights);

}  // namespace recnet::losses
