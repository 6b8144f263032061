#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "recnet/nn.hpp"
#include "recnet/tensor.hpp"

namespace recnet {

/// A clean procedural scene: a tinted gradient, a few flat discs and smooth
/// luma texture. (1,h,w,3), values in [lo, hi].
Tensor make_clean_scene(int64_t height, int64_t width, uint64_t seed, double lo = 0.05, double hi = 0.6);

/// How a clean image is turned into a mixed-exposure input.
struct DegradationSpec {
  enum class Layout { Blobs, Columns };
  enum class Curve { Gain, Gamma };

  Layout layout = Layout::Blobs;
  Curve curve = Curve::Gain;
  /// One value per region: I' = g * I for Gain, I' = I^g for Gamma.
  std::vector<double> params;
  double noise_std = 0.0;
  /// Gaussian feather sigma as a fraction of min(H, W).
  double feather = 0.05;
  /// Require at least one brightening and one darkening region.
  bool require_mixed = true;

  /// Throws std::invalid_argument on out-of-range values or, when
  /// require_mixed is set, a spec that is not mixed exposure.
  void validate() const;
  bool brightens(size_t region) const;
  bool darkens(size_t region) const;

  /// Two regions leaving the image unchanged.
  static DegradationSpec identity();
  /// Left/right halves with the given gains.
  static DegradationSpec columns(std::vector<double> gains);

  std::string describe() const;
};

struct RandomSpecOptions {
  int min_regions = 2;
  int max_regions = 4;
  std::pair<double, double> over_gain{1.5, 3.0};
  std::pair<double, double> under_gain{0.3, 0.67};
  std::pair<double, double> over_gamma{0.4, 0.8};
  std::pair<double, double> under_gamma{1.4, 2.5};
  /// Probability of drawing a gamma spec instead of a gain spec.
  double gamma_probability = 0.0;
  double noise_std = 0.0;
};

/// A random mixed-exposure blob spec. At least one region brightens and one
/// darkens.
DegradationSpec random_spec(Rng& rng, const RandomSpecOptions& options = {});

struct PairedSample {
  Tensor input;    // (1,H,W,3)
  Tensor gt;       // (1,H,W,3)
  Tensor gt_mask;  // (1,H,W,1), 1 where the input is brighter than gt
  std::string id;
};

/// Builds a sample from input and gt, computing the mask.
PairedSample make_sample(Tensor input, Tensor gt, std::string id);

/// Per-pixel region weights (1,H,W,regions) summing to 1, before applying
/// any curve. Deterministic in seed.
Tensor region_weights(const DegradationSpec& spec, int64_t height, int64_t width, uint64_t seed);

/// Degrades `clean` region-wise through feathered weights; gt = clean.
PairedSample synthesize_pair(const Tensor& clean, const DegradationSpec& spec, uint64_t seed, std::string id = "");

/// Separable Gaussian blur of every channel with clamp-to-edge borders.
/// Preserves per-pixel partitions of unity across channels.
Tensor gaussian_blur(const Tensor& x, double sigma);

}  // namespace recnet
