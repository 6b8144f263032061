#pragma once

#include <filesystem>
#include <utility>
#include <vector>

#include "recnet/tensor.hpp"

namespace recnet {

struct CurveBin {
  double lo = 0.0, hi = 0.0;  // luma range of the source image
  int64_t count = 0;          // 0 marks a gap; the statistics below are NaN
  double x_median = 0.0;      // median source luma inside the bin
  double median = 0.0;        // median target luma
  double q25 = 0.0, q75 = 0.0;
};

/// Distribution of target luma per source-luma bin, pooled over all pairs.
struct BrightnessCurve {
  std::vector<CurveBin> bins;
  /// Mean |median - x_median| over non-empty bins: the gap between the
  /// median curve and the identity diagonal. 0 for identical pairs.
  double area = 0.0;

  void write_csv(const std::filesystem::path& path) const;
};

/// Pairs are (source, target) RGB tensors of matching shape.
BrightnessCurve brightness_mapping_curve(const std::vector<std::pair<Tensor, Tensor>>& pairs, int bins = 64);

/// Renders the curve with the identity diagonal, median line and IQR band.
/// Returns a (1,size,size,3) image.
Tensor render_curve_plot(const BrightnessCurve& curve, int size = 320);

}  // namespace recnet
