#pragma once

#include "recnet/tensor.hpp"

namespace recnet {

/// BT.601 full-range luma.
inline double luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

/// BT.601 full-range YCbCr with Cb and Cr offset by 0.5, so all three
/// channels stay in [0,1] for inputs in [0,1]. (B,H,W,3) -> (B,H,W,3).
Tensor rgb_to_ycbcr(const Tensor& rgb);

/// Luma plane of an RGB batch, (B,H,W,3) -> (B,H,W,1).
Tensor luma_image(const Tensor& rgb);

/// 1 where luma(a) > luma(b) strictly, else 0. (B,H,W,1).
Tensor brighter_mask(const Tensor& a, const Tensor& b);

}  // namespace recnet
