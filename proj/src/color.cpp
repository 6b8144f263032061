#include "recnet/color.hpp"

#include <stdexcept>

namespace recnet {

namespace {

void require_rgb(const Tensor& t, const char* what) {
  if (t.rank() != 4 || t.channels() != 3) {
    throw std::invalid_argument(std::string(what) + ": expected (B,H,W,3), got " + shape_str(t.shape()));
  }
}

}  // namespace

Tensor rgb_to_ycbcr(const Tensor& rgb) {
  require_rgb(rgb, "rgb_to_ycbcr");
  Tensor out(rgb.shape());
  for (int64_t p = 0; p < rgb.numel() / 3; ++p) {
    const double r = rgb[3 * p], g = rgb[3 * p + 1], b = rgb[3 * p + 2];
    out[3 * p] = luma(r, g, b);
    out[3 * p + 1] = 0.5 - 0.168736 * r - 0.331264 * g + 0.5 * b;
    out[3 * p + 2] = 0.5 + 0.5 * r - 0.418688 * g - 0.081312 * b;
  }
  return out;
}

Tensor luma_image(const Tensor& rgb) {
  require_rgb(rgb, "luma_image");
  Tensor out(Shape{rgb.batch(), rgb.height(), rgb.width(), 1});
  for (int64_t p = 0; p < out.numel(); ++p) out[p] = luma(rgb[3 * p], rgb[3 * p + 1], rgb[3 * p + 2]);
  return out;
}

Tensor brighter_mask(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "brighter_mask");
  require_rgb(a, "brighter_mask");
  Tensor mask(Shape{a.batch(), a.height(), a.width(), 1});
  for (int64_t p = 0; p < mask.numel(); ++p) {
    const double ya = luma(a[3 * p], a[3 * p + 1], a[3 * p + 2]);
    const double yb = luma(b[3 * p], b[3 * p + 1], b[3 * p + 2]);
    mask[p] = ya - yb > 0.0 ? 1.0 : 0.0;
  }
  return mask;
}

}  // namespace recnet
