#include <algorithm>
#include <array>
#include <cmath>

#include "recnet/curve.hpp"

namespace recnet {

namespace {

using Rgb = std::array<double, 3>;

struct Canvas {
  Tensor img;
  int size;
  int margin;

  explicit Canvas(int s) : img(Shape{1, s, s, 3}, 1.0), size(s), margin(s / 10) {}

  int span() const { return size - 2 * margin; }
  int px(double x) const { return margin + static_cast<int>(std::lround(std::clamp(x, 0.0, 1.0) * span())); }
  int py(double y) const { return size - 1 - margin - static_cast<int>(std::lround(std::clamp(y, 0.0, 1.0) * span())); }

  void set(int x, int y, const Rgb& c) {
    if (x < 0 || y < 0 || x >= size || y >= size) return;
    for (int k = 0; k < 3; ++k) img.at(0, y, x, k) = c[k];
  }
  void line(double x0, double y0, double x1, double y1, const Rgb& c) {
    const int ax = px(x0), ay = py(y0), bx = px(x1), by = py(y1);
    const int steps = std::max({std::abs(bx - ax), std::abs(by - ay), 1});
    for (int i = 0; i <= steps; ++i) {
      const double t = static_cast<double>(i) / steps;
      set(static_cast<int>(std::lround(ax + t * (bx - ax))), static_cast<int>(std::lround(ay + t * (by - ay))), c);
    }
  }
};

}  // namespace

Tensor render_curve_plot(const BrightnessCurve& curve, int size) {
  Canvas cv(size);
  const Rgb axis{0.0, 0.0, 0.0}, diag{0.6, 0.6, 0.6}, band{0.75, 0.85, 1.0}, med{0.05, 0.2, 0.7};

  // IQR band as filled vertical spans per bin.
  for (const auto& b : curve.bins) {
    if (b.count == 0) continue;
    for (int x = cv.px(b.lo); x <= cv.px(b.hi); ++x)
      for (int y = cv.py(b.q75); y <= cv.py(b.q25); ++y) cv.set(x, y, band);
  }
  cv.line(0, 0, 1, 0, axis);
  cv.line(0, 0, 0, 1, axis);
  cv.line(0, 0, 1, 1, diag);
  // Median polyline; gaps break it.
  const CurveBin* prev = nullptr;
  for (const auto& b : curve.bins) {
    if (b.count == 0) {
      prev = nullptr;
      continue;
    }
    const double xc = 0.5 * (b.lo + b.hi);
    if (prev) cv.line(0.5 * (prev->lo + prev->hi), prev->median, xc, b.median, med);
    cv.set(cv.px(xc), cv.py(b.median), med);
    prev = &b;
  }
  return cv.img;
}

}  // namespace recnet
