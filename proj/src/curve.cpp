#include "recnet/curve.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <stdexcept>

#include "recnet/color.hpp"

namespace recnet {

namespace {

// Linear-interpolated quantile of a sorted sample.
double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto i = static_cast<size_t>(std::floor(pos));
  const size_t j = std::min(i + 1, sorted.size() - 1);
  return sorted[i] + (pos - static_cast<double>(i)) * (sorted[j] - sorted[i]);
}

}  // namespace

BrightnessCurve brightness_mapping_curve(const std::vector<std::pair<Tensor, Tensor>>& pairs, int bins) {
  if (bins < 1) throw std::invalid_argument("brightness_mapping_curve: bins must be positive");
  if (pairs.empty()) throw std::invalid_argument("brightness_mapping_curve: no pairs");
  std::vector<std::vector<double>> xs(bins), ys(bins);
  for (const auto& [src, dst] : pairs) {
    const Tensor a = luma_image(src), b = luma_image(dst);
    require_same_shape(a, b, "brightness_mapping_curve");
    for (int64_t i = 0; i < a.numel(); ++i) {
      const double x = std::clamp(a[i], 0.0, 1.0);
      const int bin = std::min(bins - 1, static_cast<int>(x * bins));
      xs[bin].push_back(x);
      ys[bin].push_back(b[i]);
    }
  }
  BrightnessCurve c;
  double dev = 0.0;
  int filled = 0;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (int k = 0; k < bins; ++k) {
    CurveBin b;
    b.lo = static_cast<double>(k) / bins;
    b.hi = static_cast<double>(k + 1) / bins;
    b.count = static_cast<int64_t>(ys[k].size());
    if (b.count == 0) {
      b.x_median = b.median = b.q25 = b.q75 = nan;
    } else {
      std::sort(xs[k].begin(), xs[k].end());
      std::sort(ys[k].begin(), ys[k].end());
      b.x_median = quantile(xs[k], 0.5);
      b.median = quantile(ys[k], 0.5);
      b.q25 = quantile(ys[k], 0.25);
      b.q75 = quantile(ys[k], 0.75);
      dev += std::abs(b.median - b.x_median);
      ++filled;
    }
    c.bins.push_back(b);
  }
  c.area = dev / filled;
  return c;
}

void BrightnessCurve::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "bin_lo,bin_hi,count,x_median,median,q25,q75\n" << std::setprecision(8);
  for (const auto& b : bins) {
    out << b.lo << ',' << b.hi << ',' << b.count << ',';
    if (b.count == 0) {
      out << ",,,\n";  // gap
    } else {
      out << b.x_median << ',' << b.median << ',' << b.q25 << ',' << b.q75 << '\n';
    }
  }
}

}  // namespace recnet
