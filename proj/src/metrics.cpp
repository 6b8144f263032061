#include "recnet/metrics.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "recnet/color.hpp"

namespace recnet {

double psnr(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "psnr");
  if (a.numel() == 0) throw std::invalid_argument("psnr: empty tensors");
  double s = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  const double mse = s / static_cast<double>(a.numel());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

namespace {

Tensor to_luma(const Tensor& t) {
  require_nhwc(t, "ssim");
  if (t.channels() == 1) return t;
  if (t.channels() == 3) return luma_image(t);
  throw std::invalid_argument("ssim: expected 1 or 3 channels, got " + shape_str(t.shape()));
}

// Valid-mode separable filtering of a single (H,W) plane.
std::vector<double> filter_valid(const double* src, int64_t H, int64_t W, const std::vector<double>& k) {
  const auto n = static_cast<int64_t>(k.size());
  const int64_t oh = H - n + 1, ow = W - n + 1;
  std::vector<double> rows(static_cast<size_t>(H * ow)), out(static_cast<size_t>(oh * ow));
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int64_t i = 0; i < n; ++i) s += k[i] * src[y * W + x + i];
      rows[y * ow + x] = s;
    }
  for (int64_t y = 0; y < oh; ++y)
    for (int64_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int64_t i = 0; i < n; ++i) s += k[i] * rows[(y + i) * ow + x];
      out[y * ow + x] = s;
    }
  return out;
}

}  // namespace

double ssim(const Tensor& a_rgb, const Tensor& b_rgb, const SsimOptions& o) {
  require_same_shape(a_rgb, b_rgb, "ssim");
  const Tensor a = to_luma(a_rgb), b = to_luma(b_rgb);
  const int64_t H = a.height(), W = a.width();
  if (H < o.window || W < o.window) {
    throw std::invalid_argument("ssim: image " + std::to_string(H) + "x" + std::to_string(W) + " smaller than the " +
                                std::to_string(o.window) + "x" + std::to_string(o.window) + " window");
  }
  std::vector<double> k(static_cast<size_t>(o.window));
  const double c = (o.window - 1) / 2.0;
  double ks = 0.0;
  for (int i = 0; i < o.window; ++i) ks += k[i] = std::exp(-0.5 * (i - c) * (i - c) / (o.sigma * o.sigma));
  for (double& v : k) v /= ks;
  const double c1 = o.k1 * o.k1, c2 = o.k2 * o.k2;

  double total = 0.0;
  int64_t count = 0;
  const int64_t plane = H * W;
  std::vector<double> aa(plane), bb(plane), ab(plane);
  for (int64_t n = 0; n < a.batch(); ++n) {
    const double* pa = a.data() + n * plane;
    const double* pb = b.data() + n * plane;
    for (int64_t i = 0; i < plane; ++i) {
      aa[i] = pa[i] * pa[i];
      bb[i] = pb[i] * pb[i];
      ab[i] = pa[i] * pb[i];
    }
    const auto mu_a = filter_valid(pa, H, W, k), mu_b = filter_valid(pb, H, W, k);
    const auto e_aa = filter_valid(aa.data(), H, W, k), e_bb = filter_valid(bb.data(), H, W, k);
    const auto e_ab = filter_valid(ab.data(), H, W, k);
    for (size_t i = 0; i < mu_a.size(); ++i) {
      const double ma = mu_a[i], mb = mu_b[i];
      const double va = e_aa[i] - ma * ma, vb = e_bb[i] - mb * mb, cov = e_ab[i] - ma * mb;
      total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

void MetricReport::add(ImageMetrics m) {
  images.push_back(std::move(m));
  double sp = 0.0, ss = 0.0;
  for (const auto& i : images) {
    sp += i.psnr;
    ss += i.ssim;
  }
  mean_psnr = sp / static_cast<double>(images.size());
  mean_ssim = ss / static_cast<double>(images.size());
}

void MetricReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "name,psnr,ssim\n" << std::setprecision(10);
  for (const auto& i : images) out << i.name << ',' << i.psnr << ',' << i.ssim << '\n';
}

std::string MetricReport::summary() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << "images: " << images.size() << "\nmean_psnr: " << mean_psnr
     << "\nmean_ssim: " << mean_ssim << '\n';
  return os.str();
}

}  // namespace recnet
