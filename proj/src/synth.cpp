#include "recnet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "recnet/color.hpp"

namespace recnet {

namespace {

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i) k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  const double s = std::accumulate(k.begin(), k.end(), 0.0);
  for (double& v : k) v /= s;
  return k;
}

double uniform(Rng& rng, std::pair<double, double> range) {
  return std::uniform_real_distribution<double>(range.first, range.second)(rng);
}

}  // namespace

Tensor gaussian_blur(const Tensor& x, double sigma) {
  require_nhwc(x, "gaussian_blur");
  if (sigma <= 0.0) return x;
  const std::vector<double> k = gaussian_kernel(sigma);
  const int64_t r = static_cast<int64_t>(k.size() / 2);
  const int64_t B = x.batch(), H = x.height(), W = x.width(), C = x.channels();
  Tensor tmp(x.shape()), out(x.shape());
  for (int64_t n = 0; n < B; ++n)
    for (int64_t y = 0; y < H; ++y)
      for (int64_t xx = 0; xx < W; ++xx)
        for (int64_t c = 0; c < C; ++c) {
          double s = 0.0;
          for (int64_t i = -r; i <= r; ++i) s += k[i + r] * x.at(n, y, std::clamp<int64_t>(xx + i, 0, W - 1), c);
          tmp.at(n, y, xx, c) = s;
        }
  for (int64_t n = 0; n < B; ++n)
    for (int64_t y = 0; y < H; ++y)
      for (int64_t xx = 0; xx < W; ++xx)
        for (int64_t c = 0; c < C; ++c) {
          double s = 0.0;
          for (int64_t i = -r; i <= r; ++i) s += k[i + r] * tmp.at(n, std::clamp<int64_t>(y + i, 0, H - 1), xx, c);
          out.at(n, y, xx, c) = s;
        }
  return out;
}

Tensor make_clean_scene(int64_t height, int64_t width, uint64_t seed, double lo, double hi) {
  if (height < 1 || width < 1) throw std::invalid_argument("make_clean_scene: empty size");
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor img(Shape{1, height, width, 3});
  double base[3], gx = 0.3 * u(rng) - 0.15, gy = 0.3 * u(rng) - 0.15;
  for (double& b : base) b = lo + 0.15 + (hi - lo) * 0.45 * u(rng);
  for (int64_t y = 0; y < height; ++y)
    for (int64_t x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(0, y, x, c) = base[c] + gx * x / double(width) + gy * y / double(height);

  for (int disc = 0; disc < 3; ++disc) {
    const double cx = 0.2 + 0.6 * u(rng), cy = 0.2 + 0.6 * u(rng), rad = 0.08 + 0.12 * u(rng);
    double tint[3];
    for (double& t : tint) t = 0.24 * u(rng) - 0.12;
    for (int64_t y = 0; y < height; ++y)
      for (int64_t x = 0; x < width; ++x) {
        const double dx = x / double(width) - cx, dy = y / double(height) - cy;
        if (dx * dx + dy * dy < rad * rad)
          for (int c = 0; c < 3; ++c) img.at(0, y, x, c) += tint[c];
      }
  }

  Tensor texture(Shape{1, height, width, 1});
  std::normal_distribution<double> noise(0.0, 0.08);
  for (int64_t i = 0; i < texture.numel(); ++i) texture[i] = noise(rng);
  texture = gaussian_blur(texture, 1.5);
  for (int64_t p = 0; p < texture.numel(); ++p)
    for (int c = 0; c < 3; ++c) img[3 * p + c] = std::clamp(img[3 * p + c] + texture[p], lo, hi);
  return img;
}

void DegradationSpec::validate() const {
  if (params.size() < 2 || params.size() > 4) {
    throw std::invalid_argument("degradation spec needs 2 to 4 regions, got " + std::to_string(params.size()));
  }
  for (double p : params) {
    const bool ok = curve == Curve::Gain ? (p >= 0.3 && p <= 3.0) : (p >= 0.4 && p <= 2.5);
    if (!ok) {
      throw std::invalid_argument("degradation parameter " + std::to_string(p) + " outside " +
                                  (curve == Curve::Gain ? "[0.3, 3.0]" : "[0.4, 2.5]"));
    }
  }
  if (noise_std < 0.0) throw std::invalid_argument("noise_std must be non-negative");
  if (feather < 0.0) throw std::invalid_argument("feather must be non-negative");
  if (require_mixed) {
    bool up = false, down = false;
    for (size_t r = 0; r < params.size(); ++r) {
      up = up || brightens(r);
      down = down || darkens(r);
    }
    if (!up || !down) {
      throw std::invalid_argument("degradation spec is not mixed exposure: need one brightening and one darkening region (" +
                                  describe() + ")");
    }
  }
}

bool DegradationSpec::brightens(size_t region) const {
  return curve == Curve::Gain ? params.at(region) > 1.0 : params.at(region) < 1.0;
}

bool DegradationSpec::darkens(size_t region) const {
  return curve == Curve::Gain ? params.at(region) < 1.0 : params.at(region) > 1.0;
}

DegradationSpec DegradationSpec::identity() {
  DegradationSpec s;
  s.layout = Layout::Columns;
  s.params = {1.0, 1.0};
  s.require_mixed = false;
  return s;
}

DegradationSpec DegradationSpec::columns(std::vector<double> gains) {
  DegradationSpec s;
  s.layout = Layout::Columns;
  s.params = std::move(gains);
  return s;
}

std::string DegradationSpec::describe() const {
  std::ostringstream os;
  os << "layout=" << (layout == Layout::Blobs ? "blobs" : "columns") << " curve=" << (curve == Curve::Gain ? "gain" : "gamma")
     << " params=";
  for (size_t i = 0; i < params.size(); ++i) os << (i ? "," : "") << params[i];
  os << " noise_std=" << noise_std << " feather=" << feather;
  return os.str();
}

DegradationSpec random_spec(Rng& rng, const RandomSpecOptions& o) {
  DegradationSpec s;
  s.curve = std::bernoulli_distribution(o.gamma_probability)(rng) ? DegradationSpec::Curve::Gamma
                                                                  : DegradationSpec::Curve::Gain;
  s.noise_std = o.noise_std;
  const int n = std::uniform_int_distribution<int>(o.min_regions, o.max_regions)(rng);
  std::vector<bool> over(n);
  over[0] = true;
  over[1] = false;
  for (int r = 2; r < n; ++r) over[r] = std::bernoulli_distribution(0.5)(rng);
  std::shuffle(over.begin(), over.end(), rng);
  const bool gain = s.curve == DegradationSpec::Curve::Gain;
  for (int r = 0; r < n; ++r) {
    s.params.push_back(over[r] ? uniform(rng, gain ? o.over_gain : o.over_gamma)
                               : uniform(rng, gain ? o.under_gain : o.under_gamma));
  }
  s.validate();
  return s;
}

PairedSample make_sample(Tensor input, Tensor gt, std::string id) {
  PairedSample s;
  s.gt_mask = brighter_mask(input, gt);
  s.input = std::move(input);
  s.gt = std::move(gt);
  s.id = std::move(id);
  return s;
}

Tensor region_weights(const DegradationSpec& spec, int64_t height, int64_t width, uint64_t seed) {
  const auto regions = static_cast<int64_t>(spec.params.size());
  Tensor labels(Shape{1, height, width, regions});
  if (spec.layout == DegradationSpec::Layout::Columns) {
    for (int64_t y = 0; y < height; ++y)
      for (int64_t x = 0; x < width; ++x) labels.at(0, y, x, x * regions / width) = 1.0;
  } else {
    // Each region owns the pixels where its smoothed noise field is largest.
    Rng rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    Tensor fields(Shape{1, height, width, regions});
    for (int64_t i = 0; i < fields.numel(); ++i) fields[i] = g(rng);
    fields = gaussian_blur(fields, std::min(height, width) / 6.0);
    for (int64_t p = 0; p < height * width; ++p) {
      int64_t best = 0;
      for (int64_t r = 1; r < regions; ++r)
        if (fields[p * regions + r] > fields[p * regions + best]) best = r;
      labels[p * regions + best] = 1.0;
    }
  }
  return gaussian_blur(labels, spec.feather * static_cast<double>(std::min(height, width)));
}

PairedSample synthesize_pair(const Tensor& clean, const DegradationSpec& spec, uint64_t seed, std::string id) {
  spec.validate();
  if (clean.rank() != 4 || clean.batch() != 1 || clean.channels() != 3) {
    throw std::invalid_argument("synthesize_pair: expected (1,H,W,3), got " + shape_str(clean.shape()));
  }
  const int64_t H = clean.height(), W = clean.width();
  const auto regions = static_cast<int64_t>(spec.params.size());
  const Tensor w = region_weights(spec, H, W, seed);

  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> noise(0.0, spec.noise_std > 0.0 ? spec.noise_std : 1.0);
  Tensor input(clean.shape());
  for (int64_t p = 0; p < H * W; ++p) {
    // Gains blend in the log domain, gammas linearly.
    double mix = 0.0;
    for (int64_t r = 0; r < regions; ++r) {
      const double v = spec.params[static_cast<size_t>(r)];
      mix += w[p * regions + r] * (spec.curve == DegradationSpec::Curve::Gain ? std::log(v) : v);
    }
    for (int c = 0; c < 3; ++c) {
      const double x = clean[3 * p + c];
      double y = spec.curve == DegradationSpec::Curve::Gain ? std::exp(mix) * x : std::pow(x, mix);
      if (spec.noise_std > 0.0) y += noise(rng);
      input[3 * p + c] = std::clamp(y, 0.0, 1.0);
    }
  }
  return make_sample(std::move(input), clean, std::move(id));
}

}  // namespace recnet
