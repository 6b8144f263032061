#include "recnet/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "recnet/color.hpp"
#include "recnet/ops.hpp"

namespace recnet::losses {

MaskPolarity parse_polarity(const std::string& s) {
  if (s == "underexposed") return MaskPolarity::Underexposed;
  if (s == "overexposed") return MaskPolarity::Overexposed;
  throw std::invalid_argument("mask_polarity must be 'underexposed' or 'overexposed', got '" + s + "'");
}

std::string polarity_name(MaskPolarity p) {
  return p == MaskPolarity::Underexposed ? "underexposed" : "overexposed";
}

Var mse_loss(const Var& out, const Var& gt) {
  require_same_shape(out.value(), gt.value(), "mse_loss");
  return ops::mse(out, gt);
}

Var cosine_color_loss(const Var& out, const Var& gt) {
  static constexpr double kNormFloor = 1e-8;
  const Tensor& a = out.value();
  const Tensor& b = gt.value();
  require_same_shape(a, b, "cosine_color_loss");
  require_nhwc(a, "cosine_color_loss");
  const int64_t c = a.channels();
  const int64_t pixels = a.numel() / c;
  double total = 0.0;
  for (int64_t p = 0; p < pixels; ++p) {
    double dot = 0.0, aa = 0.0, bb = 0.0;
    for (int64_t j = 0; j < c; ++j) {
      const double x = a[p * c + j], y = b[p * c + j];
      dot += x * y;
      aa += x * x;
      bb += y * y;
    }
    total += dot / (std::max(std::sqrt(aa), kNormFloor) * std::max(std::sqrt(bb), kNormFloor));
  }
  Tensor value(Shape{1}, 1.0 - total / static_cast<double>(pixels));
  return Var::from_op(std::move(value), {out, gt}, [a, b, c, pixels](const Tensor& g, std::vector<Tensor*>& grads) {
    const double scale = -g[0] / static_cast<double>(pixels);
    for (int64_t p = 0; p < pixels; ++p) {
      double dot = 0.0, aa = 0.0, bb = 0.0;
      for (int64_t j = 0; j < c; ++j) {
        const double x = a[p * c + j], y = b[p * c + j];
        dot += x * y;
        aa += x * x;
        bb += y * y;
      }
      const double na_raw = std::sqrt(aa), nb_raw = std::sqrt(bb);
      const double na = std::max(na_raw, kNormFloor), nb = std::max(nb_raw, kNormFloor);
      const double cosv = dot / (na * nb);
      // d cos / d a = b / (na nb) - cos * a / na^2, the second term only when the norm is not floored.
      const double ka = na_raw > kNormFloor ? cosv / (na * na) : 0.0;
      const double kb = nb_raw > kNormFloor ? cosv / (nb * nb) : 0.0;
      for (int64_t j = 0; j < c; ++j) {
        const double x = a[p * c + j], y = b[p * c + j];
        if (grads[0]) (*grads[0])[p * c + j] += scale * (y / (na * nb) - ka * x);
        if (grads[1]) (*grads[1])[p * c + j] += scale * (x / (na * nb) - kb * y);
      }
    }
  });
}

Tensor compute_gt_mask(const Tensor& input, const Tensor& gt) { return brighter_mask(input, gt); }

Tensor mask_target(const Tensor& gt_mask, MaskPolarity polarity) {
  if (polarity == MaskPolarity::Overexposed) return gt_mask;
  Tensor t(gt_mask.shape());
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = 1.0 - gt_mask[i];
  return t;
}

Var bce_mask_loss(const std::vector<Var>& masks, const Tensor& target) {
  if (masks.empty()) throw std::invalid_argument("bce_mask_loss: no masks");
  Var total;
  for (const Var& m : masks) {
    const Tensor& p = m.value();
    require_same_shape(p, target, "bce_mask_loss");
    const auto n = static_cast<double>(p.numel());
    double s = 0.0;
    for (int64_t i = 0; i < p.numel(); ++i) {
      const double q = std::clamp(p[i], kBceEpsilon, 1.0 - kBceEpsilon);
      s -= target[i] * std::log(q) + (1.0 - target[i]) * std::log(1.0 - q);
    }
    Var term = Var::from_op(Tensor(Shape{1}, s / n), {m}, [p, target, n](const Tensor& g, std::vector<Tensor*>& grads) {
      Tensor& gp = *grads[0];
      for (int64_t i = 0; i < p.numel(); ++i) {
        if (p[i] < kBceEpsilon || p[i] > 1.0 - kBceEpsilon) continue;
        gp[i] += g[0] * (-(target[i] / p[i]) + (1.0 - target[i]) / (1.0 - p[i])) / n;
      }
    });
    total = total.defined() ? ops::add(total, term) : term;
  }
  return ops::scale(total, 1.0 / static_cast<double>(masks.size()));
}

RegionSplit extract_regions(const Var& img, const Var& mask_under) { return split_regions(img, mask_under); }

Var style_correlation(const Var& h_over, const Var& h_under) { return ops::gram_cross(h_over, h_under); }

namespace {

Var contrast_ratio(const Var& anchor, const Var& positive, const Var& negative, double eps) {
  Var d_pos = ops::l1_mean(anchor, positive);
  Var d_neg = ops::l1_mean(anchor, negative);
  return ops::div(d_pos, ops::add_scalar(ops::add(d_pos, d_neg), eps));
}

}  // namespace

Var ecr_loss(const PerceptualExtractor& extractor, const Var& out, const Tensor& input, const Tensor& gt,
             const Var& mask_under, const EcrOptions& options) {
  require_same_shape(out.value(), input, "ecr_loss");
  require_same_shape(out.value(), gt, "ecr_loss");
  const Var mask = options.detach_mask ? mask_under.detach() : mask_under;

  RegionSplit r_out = extract_regions(out, mask);
  RegionSplit r_gt = extract_regions(Var(gt), mask);
  RegionSplit r_in = extract_regions(Var(input), mask);

  Var h_over = extractor.features(r_out.over);
  Var h_under = extractor.features(r_out.under);
  Var pos_over = extractor.features(r_gt.over);
  Var pos_under = extractor.features(r_gt.under);
  Var neg_over = extractor.features(r_in.over);
  Var neg_under = extractor.features(r_in.under);

  Var region_terms = ops::add(contrast_ratio(h_over, pos_over, neg_over, options.epsilon),
                              contrast_ratio(h_under, pos_under, neg_under, options.epsilon));
  Var style = contrast_ratio(style_correlation(h_over, h_under), style_correlation(pos_over, pos_under),
                             style_correlation(neg_over, neg_under), options.epsilon);
  return ops::add(region_terms, style);
}

TotalLoss total_loss(const Var& mse, const Var& cos, const Var& bce, const Var& ecr, const LossWeights& weights) {
  if (!ecr.defined() && weights.ecr != 0.0) {
    throw std::invalid_argument("total_loss: ecr weight is nonzero but the ecr term was not evaluated");
  }
  TotalLoss t;
  t.breakdown.mse = mse.value()[0];
  t.breakdown.cos = cos.value()[0];
  t.breakdown.bce = bce.value()[0];
  t.breakdown.ecr = ecr.defined() ? ecr.value()[0] : 0.0;
  Var total = ops::add(ops::scale(mse, weights.mse), ops::scale(cos, weights.cos));
  total = ops::add(total, ops::scale(bce, weights.bce));
  if (ecr.defined()) total = ops::add(total, ops::scale(ecr, weights.ecr));
  t.total = total;
  t.breakdown.total = total.value()[0];
  return t;
}

}  // namespace recnet::losses
