#include "recnet/model.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "recnet/ops.hpp"

namespace recnet {

using nn::join_name;

void ModelConfig::validate() const {
  if (num_blocks < 1 || num_blocks > 8) {
    throw ConfigError("num_blocks must be in [1, 8], got " + std::to_string(num_blocks));
  }
  if (base_channels < 1) throw ConfigError("base_channels must be positive");
  if (attn_heads < 1) throw ConfigError("attn_heads must be positive");
  if (base_channels % attn_heads != 0) {
    throw ConfigError("base_channels (" + std::to_string(base_channels) + ") must be divisible by attn_heads (" +
                      std::to_string(attn_heads) + ")");
  }
}

double ModelConfig::temperature() const { return std::sqrt(static_cast<double>(head_dim())); }

void validate_image(const Tensor& image, const char* what) {
  if (image.rank() != 4 || image.channels() != 3) {
    throw std::invalid_argument(std::string(what) + ": expected (batch,height,width,3), got " +
                                shape_str(image.shape()));
  }
  if (image.height() < kMinImageSide || image.width() < kMinImageSide) {
    throw std::invalid_argument(std::string(what) + ": images must be at least 8x8, got " +
                                shape_str(image.shape()));
  }
  for (double v : image.values()) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument(std::string(what) + ": values must be finite and in [0,1]");
  }
}

RegionSplit split_regions(const Var& features, const Var& mask_under) {
  const Tensor& f = features.value();
  const Tensor& m = mask_under.value();
  require_nhwc(f, "split_regions features");
  if (m.rank() != 4 || m.channels() != 1 || m.batch() != f.batch() || m.height() != f.height() ||
      m.width() != f.width()) {
    throw std::invalid_argument("split_regions: mask " + shape_str(m.shape()) + " not aligned with features " +
                                shape_str(f.shape()));
  }
  return {ops::mul(features, ops::one_minus(mask_under)), ops::mul(features, mask_under)};
}

// --- Stem ------------------------------------------------------------------

Stem::Stem(int channels, Rng& rng) : proj(3, channels, 1, rng) {}

Var Stem::operator()(const Var& image) const {
  validate_image(image.value(), "stem");
  return proj(image);
}

void Stem::visit_parameters(const std::string& prefix, const nn::ParamVisitor& fn) {
  proj.visit_parameters(join_name(prefix, "proj"), fn);
}

// --- ExposureMaskPredictor ---------------------------------------------------

namespace {
int reduced(int channels, int factor) { return std::max(1, channels / factor); }
}  // namespace

ExposureMaskPredictor::ExposureMaskPredictor(int channels, Rng& rng)
    : conv1(channels, reduced(channels, 2), 3, rng),
      conv2(reduced(channels, 2), reduced(channels, 4), 3, rng),
      conv3(reduced(channels, 4), reduced(channels, 4), 3, rng),
      logits(reduced(channels, 4), 1, 1, rng) {
  // Zero logits at init: every block starts from an uninformative 0.5 mask.
  logits.weight.mutable_value().fill(0.0);
}

Var ExposureMaskPredictor::operator()(const Var& features) const {
  Var h = ops::relu(conv1(features));
  h = ops::relu(conv2(h));
  h = ops::relu(conv3(h));
  return ops::sigmoid(logits(h));
}

void ExposureMaskPredictor::visit_parameters(const std::string& prefix, const nn::ParamVisitor& fn) {
  conv1.visit_parameters(join_name(prefix, "conv1"), fn);
  conv2.visit_parameters(join_name(prefix, "conv2"), fn);
  conv3.visit_parameters(join_name(prefix, "conv3"), fn);
  logits.visit_parameters(join_name(prefix, "logits"), fn);
}

// --- MaskAwareInstanceNorm ---------------------------------------------------

MaskAwareInstanceNorm::MaskAwareInstanceNorm(int channels, Rng& rng)
    : gate_over(3, 1, 3, rng),
      gate_under(3, 1, 3, rng),
      proj_over(2 * channels, channels, 1, rng),
      proj_under(2 * channels, channels, 1, rng) {}

Var MaskAwareInstanceNorm::region_gate(const nn::Conv2d& conv, const Var& region, const Var& region_mask) {
  Var pooled = ops::concat_channels({ops::channel_max(region), ops::channel_mean(region), region_mask});
  return ops::sigmoid(conv(pooled));
}

Var MaskAwareInstanceNorm::fuse(const Var& gated_over, const Var& gated_under, const Var& f_in) const {
  Var over = proj_over(ops::instance_norm(ops::concat_channels({gated_over, f_in}), kEpsilon));
  Var under = proj_under(ops::instance_norm(ops::concat_channels({gated_under, f_in}), kEpsilon));
  return ops::add(over, under);
}

Var MaskAwareInstanceNorm::operator()(const Var& f_over, const Var& f_under, const Var& f_in,
                                      const Var& mask_under) const {
  require_same_shape(f_over.value(), f_in.value(), "mask_aware_instance_norm");
  require_same_shape(f_under.value(), f_in.value(), "mask_aware_instance_norm");
  Var mask_over = ops::one_minus(mask_under);
  Var gated_over = ops::mul(f_over, region_gate(gate_over, f_over, mask_over));
  Var gated_under = ops::mul(f_under, region_gate(gate_under, f_under, mask_under));
  return fuse(gated_over, gated_under, f_in);
}

void MaskAwareInstanceNorm::visit_parameters(const std::string& prefix, const nn::ParamVisitor& fn) {
  gate_over.visit_parameters(join_name(prefix, "gate_over"), fn);
  gate_under.visit_parameters(join_name(prefix, "gate_under"), fn);
  proj_over.visit_parameters(join_name(prefix, "proj_over"), fn);
  proj_under.visit_parameters(join_name(prefix, "proj_under"), fn);
}

// --- MixedScaleSpatial -------------------------------------------------------

MixedScaleSpatial::MixedScaleSpatial(int channels, Rng& rng)
    : dw_small(channels, 3, rng),
      dw_large(channels, 5, rng),
      key_conv(2 * channels, channels, 3, rng),
      value_conv(2 * channels, channels, 5, rng),
      fuse(2 * channels, channels, 1, rng) {}

SpatialBranches MixedScaleSpatial::operator()(const Var& f_norm) const {
  SpatialBranches out;
  out.kv_small = ops::relu(dw_small(f_norm));
  out.kv_large = ops::relu(dw_large(f_norm));
  Var both = ops::concat_channels({out.kv_small, out.kv_large});
  out.key = ops::relu(key_conv(both));
  out.value = ops::relu(value_conv(both));
  out.fused = fuse(ops::concat_channels({out.key, out.value}));
  return out;
}

void MixedScaleSpatial::visit_parameters(const std::string& prefix, const nn::ParamVisitor& fn) {
  dw_small.visit_parameters(join_name(prefix, "dw_small"), fn);
  dw_large.visit_parameters(join_name(prefix, "dw_large"), fn);
  key_conv.visit_parameters(join_name(prefix, "key_conv"), fn);
  value_conv.visit_parameters(join_name(prefix, "value_conv"), fn);
  fuse.visit_parameters(join_name(prefix, "fuse"), fn);
}

// --- ChannelSelfAttention ----------------------------------------------------

ChannelSelfAttention::ChannelSelfAttention(int channels, int heads_, Rng& rng)
    : heads(heads_),
      temperature(std::sqrt(static_cast<double>(channels / heads_))),
      query_small(channels, channels, 3, rng),
      query_large(channels, channels, 5, rng),
      fuse(2 * channels, channels, 1, rng) {}

Var ChannelSelfAttention::operator()(const Var& f_in, const Var& kv_small, const Var& kv_large) const {
  Var q_small = ops::relu(query_small(f_in));
  Var q_large = ops::relu(query_large(f_in));
  Var a_small = ops::channel_attention(q_small, kv_small, kv_small, heads, temperature);
  Var a_large = ops::channel_attention(q_large, kv_large, kv_large, heads, temperature);
  return fuse(ops::concat_channels({a_small, a_large}));
}

void ChannelSelfAttention::visit_parameters(const std::string& prefix, const nn::ParamVisitor& fn) {
  query_small.visit_parameters(join_name(prefix, "query_small"), fn);
  query_large.visit_parameters(join_name(prefix, "query_large"), fn);
  fuse.visit_parameters(join_name(prefix, "fuse"), fn);
}

// --- RegionMixedBlock --------------------------------------------------------

RegionMixedBlock::RegionMixedBlock(const ModelConfig& cfg, Rng& rng)
    : emp(cfg.base_channels, rng),
      norm(cfg.base_channels, rng),
      spatial(cfg.base_channels, rng),
      attention(cfg.base_channels, cfg.attn_heads, rng),
      fuse(3 * cfg.base_channels, cfg.base_channels, 1, rng) {}

BlockOutput RegionMixedBlock::operator()(const Var& f_in) const {
  Var mask_under = emp(f_in);
  RegionSplit regions = split_regions(f_in, mask_under);
  Var f_norm = norm(regions.over, regions.under, f_in, mask_under);
  SpatialBranches s = spatial(f_norm);
  Var f_attn = attention(f_in, s.kv_small, s.kv_large);
  return {fuse(ops::concat_channels({f_norm, s.fused, f_attn})), mask_under};
}

void RegionMixedBlock::visit_parameters(const std::string& prefix, const nn::ParamVisitor& fn) {
  emp.visit_parameters(join_name(prefix, "emp"), fn);
  norm.visit_parameters(join_name(prefix, "norm"), fn);
  spatial.visit_parameters(join_name(prefix, "spatial"), fn);
  attention.visit_parameters(join_name(prefix, "attention"), fn);
  fuse.visit_parameters(join_name(prefix, "fuse"), fn);
}

// --- RefineBlock -------------------------------------------------------------

RefineBlock::RefineBlock(int channels, Rng& rng)
    : squeeze(channels, reduced(channels, kReduction), 1, rng), excite(reduced(channels, kReduction), channels, 1, rng) {}

Var RefineBlock::gates(const Var& f) const {
  return ops::sigmoid(excite(ops::relu(squeeze(ops::spatial_mean(f)))));
}

Var RefineBlock::operator()(const Var& f) const { return ops::add(ops::mul(f, gates(f)), f); }

void RefineBlock::visit_parameters(const std::string& prefix, const nn::ParamVisitor& fn) {
  squeeze.visit_parameters(join_name(prefix, "squeeze"), fn);
  excite.visit_parameters(join_name(prefix, "excite"), fn);
}

// --- RecNet ------------------------------------------------------------------

RecNet::RecNet(const ModelConfig& cfg, uint64_t seed) : config_(cfg) {
  cfg.validate();
  Rng rng(seed);
  stem = Stem(cfg.base_channels, rng);
  blocks.reserve(static_cast<size_t>(cfg.num_blocks));
  for (int i = 0; i < cfg.num_blocks; ++i) blocks.emplace_back(cfg, rng);
  refine = RefineBlock(cfg.base_channels, rng);
  head = nn::Conv2d(cfg.base_channels, 3, 1, rng);
  head.weight.mutable_value().fill(0.0);
}

ForwardResult RecNet::forward(const Var& image) const {
  ForwardResult result;
  Var f = stem(image);
  for (const RegionMixedBlock& block : blocks) {
    BlockOutput out = block(f);
    f = out.features;
    result.masks.push_back(out.mask_under);
  }
  f = refine(f);
  result.image = ops::clamp(ops::add(head(f), image), 0.0, 1.0);
  return result;
}

void RecNet::visit_parameters(const std::string& prefix, const nn::ParamVisitor& fn) {
  stem.visit_parameters(join_name(prefix, "stem"), fn);
  for (size_t i = 0; i < blocks.size(); ++i) {
    blocks[i].visit_parameters(join_name(prefix, "blocks." + std::to_string(i)), fn);
  }
  refine.visit_parameters(join_name(prefix, "refine"), fn);
  head.visit_parameters(join_name(prefix, "head"), fn);
}

std::vector<ModuleSize> RecNet::summary() {
  std::vector<ModuleSize> rows;
  rows.push_back({"stem", stem.parameter_count()});
  for (size_t i = 0; i < blocks.size(); ++i) {
    const std::string p = "blocks." + std::to_string(i) + ".";
    rows.push_back({p + "emp", blocks[i].emp.parameter_count()});
    rows.push_back({p + "norm", blocks[i].norm.parameter_count()});
    rows.push_back({p + "spatial", blocks[i].spatial.parameter_count()});
    rows.push_back({p + "attention", blocks[i].attention.parameter_count()});
    rows.push_back({p + "fuse", blocks[i].fuse.parameter_count()});
  }
  rows.push_back({"refine", refine.parameter_count()});
  rows.push_back({"head", head.parameter_count()});
  return rows;
}

RecNet RecNet::snapshot() {
  RecNet copy(config_, 0);
  auto mine = named_parameters();
  auto theirs = copy.named_parameters();
  for (size_t i = 0; i < mine.size(); ++i) theirs[i].second.mutable_value() = mine[i].second.value();
  return copy;
}

std::string format_summary(const std::vector<ModuleSize>& rows) {
  std::ostringstream os;
  size_t width = 6;
  int64_t total = 0;
  for (const auto& r : rows) width = std::max(width, r.name.size());
  for (const auto& r : rows) {
    os << std::left << std::setw(static_cast<int>(width)) << r.name << "  " << std::right << std::setw(10)
       << r.parameters << '\n';
    total += r.parameters;
  }
  os << std::string(width + 12, '-') << '\n';
  os << std::left << std::setw(static_cast<int>(width)) << "total" << "  " << std::right << std::setw(10) << total
     << '\n';
  return os.str();
}

}  // namespace recnet
