#include "recnet/config.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace recnet {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& v) {
  Int out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"lr", "Adam learning rate"},
      {"beta1", "Adam first-moment decay"},
      {"beta2", "Adam second-moment decay"},
      {"adam_eps", "Adam denominator epsilon"},
      {"grad_clip", "global gradient-norm clip, 0 = off"},
      {"batch", "crops per step"},
      {"crop", "square crop side in pixels"},
      {"flips", "random joint horizontal/vertical flips"},
      {"max_steps", "optimizer steps"},
      {"seed", "seed for weights and batch sampling"},
      {"lambda_mse", "weight of the MSE term"},
      {"lambda_cos", "weight of the cosine colour term"},
      {"lambda_bce", "weight of the mask BCE term"},
      {"lambda_ecr", "weight of the exposure contrastive term"},
      {"mask_polarity", "BCE target: underexposed (1 - M_gt) or overexposed (M_gt)"},
      {"ecr_detach_mask", "stop ECR gradients at the mask"},
      {"perceptual_layer", "relu1_2, relu2_2 or relu3_3"},
      {"vgg_weights", "perceptual weights archive (tools/fetch_vgg16.py)"},
      {"vgg_sha256", "expected SHA-256 of vgg_weights, empty = unchecked"},
      {"num_blocks", "number of region-mixed blocks"},
      {"base_channels", "feature width"},
      {"attn_heads", "channel-attention heads"},
      {"checkpoint_every", "steps between checkpoints, 0 = only at the end"},
      {"eval_every", "steps between validation passes, 0 = only at the end"},
      {"train_input_dir", "training inputs"},
      {"train_gt_dir", "training ground truth"},
      {"val_input_dir", "validation inputs, empty = use the training set"},
      {"val_gt_dir", "validation ground truth"},
      {"out_dir", "log, checkpoints and config copy"},
      {"resume", "checkpoint to continue from"},
      {"flush_denormals", "flush subnormal floats to zero while training"},
  };
  return keys;
}

void TrainConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (key == "lr") lr = parse_double(key, v);
  else if (key == "beta1") beta1 = parse_double(key, v);
  else if (key == "beta2") beta2 = parse_double(key, v);
  else if (key == "adam_eps") adam_eps = parse_double(key, v);
  else if (key == "grad_clip") grad_clip = parse_double(key, v);
  else if (key == "batch") batch = parse_int<int64_t>(key, v);
  else if (key == "crop") crop = parse_int<int64_t>(key, v);
  else if (key == "flips") flips = parse_bool(key, v);
  else if (key == "max_steps") max_steps = parse_int<int64_t>(key, v);
  else if (key == "seed") seed = parse_int<uint64_t>(key, v);
  else if (key == "lambda_mse") weights.mse = parse_double(key, v);
  else if (key == "lambda_cos") weights.cos = parse_double(key, v);
  else if (key == "lambda_bce") weights.bce = parse_double(key, v);
  else if (key == "lambda_ecr") weights.ecr = parse_double(key, v);
  else if (key == "mask_polarity") {
    try {
      mask_polarity = losses::parse_polarity(v);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  } else if (key == "ecr_detach_mask") ecr_detach_mask = parse_bool(key, v);
  else if (key == "perceptual_layer") perceptual_layer = v;
  else if (key == "vgg_weights") vgg_weights = v;
  else if (key == "vgg_sha256") vgg_sha256 = v;
  else if (key == "num_blocks") model.num_blocks = parse_int<int>(key, v);
  else if (key == "base_channels") model.base_channels = parse_int<int>(key, v);
  else if (key == "attn_heads") model.attn_heads = parse_int<int>(key, v);
  else if (key == "checkpoint_every") checkpoint_every = parse_int<int64_t>(key, v);
  else if (key == "eval_every") eval_every = parse_int<int64_t>(key, v);
  else if (key == "train_input_dir") train_input_dir = v;
  else if (key == "train_gt_dir") train_gt_dir = v;
  else if (key == "val_input_dir") val_input_dir = v;
  else if (key == "val_gt_dir") val_gt_dir = v;
  else if (key == "out_dir") out_dir = v;
  else if (key == "resume") resume = v;
  else if (key == "flush_denormals") flush_denormals = parse_bool(key, v);
  else throw ConfigError("unknown config key '" + key + "'");
}

void TrainConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not of the form key=value");
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

void TrainConfig::validate() const {
  model.validate();
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(lr > 0.0, "lr must be positive");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "Adam betas must lie in [0, 1)");
  require(adam_eps > 0.0, "adam_eps must be positive");
  require(grad_clip >= 0.0, "grad_clip must be non-negative");
  require(batch >= 1, "batch must be at least 1");
  require(crop >= kMinImageSide, "crop must be at least " + std::to_string(kMinImageSide));
  require(max_steps >= 0, "max_steps must be non-negative");
  require(weights.mse >= 0 && weights.cos >= 0 && weights.bce >= 0 && weights.ecr >= 0, "loss weights must be non-negative");
  require(checkpoint_every >= 0 && eval_every >= 0, "checkpoint_every and eval_every must be non-negative");
  try {
    PerceptualExtractor::parse_layer(perceptual_layer);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  const auto b = [](bool v) { return v ? "true" : "false"; };
  os << "lr = " << lr << "\nbeta1 = " << beta1 << "\nbeta2 = " << beta2 << "\nadam_eps = " << adam_eps
     << "\ngrad_clip = " << grad_clip << "\nbatch = " << batch << "\ncrop = " << crop << "\nflips = " << b(flips)
     << "\nmax_steps = " << max_steps << "\nseed = " << seed << "\nlambda_mse = " << weights.mse
     << "\nlambda_cos = " << weights.cos << "\nlambda_bce = " << weights.bce << "\nlambda_ecr = " << weights.ecr
     << "\nmask_polarity = " << losses::polarity_name(mask_polarity) << "\necr_detach_mask = " << b(ecr_detach_mask)
     << "\nperceptual_layer = " << perceptual_layer << "\nvgg_weights = " << vgg_weights
     << "\nvgg_sha256 = " << vgg_sha256 << "\nnum_blocks = " << model.num_blocks
     << "\nbase_channels = " << model.base_channels << "\nattn_heads = " << model.attn_heads
     << "\ncheckpoint_every = " << checkpoint_every << "\neval_every = " << eval_every
     << "\ntrain_input_dir = " << train_input_dir << "\ntrain_gt_dir = " << train_gt_dir
     << "\nval_input_dir = " << val_input_dir << "\nval_gt_dir = " << val_gt_dir << "\nout_dir = " << out_dir
     << "\nresume = " << resume << "\nflush_denormals = " << b(flush_denormals) << '\n';
  return os.str();
}

TrainConfig TrainConfig::from_text(const std::string& text, const std::string& origin) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    try {
      cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

TrainConfig TrainConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str(), path.string());
}

}  // namespace recnet
