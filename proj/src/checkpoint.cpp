#include "recnet/checkpoint.hpp"

namespace recnet {

namespace {

constexpr const char* kKind = "recnet-checkpoint";

std::string meta(const Archive& ar, const std::string& key) {
  try {
    return ar.meta_at(key);
  } catch (const FormatError& e) {
    throw CheckpointError(e.what());
  }
}

int64_t meta_int(const Archive& ar, const std::string& key) {
  const std::string v = meta(ar, key);
  try {
    return std::stoll(v);
  } catch (const std::exception&) {
    throw CheckpointError("checkpoint field " + key + " is not an integer: '" + v + "'");
  }
}

std::string describe(const ModelConfig& c) {
  return "num_blocks=" + std::to_string(c.num_blocks) + " base_channels=" + std::to_string(c.base_channels) +
         " attn_heads=" + std::to_string(c.attn_heads);
}

}  // namespace

Checkpoint capture_checkpoint(RecNet& model, const Adam* optimizer, int64_t step) {
  Checkpoint c;
  c.model = model.config();
  c.step = step;
  for (auto& [name, p] : model.named_parameters()) c.weights[name] = p.value();
  if (optimizer) {
    c.has_optimizer = true;
    c.optimizer_steps = optimizer->steps();
    c.moments = optimizer->state();
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  Archive ar;
  ar.meta["kind"] = kKind;
  ar.meta["checkpoint_version"] = std::to_string(kCheckpointVersion);
  ar.meta["num_blocks"] = std::to_string(c.model.num_blocks);
  ar.meta["base_channels"] = std::to_string(c.model.base_channels);
  ar.meta["attn_heads"] = std::to_string(c.model.attn_heads);
  ar.meta["step"] = std::to_string(c.step);
  ar.meta["train_config"] = c.train_config;
  ar.meta["best_step"] = std::to_string(c.best_step);
  ar.arrays["meta/best_psnr"] = Tensor(Shape{1}, c.best_psnr);
  ar.meta["has_optimizer"] = c.has_optimizer ? "1" : "0";
  ar.meta["optimizer_steps"] = std::to_string(c.optimizer_steps);
  for (const auto& [name, t] : c.weights) ar.arrays["param/" + name] = t;
  for (const auto& [name, m] : c.moments) {
    ar.arrays["adam_m/" + name] = m.m;
    ar.arrays["adam_v/" + name] = m.v;
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  ar.save(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Archive ar;
  try {
    ar = Archive::load(path);
  } catch (const std::exception& e) {
    throw CheckpointError("cannot load checkpoint " + path.string() + ": " + e.what());
  }
  if (meta(ar, "kind") != kKind) throw CheckpointError(path.string() + " is not a model checkpoint");
  const int64_t version = meta_int(ar, "checkpoint_version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint " + path.string() + " has version " + std::to_string(version) +
                          ", this build reads version " + std::to_string(kCheckpointVersion));
  }
  Checkpoint c;
  c.model.num_blocks = static_cast<int>(meta_int(ar, "num_blocks"));
  c.model.base_channels = static_cast<int>(meta_int(ar, "base_channels"));
  c.model.attn_heads = static_cast<int>(meta_int(ar, "attn_heads"));
  try {
    c.model.validate();
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint holds an invalid model config: ") + e.what());
  }
  c.step = meta_int(ar, "step");
  c.train_config = meta(ar, "train_config");
  c.best_step = meta_int(ar, "best_step");
  c.has_optimizer = meta(ar, "has_optimizer") == "1";
  c.optimizer_steps = meta_int(ar, "optimizer_steps");
  for (auto& [key, t] : ar.arrays) {
    const auto slash = key.find('/');
    const std::string group = key.substr(0, slash), name = key.substr(slash + 1);
    if (group == "param") c.weights[name] = std::move(t);
    else if (group == "adam_m") c.moments[name].m = std::move(t);
    else if (group == "adam_v") c.moments[name].v = std::move(t);
    else if (key == "meta/best_psnr") c.best_psnr = t[0];
  }
  return c;
}

void restore_weights(RecNet& model, const Checkpoint& c) {
  if (!(c.model == model.config())) {
    throw CheckpointError("checkpoint model config (" + describe(c.model) + ") does not match the model (" +
                          describe(model.config()) + ")");
  }
  auto params = model.named_parameters();
  if (params.size() != c.weights.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(c.weights.size()) + " tensors, the model has " +
                          std::to_string(params.size()));
  }
  for (const auto& [name, p] : params) {
    auto it = c.weights.find(name);
    if (it == c.weights.end()) throw CheckpointError("checkpoint lacks " + name);
    if (it->second.shape() != p.shape()) {
      throw CheckpointError("checkpoint tensor " + name + " has shape " + shape_str(it->second.shape()) +
                            ", expected " + shape_str(p.shape()));
    }
  }
  for (auto& [name, p] : params) p.mutable_value() = c.weights.at(name);
}

RecNet load_model(const std::filesystem::path& path) {
  Checkpoint c = load_checkpoint(path);
  RecNet model(c.model, 0);
  restore_weights(model, c);
  return model;
}

}  // namespace recnet
