#include "recnet/train.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "recnet/fpenv.hpp"
#include "recnet/metrics.hpp"

namespace fs = std::filesystem;

namespace recnet {

namespace {

std::string format_breakdown(const losses::LossBreakdown& b) {
  std::ostringstream os;
  os << std::setprecision(10) << "total=" << b.total << " mse=" << b.mse << " cos=" << b.cos << " bce=" << b.bce
     << " ecr=" << b.ecr;
  return os.str();
}

bool finite(const losses::LossBreakdown& b) {
  return std::isfinite(b.total) && std::isfinite(b.mse) && std::isfinite(b.cos) && std::isfinite(b.bce) &&
         std::isfinite(b.ecr);
}

}  // namespace

TrainingDiverged::TrainingDiverged(int64_t s, const losses::LossBreakdown& l)
    : std::runtime_error("non-finite loss at step " + std::to_string(s) + ": " + format_breakdown(l)), step(s), loss(l) {}

uint64_t mix_seed(uint64_t seed, uint64_t counter) {
  // splitmix64 finalizer over the combined state
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (counter + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

losses::TotalLoss compute_loss(const ForwardResult& fr, const Batch& batch, const TrainConfig& cfg,
                               const PerceptualExtractor* extractor) {
  const Var gt(batch.gt);
  Var mse = losses::mse_loss(fr.image, gt);
  Var cos = losses::cosine_color_loss(fr.image, gt);
  Var bce = losses::bce_mask_loss(fr.masks, losses::mask_target(batch.gt_mask, cfg.mask_polarity));
  Var ecr;
  if (cfg.weights.ecr != 0.0) {
    if (!extractor) throw ConfigError("lambda_ecr > 0 but no perceptual extractor is loaded");
    ecr = losses::ecr_loss(*extractor, fr.image, batch.input, batch.gt, fr.masks.back(),
                           {.epsilon = 1e-7, .detach_mask = cfg.ecr_detach_mask});
  }
  return losses::total_loss(mse, cos, bce, ecr, cfg.weights);
}

Trainer::Trainer(const TrainConfig& cfg, BatchSource batches, std::optional<PerceptualExtractor> extractor)
    : cfg_(cfg),
      batches_(std::move(batches)),
      extractor_(std::move(extractor)),
      model_((cfg.validate(), cfg.model), cfg.seed),
      adam_(model_, {cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.grad_clip}) {
  if (cfg_.weights.ecr > 0.0 && !extractor_) {
    throw ConfigError("lambda_ecr > 0 requires perceptual weights; set vgg_weights or lambda_ecr = 0");
  }
}

StepLog Trainer::step() {
  FlushDenormalsGuard ftz(cfg_.flush_denormals);
  const Batch batch = batches_(step_);
  model_.zero_grad();
  ForwardResult fr = model_.forward(Var(batch.input));
  losses::TotalLoss loss = compute_loss(fr, batch, cfg_, extractor());
  if (!finite(loss.breakdown)) throw TrainingDiverged(step_ + 1, loss.breakdown);
  loss.total.backward();
  StepLog log;
  log.grad_norm = adam_.step();
  ++step_;
  log.step = step_;
  log.loss = loss.breakdown;
  log.lr = cfg_.lr;
  return log;
}

double Trainer::evaluate_psnr(const std::vector<PairedSample>& samples) const {
  if (samples.empty()) return 0.0;
  FlushDenormalsGuard ftz(cfg_.flush_denormals);
  NoGradGuard no_grad;
  double total = 0.0;
  for (const auto& s : samples) total += psnr(model_.forward(s.input).image.value(), s.gt);
  return total / static_cast<double>(samples.size());
}

void Trainer::resume(const Checkpoint& ckpt) {
  restore_weights(model_, ckpt);
  if (ckpt.has_optimizer) {
    try {
      adam_.restore(ckpt.optimizer_steps, ckpt.moments);
    } catch (const std::invalid_argument& e) {
      throw CheckpointError(e.what());
    }
  }
  step_ = ckpt.step;
}

std::optional<PerceptualExtractor> load_perceptual(const TrainConfig& cfg) {
  if (cfg.weights.ecr == 0.0) return std::nullopt;
  if (cfg.vgg_weights.empty()) {
    throw ConfigError("lambda_ecr = " + std::to_string(cfg.weights.ecr) +
                      " needs perceptual weights: set vgg_weights (see tools/fetch_vgg16.py) or lambda_ecr = 0");
  }
  try {
    return PerceptualExtractor::load(cfg.vgg_weights, PerceptualExtractor::parse_layer(cfg.perceptual_layer),
                                     cfg.vgg_sha256);
  } catch (const WeightsUnavailable& e) {
    throw ConfigError(e.what());
  }
}

TrainReport train(const TrainConfig& cfg, const std::function<void(const std::string&)>& progress) {
  cfg.validate();
  auto say = [&](const std::string& s) {
    if (progress) progress(s);
  };
  if (cfg.train_input_dir.empty() || cfg.train_gt_dir.empty()) {
    throw ConfigError("train_input_dir and train_gt_dir must be set");
  }
  std::optional<PerceptualExtractor> extractor = load_perceptual(cfg);

  auto train_data = std::make_shared<PairedDataset>(load_paired_dir(cfg.train_input_dir, cfg.train_gt_dir));
  for (const auto& w : train_data->warnings) say("warning: " + w);
  PairedDataset val_data;
  if (!cfg.val_input_dir.empty()) {
    val_data = load_paired_dir(cfg.val_input_dir, cfg.val_gt_dir);
    for (const auto& w : val_data.warnings) say("warning: " + w);
  } else {
    say("no validation set configured; validating on the training images");
    val_data = *train_data;
  }
  if (train_data->empty()) throw ConfigError("training set is empty after skipping invalid pairs");

  const TrainConfig c = cfg;
  Trainer trainer(cfg, [train_data, c](int64_t step) {
    return random_crop_batch(*train_data, c.crop, c.batch, mix_seed(c.seed, static_cast<uint64_t>(step)), c.flips);
  }, std::move(extractor));

  const fs::path out(cfg.out_dir);
  fs::create_directories(out);
  {
    std::ofstream cf(out / "config.txt");
    cf << cfg.to_text();
  }

  TrainReport report;
  report.perceptual = trainer.extractor() ? trainer.extractor()->provenance() : "disabled";
  if (!cfg.resume.empty()) {
    Checkpoint ck = load_checkpoint(cfg.resume);
    trainer.resume(ck);
    report.best_val_psnr = ck.best_psnr;
    report.best_step = ck.best_step;
    say("resumed from " + cfg.resume + " at step " + std::to_string(ck.step));
  }
  report.start_step = trainer.current_step();

  const fs::path log_path = out / "train_log.csv";
  const bool fresh = !fs::exists(log_path) || cfg.resume.empty();
  std::ofstream log(log_path, fresh ? std::ios::trunc : std::ios::app);
  if (fresh) log << "step,total,mse,cos,bce,ecr,lr\n";
  log << std::setprecision(10);

  const double initial = trainer.evaluate_psnr(val_data.samples);
  report.initial_val_psnr = initial;
  report.val_history.emplace_back(trainer.current_step(), initial);
  if (cfg.resume.empty() || initial > report.best_val_psnr) {
    report.best_val_psnr = initial;
    report.best_step = trainer.current_step();
  }
  say("step " + std::to_string(trainer.current_step()) + " val_psnr " + std::to_string(initial));

  auto save = [&](const fs::path& p) {
    Checkpoint ck = trainer.checkpoint();
    ck.train_config = cfg.to_text();
    ck.best_psnr = report.best_val_psnr;
    ck.best_step = report.best_step;
    save_checkpoint(p, ck);
  };

  while (trainer.current_step() < cfg.max_steps) {
    StepLog s = trainer.step();
    report.log.push_back(s);
    log << s.step << ',' << s.loss.total << ',' << s.loss.mse << ',' << s.loss.cos << ',' << s.loss.bce << ','
        << s.loss.ecr << ',' << s.lr << '\n';
    const bool last = s.step == cfg.max_steps;
    if ((cfg.eval_every > 0 && s.step % cfg.eval_every == 0) || last) {
      const double v = trainer.evaluate_psnr(val_data.samples);
      report.val_history.emplace_back(s.step, v);
      say("step " + std::to_string(s.step) + " loss " + std::to_string(s.loss.total) + " val_psnr " + std::to_string(v));
      if (v > report.best_val_psnr) {
        report.best_val_psnr = v;
        report.best_step = s.step;
        save(out / "best.rec");
      }
    }
    if ((cfg.checkpoint_every > 0 && s.step % cfg.checkpoint_every == 0) || last) {
      log.flush();
      save(out / ("ckpt_" + std::to_string(s.step) + ".rec"));
    }
  }
  save(out / "last.rec");
  report.final_step = trainer.current_step();
  return report;
}

}  // namespace recnet
