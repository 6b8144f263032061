#include "recnet/sanity.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "recnet/fpenv.hpp"
#include "recnet/metrics.hpp"

namespace recnet {

RandomSpecOptions SanityOptions::default_degradation() {
  RandomSpecOptions o;
  o.min_regions = 2;
  o.max_regions = 3;
  o.over_gain = {1.5, 1.9};
  o.under_gain = {0.35, 0.6};
  return o;
}

PairedSample sanity_pair(const SanityOptions& o, int index) {
  const uint64_t s = mix_seed(o.seed, static_cast<uint64_t>(index));
  Tensor clean = make_clean_scene(o.size, o.size, s);
  const std::string id = "pair" + std::to_string(index);
  if (o.identity) return make_sample(clean, clean, id);
  Rng rng(mix_seed(s, 1));
  return synthesize_pair(clean, random_spec(rng, o.degradation), mix_seed(s, 2), id);
}

std::vector<PairedSample> sanity_dataset(const SanityOptions& o) {
  std::vector<PairedSample> out;
  for (int i = 0; i < o.pairs; ++i) out.push_back(sanity_pair(o, i));
  return out;
}

std::pair<double, double> sanity_metrics(const RecNet& model, const std::vector<PairedSample>& samples,
                                         losses::MaskPolarity polarity) {
  FlushDenormalsGuard ftz;
  NoGradGuard no_grad;
  double p = 0.0, m = 0.0;
  for (const auto& s : samples) {
    ForwardResult fr = model.forward(s.input);
    p += psnr(fr.image.value(), s.gt);
    const Tensor target = losses::mask_target(s.gt_mask, polarity);
    const Tensor& pred = fr.masks.back().value();
    double e = 0.0;
    for (int64_t i = 0; i < pred.numel(); ++i) e += std::abs(pred[i] - target[i]);
    m += e / static_cast<double>(pred.numel());
  }
  const auto n = static_cast<double>(samples.size());
  return {p / n, m / n};
}

std::string SanityReport::summary() const {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(3);
  os << (passed ? "PASS" : "FAIL") << " steps=" << steps << " psnr=" << psnr << "dB mask_error=" << mask_error
     << " time=" << seconds << "s";
  return os.str();
}

SanityReport run_overfit_sanity(const SanityOptions& o, std::optional<RecNet>* trained,
                                const std::function<void(const SanityPoint&)>& progress) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<PairedSample> data = sanity_dataset(o);
  std::vector<Tensor> ins, gts, masks;
  for (const auto& s : data) {
    ins.push_back(s.input);
    gts.push_back(s.gt);
    masks.push_back(s.gt_mask);
  }
  const Batch full{stack_batch(ins), stack_batch(gts), stack_batch(masks)};

  TrainConfig cfg;
  cfg.model = o.model;
  cfg.seed = o.seed;
  cfg.weights = o.weights;
  cfg.batch = o.pairs;
  cfg.crop = o.size;
  cfg.flips = false;
  cfg.max_steps = o.max_steps;
  cfg.vgg_weights = o.vgg_weights;
  Trainer trainer(cfg, [full](int64_t) { return full; }, load_perceptual(cfg));

  SanityReport r;
  auto check = [&](double loss) {
    const auto [p, m] = sanity_metrics(trainer.model(), data, cfg.mask_polarity);
    SanityPoint pt{trainer.current_step(), loss, p, m};
    r.trace.push_back(pt);
    if (progress) progress(pt);
    r.psnr = p;
    r.mask_error = m;
    r.steps = pt.step;
    r.passed = p > o.psnr_threshold && m < o.mask_threshold;
  };
  check(0.0);
  while (trainer.current_step() < o.max_steps && !(o.early_stop && r.passed)) {
    StepLog s = trainer.step();
    r.losses.push_back(s);
    if (s.step % o.eval_every == 0 || s.step == o.max_steps) check(s.loss.total);
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (trained) trained->emplace(trainer.model().snapshot());
  return r;
}

}  // namespace recnet
