#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include "recnet/image_io.hpp"
#include "recnet/metrics.hpp"
#include "recnet/ops.hpp"
#include "recnet/sanity.hpp"
#include "recnet/train.hpp"
#include "testing.hpp"

namespace recnet {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("recnet_test_training_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

SanityOptions tiny_data_options() {
  SanityOptions o;
  o.seed = 3;
  o.pairs = 3;
  o.size = 32;
  return o;
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.model = {2, 8, 2};
  c.batch = 2;
  c.crop = 24;
  c.weights.ecr = 0.0;
  c.lr = 1e-3;
  c.seed = 11;
  return c;
}

BatchSource crops_of(std::shared_ptr<PairedDataset> data, const TrainConfig& c) {
  return [data, c](int64_t step) {
    return random_crop_batch(*data, c.crop, c.batch, mix_seed(c.seed, static_cast<uint64_t>(step)), c.flips);
  };
}

std::shared_ptr<PairedDataset> tiny_dataset() {
  auto d = std::make_shared<PairedDataset>();
  d->samples = sanity_dataset(tiny_data_options());
  return d;
}

std::map<std::string, Tensor> weights_of(nn::Module& m) {
  std::map<std::string, Tensor> out;
  for (auto& [name, p] : m.named_parameters()) out[name] = p.value();
  return out;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::memcmp(a.values().data(), b.values().data(), sizeof(double) * a.numel()) == 0;
}

// A single learnable tensor, for checking optimizer arithmetic by hand.
struct OneParam final : nn::Module {
  explicit OneParam(Tensor init) : w(std::move(init), true) {}
  void visit_parameters(const std::string& prefix, const nn::ParamVisitor& fn) override {
    fn(nn::join_name(prefix, "w"), w);
  }
  Var w;
};

void set_grad(OneParam& m, const std::vector<double>& g) {
  m.zero_grad();
  Var y = ops::sum(ops::mul(m.w, Var(Tensor(m.w.shape(), g))));
  y.backward();
}

TEST(TrainConfig, DefaultsMatchTheTrainingRecipe) {
  const TrainConfig c;
  EXPECT_EQ(c.lr, 1e-4);
  EXPECT_EQ(c.beta1, 0.9);
  EXPECT_EQ(c.beta2, 0.99);
  EXPECT_EQ(c.batch, 8);
  EXPECT_EQ(c.weights.mse, 1.0);
  EXPECT_EQ(c.weights.cos, 1.0);
  EXPECT_EQ(c.weights.bce, 0.25);
  EXPECT_EQ(c.weights.ecr, 0.1);
  EXPECT_EQ(c.model.num_blocks, 5);
  EXPECT_EQ(c.model.base_channels, 32);
  EXPECT_NO_THROW(c.validate());
}

TEST(TrainConfig, ParsesOverridesAndRoundTrips) {
  TrainConfig c = TrainConfig::from_text("# comment\nlr = 2e-4\nbatch=4\n\nflips = false\nmask_polarity = overexposed\n");
  EXPECT_EQ(c.lr, 2e-4);
  EXPECT_EQ(c.batch, 4);
  EXPECT_FALSE(c.flips);
  EXPECT_EQ(c.mask_polarity, losses::MaskPolarity::Overexposed);
  c.apply_override("lambda_ecr=0.5");
  c.apply_override("num_blocks = 3");
  EXPECT_EQ(c.weights.ecr, 0.5);
  EXPECT_EQ(c.model.num_blocks, 3);

  const TrainConfig back = TrainConfig::from_text(c.to_text());
  EXPECT_EQ(back.to_text(), c.to_text());
  EXPECT_EQ(back.lr, c.lr);

  EXPECT_THROW(c.set("learning_rate", "1"), ConfigError);
  EXPECT_THROW(c.set("batch", "many"), ConfigError);
  EXPECT_THROW(c.apply_override("no_equals_sign"), ConfigError);
  EXPECT_THROW(TrainConfig::from_text("lr = 1\nbogus = 2\n"), ConfigError);
  EXPECT_THROW(TrainConfig::from_file("/nonexistent/recnet.cfg"), ConfigError);
}

TEST(TrainConfig, ValidationRejectsBadValues) {
  TrainConfig c;
  c.lr = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig();
  c.beta2 = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig();
  c.model.attn_heads = 5;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Adam, MatchesHandComputedSteps) {
  OneParam m(Tensor({2}, {1.0, -2.0}));
  Adam adam(m, {.lr = 0.1, .beta1 = 0.9, .beta2 = 0.99, .eps = 1e-8});
  set_grad(m, {0.5, -4.0});
  EXPECT_NEAR(adam.step(), std::sqrt(0.25 + 16.0), 1e-15);
  // First bias-corrected step moves each coordinate by lr * sign(g).
  EXPECT_NEAR(m.w.value()[0], 1.0 - 0.1 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_NEAR(m.w.value()[1], -2.0 + 0.1 * 4.0 / (4.0 + 1e-8), 1e-15);

  set_grad(m, {1.0, 0.0});
  adam.step();
  const double m1 = 0.9 * 0.05 + 0.1 * 1.0, v1 = 0.99 * 0.0025 + 0.01 * 1.0;
  const double expect = (1.0 - 0.1 * 0.5 / (0.5 + 1e-8)) -
                        0.1 * (m1 / (1 - 0.81)) / (std::sqrt(v1) / std::sqrt(1 - 0.9801) + 1e-8);
  EXPECT_NEAR(m.w.value()[0], expect, 1e-14);
  EXPECT_EQ(adam.steps(), 2);
}

TEST(Adam, ZeroGradientLeavesFreshParametersAlone) {
  OneParam m(Tensor({3}, {0.3, 0.2, 0.1}));
  Adam adam(m, {});
  set_grad(m, {0.0, 0.0, 0.0});
  adam.step();
  EXPECT_EQ(m.w.value()[0], 0.3);
  EXPECT_EQ(m.w.value()[2], 0.1);
}

TEST(Adam, ClipScalesTheGradient) {
  OneParam a(Tensor({2}, {0.0, 0.0})), b(Tensor({2}, {0.0, 0.0}));
  Adam clipped(a, {.lr = 0.1, .grad_clip = 1.0}), plain(b, {.lr = 0.1});
  set_grad(a, {30.0, 40.0});
  set_grad(b, {0.6, 0.8});
  EXPECT_NEAR(clipped.step(), 50.0, 1e-12);
  plain.step();
  EXPECT_NEAR(a.w.value()[0], b.w.value()[0], 1e-15);
  EXPECT_NEAR(a.w.value()[1], b.w.value()[1], 1e-15);
}

TEST(Adam, RestoreRejectsMismatchedState) {
  OneParam m(Tensor({2}));
  Adam adam(m, {});
  EXPECT_THROW(adam.restore(1, {}), std::invalid_argument);
  EXPECT_THROW(adam.restore(1, {{"w", {Tensor({3}), Tensor({3})}}}), std::invalid_argument);
  EXPECT_NO_THROW(adam.restore(4, {{"w", {Tensor({2}, 1.0), Tensor({2}, 2.0)}}}));
  EXPECT_EQ(adam.steps(), 4);
}

TEST(Trainer, AllZeroLossWeightsChangeNothing) {
  TrainConfig c = tiny_config();
  c.weights = {0.0, 0.0, 0.0, 0.0};
  Trainer t(c, crops_of(tiny_dataset(), c));
  const auto before = weights_of(t.model());
  for (int i = 0; i < 2; ++i) EXPECT_EQ(t.step().loss.total, 0.0);
  for (const auto& [name, w] : weights_of(t.model())) EXPECT_TRUE(bitwise_equal(w, before.at(name))) << name;
}

TEST(Trainer, EveryTensorMovesBySecondStep) {
  // The output head and mask logits start at zero, so the first update only
  // reaches them; from the second on every tensor has a gradient path.
  // Width 16 so the squeeze-excite bottleneck has more than one unit.
  TrainConfig c = tiny_config();
  c.model = {2, 16, 4};
  c.weights = losses::LossWeights{};
  c.crop = 32;
  Trainer t(c, crops_of(tiny_dataset(), c), PerceptualExtractor::with_random_weights(5));
  t.step();
  const auto before = weights_of(t.model());
  t.step();
  for (const auto& [name, w] : weights_of(t.model())) {
    double diff = 0.0;
    for (int64_t i = 0; i < w.numel(); ++i) diff += std::abs(w[i] - before.at(name)[i]);
    EXPECT_GT(diff, 0.0) << name;
  }
}

TEST(Trainer, ExtractorStaysFrozen) {
  TrainConfig c = tiny_config();
  c.weights.ecr = 0.1;
  c.crop = 32;
  Trainer t(c, crops_of(tiny_dataset(), c), PerceptualExtractor::with_random_weights(6, PerceptualExtractor::Layer::Relu2_2));
  std::vector<Tensor> before;
  for (const Tensor* w : t.extractor()->weights()) before.push_back(*w);
  for (int i = 0; i < 2; ++i) EXPECT_GT(t.step().loss.ecr, 0.0);
  const auto after = t.extractor()->weights();
  ASSERT_EQ(after.size(), before.size());
  for (size_t i = 0; i < after.size(); ++i) EXPECT_TRUE(bitwise_equal(*after[i], before[i]));
}

TEST(Trainer, RequiresExtractorForPositiveEcrWeight) {
  TrainConfig c = tiny_config();
  c.weights.ecr = 0.1;
  EXPECT_THROW(Trainer(c, crops_of(tiny_dataset(), c)), ConfigError);
  EXPECT_THROW(load_perceptual(c), ConfigError);
  c.vgg_weights = "/nonexistent/vgg16.rec";
  EXPECT_THROW(load_perceptual(c), ConfigError);
  c.weights.ecr = 0.0;
  EXPECT_FALSE(load_perceptual(c).has_value());
}

TEST(Trainer, NonFiniteLossThrowsBeforeUpdating) {
  TrainConfig c = tiny_config();
  auto data = tiny_dataset();
  Trainer t(c, [data, c](int64_t step) {
    Batch b = random_crop_batch(*data, c.crop, c.batch, step, false);
    b.gt[5] = std::numeric_limits<double>::quiet_NaN();
    return b;
  });
  const auto before = weights_of(t.model());
  try {
    t.step();
    FAIL() << "expected TrainingDiverged";
  } catch (const TrainingDiverged& e) {
    EXPECT_EQ(e.step, 1);
    EXPECT_FALSE(std::isfinite(e.loss.total));
  }
  EXPECT_EQ(t.current_step(), 0);
  for (const auto& [name, w] : weights_of(t.model())) EXPECT_TRUE(bitwise_equal(w, before.at(name))) << name;
}

TEST(Trainer, FixedSeedRunsAreBitwiseIdentical) {
  TrainConfig c = tiny_config();
  auto data = tiny_dataset();
  Trainer a(c, crops_of(data, c)), b(c, crops_of(data, c));
  for (int i = 0; i < 10; ++i) {
    const StepLog la = a.step(), lb = b.step();
    EXPECT_EQ(std::memcmp(&la.loss.total, &lb.loss.total, sizeof(double)), 0) << "step " << i;
    EXPECT_EQ(la.grad_norm, lb.grad_norm);
  }
  const auto wb = weights_of(b.model());
  for (const auto& [name, w] : weights_of(a.model())) EXPECT_TRUE(bitwise_equal(w, wb.at(name))) << name;
}

TEST(Checkpoint, RoundTripIsBitwise) {
  TrainConfig c = tiny_config();
  Trainer t(c, crops_of(tiny_dataset(), c));
  for (int i = 0; i < 3; ++i) t.step();
  const fs::path dir = scratch("roundtrip");
  Checkpoint ck = t.checkpoint();
  ck.train_config = c.to_text();
  ck.best_psnr = 21.5;
  ck.best_step = 2;
  save_checkpoint(dir / "a.rec", ck);

  const Checkpoint back = load_checkpoint(dir / "a.rec");
  EXPECT_EQ(back.step, 3);
  EXPECT_EQ(back.model, c.model);
  EXPECT_EQ(back.train_config, ck.train_config);
  EXPECT_EQ(back.best_psnr, 21.5);
  EXPECT_EQ(back.best_step, 2);
  ASSERT_TRUE(back.has_optimizer);
  EXPECT_EQ(back.optimizer_steps, 3);
  for (const auto& [name, w] : ck.weights) EXPECT_TRUE(bitwise_equal(back.weights.at(name), w)) << name;
  for (const auto& [name, mo] : ck.moments) {
    EXPECT_TRUE(bitwise_equal(back.moments.at(name).m, mo.m)) << name;
    EXPECT_TRUE(bitwise_equal(back.moments.at(name).v, mo.v)) << name;
  }

  const RecNet loaded = load_model(dir / "a.rec");
  const Tensor img = testing::random_image(1, 24, 24, 9);
  NoGradGuard ng;
  EXPECT_TRUE(bitwise_equal(loaded.forward(img).image.value(), t.model().forward(img).image.value()));
}

TEST(Checkpoint, DamagedFilesAreRejected) {
  RecNet model({1, 8, 2}, 1);
  const fs::path dir = scratch("damaged");
  save_checkpoint(dir / "good.rec", capture_checkpoint(model, nullptr, 0));
  const auto size = fs::file_size(dir / "good.rec");

  fs::copy_file(dir / "good.rec", dir / "short.rec");
  fs::resize_file(dir / "short.rec", size / 2);
  EXPECT_THROW(load_checkpoint(dir / "short.rec"), CheckpointError);

  fs::copy_file(dir / "good.rec", dir / "flipped.rec");
  {
    std::fstream f(dir / "flipped.rec", std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(static_cast<std::streamoff>(size / 2));
    char byte = 0;
    f.read(&byte, 1);
    byte = static_cast<char>(byte ^ 0x10);
    f.seekp(static_cast<std::streamoff>(size / 2));
    f.write(&byte, 1);
  }
  EXPECT_THROW(load_checkpoint(dir / "flipped.rec"), CheckpointError);
  EXPECT_THROW(load_checkpoint(dir / "missing.rec"), CheckpointError);

  Archive ar = Archive::load(dir / "good.rec");
  ar.meta["checkpoint_version"] = std::to_string(kCheckpointVersion + 1);
  ar.save(dir / "future.rec");
  EXPECT_THROW(load_checkpoint(dir / "future.rec"), CheckpointError);

  EXPECT_FALSE(load_checkpoint(dir / "good.rec").has_optimizer);
}

TEST(Checkpoint, MismatchedConfigLeavesModelUntouched) {
  RecNet small({1, 8, 2}, 1), other({2, 8, 2}, 2);
  const Checkpoint ck = capture_checkpoint(small, nullptr, 0);
  const auto before = weights_of(other);
  EXPECT_THROW(restore_weights(other, ck), CheckpointError);
  for (const auto& [name, w] : weights_of(other)) EXPECT_TRUE(bitwise_equal(w, before.at(name))) << name;

  Checkpoint bad = ck;
  bad.weights.begin()->second = Tensor({1});
  RecNet same({1, 8, 2}, 3);
  const auto same_before = weights_of(same);
  EXPECT_THROW(restore_weights(same, bad), CheckpointError);
  for (const auto& [name, w] : weights_of(same)) EXPECT_TRUE(bitwise_equal(w, same_before.at(name))) << name;
}

TEST(Checkpoint, ResumedRunMatchesUninterruptedRun) {
  TrainConfig c = tiny_config();
  auto data = tiny_dataset();
  Trainer straight(c, crops_of(data, c));
  std::vector<double> trace;
  for (int i = 0; i < 6; ++i) trace.push_back(straight.step().loss.total);

  Trainer first(c, crops_of(data, c));
  for (int i = 0; i < 3; ++i) first.step();
  const fs::path dir = scratch("resume");
  save_checkpoint(dir / "mid.rec", first.checkpoint());

  TrainConfig c2 = c;
  c2.seed = 999;  // the model seed must not matter once weights are restored
  Trainer second(c2, crops_of(data, c));
  second.resume(load_checkpoint(dir / "mid.rec"));
  EXPECT_EQ(second.current_step(), 3);
  EXPECT_EQ(second.optimizer().steps(), 3);
  for (int i = 3; i < 6; ++i) {
    const StepLog s = second.step();
    EXPECT_EQ(s.step, i + 1);
    EXPECT_EQ(s.loss.total, trace[i]) << "step " << i + 1;
  }
  const auto ws = weights_of(straight.model());
  for (const auto& [name, w] : weights_of(second.model())) EXPECT_TRUE(bitwise_equal(w, ws.at(name))) << name;
}

fs::path write_png_dataset(const std::string& name, int count) {
  const fs::path root = scratch(name);
  fs::create_directories(root / "input");
  fs::create_directories(root / "gt");
  SanityOptions o = tiny_data_options();
  for (int i = 0; i < count; ++i) {
    const PairedSample p = sanity_pair(o, i);
    const std::string file = "img" + std::to_string(i) + ".png";
    write_png(root / "input" / file, p.input);
    write_png(root / "gt" / file, p.gt);
  }
  return root;
}

TrainConfig dir_config(const fs::path& root) {
  TrainConfig c = tiny_config();
  c.train_input_dir = (root / "input").string();
  c.train_gt_dir = (root / "gt").string();
  c.out_dir = (root / "run").string();
  return c;
}

TEST(TrainRun, ZeroStepsReportsInitialMetricsOnly) {
  const fs::path root = write_png_dataset("zero", 2);
  TrainConfig c = dir_config(root);
  c.max_steps = 0;
  const TrainReport r = train(c);
  EXPECT_EQ(r.final_step, 0);
  EXPECT_TRUE(r.log.empty());
  ASSERT_EQ(r.val_history.size(), 1u);
  EXPECT_GT(r.initial_val_psnr, 0.0);
  EXPECT_EQ(r.perceptual, "disabled");
  EXPECT_TRUE(fs::exists(root / "run" / "last.rec"));
  EXPECT_TRUE(fs::exists(root / "run" / "config.txt"));
}

TEST(TrainRun, WritesLogAndCheckpointsAndResumes) {
  const fs::path root = write_png_dataset("full", 3);
  TrainConfig c = dir_config(root);
  c.max_steps = 4;
  c.checkpoint_every = 2;
  c.eval_every = 2;
  std::vector<std::string> lines;
  const TrainReport r = train(c, [&](const std::string& s) { lines.push_back(s); });
  EXPECT_EQ(r.final_step, 4);
  EXPECT_EQ(r.log.size(), 4u);
  EXPECT_EQ(r.val_history.size(), 3u);
  EXPECT_FALSE(lines.empty());
  for (const char* f : {"ckpt_2.rec", "ckpt_4.rec", "last.rec", "train_log.csv", "config.txt"})
    EXPECT_TRUE(fs::exists(root / "run" / f)) << f;
  {
    std::ifstream log(root / "run" / "train_log.csv");
    std::string header;
    std::getline(log, header);
    EXPECT_EQ(header, "step,total,mse,cos,bce,ecr,lr");
  }
  EXPECT_EQ(TrainConfig::from_file(root / "run" / "config.txt").to_text(), c.to_text());

  TrainConfig more = c;
  more.max_steps = 6;
  more.resume = (root / "run" / "ckpt_4.rec").string();
  const TrainReport r2 = train(more);
  EXPECT_EQ(r2.start_step, 4);
  EXPECT_EQ(r2.final_step, 6);
  EXPECT_EQ(r2.log.front().step, 5);

  std::ifstream log(root / "run" / "train_log.csv");
  std::string line;
  int rows = -1;
  while (std::getline(log, line)) ++rows;
  EXPECT_EQ(rows, 6);
}

TEST(TrainRun, MissingDataOrWeightsIsAConfigError) {
  TrainConfig c = tiny_config();
  EXPECT_THROW(train(c), ConfigError);
  const fs::path root = write_png_dataset("noweights", 1);
  c = dir_config(root);
  c.weights.ecr = 0.1;
  EXPECT_THROW(train(c), ConfigError);
}

TEST(Sanity, LossFallsOverFiftySteps) {
  TrainConfig c = tiny_config();
  c.lr = 1e-3;
  auto data = tiny_dataset();
  Trainer t(c, crops_of(data, c));
  std::vector<double> losses;
  for (int i = 0; i < 50; ++i) losses.push_back(t.step().loss.total);
  auto window = [&](int from) {
    double s = 0.0;
    for (int i = from; i < from + 10; ++i) s += losses[i];
    return s / 10.0;
  };
  EXPECT_LT(window(40), window(0));
}

TEST(Sanity, IdentityPairsStartAtThePsnrCap) {
  SanityOptions o;
  o.identity = true;
  o.pairs = 2;
  o.size = 32;
  o.max_steps = 0;
  const SanityReport r = run_overfit_sanity(o);
  EXPECT_EQ(r.steps, 0);
  EXPECT_EQ(r.psnr, kPsnrCap);
  // Nothing is overexposed, so the target mask is all ones against an untrained 0.5.
  EXPECT_NEAR(r.mask_error, 0.5, 1e-9);
  EXPECT_FALSE(r.passed);
}

TEST(Sanity, DatasetIsSeededAndHeldOutPairsDiffer) {
  SanityOptions o = tiny_data_options();
  const auto a = sanity_dataset(o), b = sanity_dataset(o);
  ASSERT_EQ(a.size(), 3u);
  for (size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(bitwise_equal(a[i].input, b[i].input));
  const PairedSample held = sanity_pair(o, 3);
  EXPECT_FALSE(bitwise_equal(held.gt, a[0].gt));
}

}  // namespace
}  // namespace recnet
