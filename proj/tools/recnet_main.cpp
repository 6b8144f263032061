// recnet command-line interface: synth, train, infer, eval, sanity, summary.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "recnet/checkpoint.hpp"
#include "recnet/color.hpp"
#include "recnet/config.hpp"
#include "recnet/curve.hpp"
#include "recnet/dataset.hpp"
#include "recnet/fpenv.hpp"
#include "recnet/image_io.hpp"
#include "recnet/metrics.hpp"
#include "recnet/sanity.hpp"
#include "recnet/synth.hpp"
#include "recnet/train.hpp"
#include "recnet/visualize.hpp"

namespace fs = std::filesystem;
using namespace recnet;

namespace {

/// Bad arguments or paths: exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::optional<uint64_t> seed;
  std::vector<std::string> overrides;

  TrainConfig load() const {
    TrainConfig cfg;
    if (!config.empty()) {
      if (!fs::exists(config)) throw UsageError("config file not found: " + config);
      cfg = TrainConfig::from_file(config);
    }
    for (const auto& o : overrides) cfg.apply_override(o);
    if (seed) cfg.seed = *seed;
    return cfg;
  }
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "flat key = value configuration file");
  app->add_option("--seed", c.seed, "random seed (overrides the config)");
  app->add_option("--set", c.overrides, "override a config key, key=value (repeatable)");
}

void require_exists(const std::string& path, const char* what) {
  if (path.empty() || !fs::exists(path)) throw UsageError(std::string(what) + " not found: " + path);
}

Tensor correct(const RecNet& model, const Tensor& image) {
  FlushDenormalsGuard ftz;
  NoGradGuard no_grad;
  return model.forward(image).image.value();
}

// --- synth ------------------------------------------------------------------

struct SynthArgs {
  std::string out;
  int count = 8;
  int64_t size = 128;
  double gamma_probability = 0.0;
  double noise = 0.0;
};

int run_synth(const Common& common, const SynthArgs& a) {
  const TrainConfig cfg = common.load();
  if (a.count < 1) throw UsageError("--count must be positive");
  if (a.size < kMinImageSide) throw UsageError("--size must be at least " + std::to_string(kMinImageSide));
  const fs::path out(a.out);
  for (const char* d : {"input", "gt", "mask"}) fs::create_directories(out / d);

  RandomSpecOptions opts;
  opts.gamma_probability = a.gamma_probability;
  opts.noise_std = a.noise;
  std::ofstream manifest(out / "manifest.txt");
  manifest << "# recnet synthetic dataset\nseed = " << cfg.seed << "\ncount = " << a.count << "\nsize = " << a.size
           << '\n';
  for (int i = 0; i < a.count; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%04d", i);
    const uint64_t s = mix_seed(cfg.seed, static_cast<uint64_t>(i));
    Rng rng(mix_seed(s, 1));
    const DegradationSpec spec = random_spec(rng, opts);
    const PairedSample p = synthesize_pair(make_clean_scene(a.size, a.size, s), spec, mix_seed(s, 2), name);
    write_png(out / "input" / (std::string(name) + ".png"), p.input);
    write_png(out / "gt" / (std::string(name) + ".png"), p.gt);
    write_png(out / "mask" / (std::string(name) + ".png"), p.gt_mask);
    manifest << "sample." << name << ".seed = " << s << "\nsample." << name << ".spec = " << spec.describe() << '\n';
  }
  std::cout << "wrote " << a.count << " pairs to " << out.string() << '\n';
  return 0;
}

// --- train ------------------------------------------------------------------

int run_train(const Common& common) {
  const TrainConfig cfg = common.load();
  if (!cfg.train_input_dir.empty()) require_exists(cfg.train_input_dir, "train_input_dir");
  if (!cfg.train_gt_dir.empty()) require_exists(cfg.train_gt_dir, "train_gt_dir");
  const TrainReport r = train(cfg, [](const std::string& s) { std::cout << s << std::endl; });
  std::cout << std::fixed << std::setprecision(3) << "done: steps " << r.start_step << "->" << r.final_step
            << " initial_val_psnr " << r.initial_val_psnr << " best_val_psnr " << r.best_val_psnr << " at step "
            << r.best_step << " perceptual " << r.perceptual << '\n';
  return 0;
}

// --- infer ------------------------------------------------------------------

struct InferArgs {
  std::string checkpoint;
  std::string input;
  std::string out;
  bool masks = false;
};

int run_infer(const Common& common, const InferArgs& a) {
  common.load();
  require_exists(a.checkpoint, "checkpoint");
  require_exists(a.input, "input");
  const RecNet model = load_model(a.checkpoint);
  std::vector<fs::path> files = fs::is_directory(a.input) ? list_pngs(a.input) : std::vector<fs::path>{a.input};
  if (files.empty()) throw UsageError("no PNG files in " + a.input);
  fs::create_directories(a.out);
  for (const auto& f : files) {
    const Tensor img = read_png(f);
    write_png(fs::path(a.out) / f.filename(), correct(model, img));
    if (a.masks) {
      FlushDenormalsGuard ftz;
      write_mask_visualization(fs::path(a.out) / "masks" / f.stem(), visualize_masks(model, img));
    }
  }
  std::cout << "corrected " << files.size() << " image(s) into " << a.out << '\n';
  return 0;
}

// --- eval -------------------------------------------------------------------

struct EvalArgs {
  std::string input;
  std::string gt;
  std::string out;
  std::string checkpoint;
};

int run_eval(const Common& common, const EvalArgs& a) {
  common.load();
  require_exists(a.input, "input directory");
  require_exists(a.gt, "gt directory");
  if (!a.checkpoint.empty()) require_exists(a.checkpoint, "checkpoint");
  const PairedDataset data = load_paired_dir(a.input, a.gt);
  for (const auto& w : data.warnings) std::cerr << "warning: " << w << '\n';
  std::optional<RecNet> model;
  if (!a.checkpoint.empty()) model.emplace(load_model(a.checkpoint));

  const fs::path out(a.out);
  fs::create_directories(out);
  MetricReport report;
  std::vector<std::pair<Tensor, Tensor>> pairs, input_pairs;
  for (const auto& s : data.samples) {
    const Tensor pred = model ? correct(*model, s.input) : s.input;
    report.add({s.id, psnr(pred, s.gt), ssim(pred, s.gt)});
    pairs.emplace_back(pred, s.gt);
    if (model) {
      input_pairs.emplace_back(s.input, s.gt);
      write_png(out / "corrected" / (s.id + ".png"), pred);
    }
  }
  report.write_csv(out / "report.csv");
  const BrightnessCurve curve = brightness_mapping_curve(pairs);
  curve.write_csv(out / "curve.csv");
  write_png(out / "curve.png", render_curve_plot(curve));

  std::ostringstream summary;
  summary << report.summary() << std::fixed << std::setprecision(6) << "curve_area: " << curve.area << '\n';
  if (model) {
    const BrightnessCurve base = brightness_mapping_curve(input_pairs);
    base.write_csv(out / "curve_input.csv");
    write_png(out / "curve_input.png", render_curve_plot(base));
    summary << "curve_area_input: " << base.area << '\n';
  }
  std::ofstream(out / "summary.txt") << summary.str();
  std::cout << summary.str();
  return 0;
}

// --- sanity -----------------------------------------------------------------

struct SanityArgs {
  int64_t steps = 2000;
  int pairs = 4;
  int64_t size = 64;
  int blocks = 2;
  int channels = 16;
  std::string out;
  std::string vgg_weights;
  double lambda_ecr = 0.0;
  bool no_early_stop = false;
};

int run_sanity(const Common& common, const SanityArgs& a) {
  const TrainConfig cfg = common.load();
  SanityOptions o;
  o.seed = cfg.seed;
  o.max_steps = a.steps;
  o.pairs = a.pairs;
  o.size = a.size;
  o.model = {a.blocks, a.channels, cfg.model.attn_heads};
  o.early_stop = !a.no_early_stop;
  o.weights.ecr = a.lambda_ecr;
  o.vgg_weights = a.vgg_weights;
  try {
    o.model.validate();
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }

  std::optional<RecNet> trained;
  const SanityReport r = run_overfit_sanity(o, &trained, [](const SanityPoint& p) {
    std::cout << std::fixed << std::setprecision(4) << "step " << p.step << " loss " << p.loss << " psnr " << p.psnr
              << " mask_error " << p.mask_error << std::endl;
  });
  if (!a.out.empty()) {
    const fs::path out(a.out);
    fs::create_directories(out);
    std::ofstream trace(out / "trace.csv");
    trace << "step,loss,psnr,mask_error\n" << std::setprecision(10);
    for (const auto& p : r.trace) trace << p.step << ',' << p.loss << ',' << p.psnr << ',' << p.mask_error << '\n';
    const auto data = sanity_dataset(o);
    for (const auto& s : data) {
      FlushDenormalsGuard ftz;
      write_mask_visualization(out / s.id, visualize_masks(*trained, s.input, s.gt));
      write_png(out / s.id / "corrected.png", correct(*trained, s.input));
    }
    save_checkpoint(out / "model.rec", capture_checkpoint(*trained, nullptr, r.steps));
  }
  std::cout << r.summary() << '\n';
  return r.passed ? 0 : 1;
}

// --- summary ----------------------------------------------------------------

int run_summary(const Common& common, const std::string& checkpoint) {
  const TrainConfig cfg = common.load();
  if (!checkpoint.empty()) {
    require_exists(checkpoint, "checkpoint");
    RecNet model = load_model(checkpoint);
    std::cout << format_summary(model.summary());
    return 0;
  }
  RecNet model(cfg.model, cfg.seed);
  std::cout << format_summary(model.summary());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"recnet: region-aware exposure correction"};
  app.require_subcommand(1);
  Common common;

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "generate a synthetic mixed-exposure dataset");
  add_common(c_synth, common);
  c_synth->add_option("--out", synth.out, "output directory")->required();
  c_synth->add_option("--count", synth.count, "number of pairs");
  c_synth->add_option("--size", synth.size, "image side in pixels");
  c_synth->add_option("--gamma-prob", synth.gamma_probability, "probability of a gamma instead of gain spec");
  c_synth->add_option("--noise", synth.noise, "Gaussian noise std added to inputs");

  auto* c_train = app.add_subcommand("train", "train a model from a config");
  add_common(c_train, common);

  InferArgs infer;
  auto* c_infer = app.add_subcommand("infer", "correct a PNG or a directory of PNGs");
  add_common(c_infer, common);
  c_infer->add_option("--checkpoint", infer.checkpoint, "model checkpoint")->required();
  c_infer->add_option("--input", infer.input, "PNG file or directory")->required();
  c_infer->add_option("--out", infer.out, "output directory")->required();
  c_infer->add_flag("--masks", infer.masks, "also write per-block mask visualizations");

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("eval", "PSNR/SSIM report and brightness curve for paired directories");
  add_common(c_eval, common);
  c_eval->add_option("--input", eval.input, "directory of images to score (or to correct with --checkpoint)")->required();
  c_eval->add_option("--gt", eval.gt, "ground-truth directory")->required();
  c_eval->add_option("--out", eval.out, "report directory")->required();
  c_eval->add_option("--checkpoint", eval.checkpoint, "correct the inputs with this model first");

  SanityArgs sanity;
  auto* c_sanity = app.add_subcommand("sanity", "overfit harness; exit 0 iff thresholds are met");
  add_common(c_sanity, common);
  c_sanity->add_option("--steps", sanity.steps, "maximum Adam steps");
  c_sanity->add_option("--pairs", sanity.pairs, "number of synthetic pairs");
  c_sanity->add_option("--size", sanity.size, "image side");
  c_sanity->add_option("--blocks", sanity.blocks, "model blocks");
  c_sanity->add_option("--channels", sanity.channels, "model width");
  c_sanity->add_option("--out", sanity.out, "write trace, masks and model here");
  c_sanity->add_option("--vgg-weights", sanity.vgg_weights, "perceptual weights (needed with --lambda-ecr)");
  c_sanity->add_option("--lambda-ecr", sanity.lambda_ecr, "ECR weight");
  c_sanity->add_flag("--no-early-stop", sanity.no_early_stop, "run all steps");

  std::string summary_ckpt;
  auto* c_summary = app.add_subcommand("summary", "per-module parameter counts");
  add_common(c_summary, common);
  c_summary->add_option("--checkpoint", summary_ckpt, "summarize a saved model instead of the config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n" << "run 'recnet --help' for usage\n";
    return 2;
  }

  try {
    if (*c_synth) return run_synth(common, synth);
    if (*c_train) return run_train(common);
    if (*c_infer) return run_infer(common, infer);
    if (*c_eval) return run_eval(common, eval);
    if (*c_sanity) return run_sanity(common, sanity);
    if (*c_summary) return run_summary(common, summary_ckpt);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
