#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "recnet/checkpoint.hpp"
#include "recnet/image_io.hpp"
#include "recnet/perceptual.hpp"

namespace recnet {
namespace {

namespace fs = std::filesystem;

struct CliResult {
  int status = -1;
  std::string output;  // stdout and stderr
};

CliResult cli(const std::string& args) {
  const std::string cmd = std::string(RECNET_CLI) + " " + args + " 2>&1";
  CliResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  size_t n = 0;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), n);
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("recnet_test_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(cli("--help").status, 0);
  EXPECT_EQ(cli("eval --help").status, 0);
  EXPECT_EQ(cli("").status, 2);
  EXPECT_EQ(cli("synth --bogus 1").status, 2);
  EXPECT_EQ(cli("synth").status, 2);
  const CliResult missing = cli("infer --checkpoint /nonexistent.rec --input /nonexistent --out /tmp/x");
  EXPECT_EQ(missing.status, 2);
  EXPECT_NE(missing.output.find("error:"), std::string::npos);
  EXPECT_EQ(cli("summary --config /nonexistent.cfg").status, 2);
  EXPECT_EQ(cli("summary --set no_such_key=1").status, 2);
}

TEST(Cli, SynthThenInferADirectory) {
  const fs::path dir = scratch("infer");
  const CliResult s = cli("synth --out " + (dir / "data").string() + " --count 3 --size 32 --seed 4");
  ASSERT_EQ(s.status, 0) << s.output;
  for (const char* sub : {"input", "gt", "mask"}) {
    int n = 0;
    for (const auto& e : fs::directory_iterator(dir / "data" / sub)) n += e.path().extension() == ".png";
    EXPECT_EQ(n, 3) << sub;
  }
  EXPECT_NE(slurp(dir / "data" / "manifest.txt").find(".spec = "), std::string::npos);

  RecNet model({1, 8, 2}, 2);
  save_checkpoint(dir / "model.rec", capture_checkpoint(model, nullptr, 0));
  const CliResult r = cli("infer --checkpoint " + (dir / "model.rec").string() + " --input " + (dir / "data" / "input").string() +
                    " --out " + (dir / "out").string() + " --masks");
  ASSERT_EQ(r.status, 0) << r.output;
  int outputs = 0;
  for (const auto& e : fs::directory_iterator(dir / "out")) {
    if (e.path().extension() != ".png") continue;
    ++outputs;
    // An untrained model is the identity map.
    const Tensor in = read_png(dir / "data" / "input" / e.path().filename());
    EXPECT_EQ(read_png(e.path()).values().size(), in.values().size());
    const Tensor out = read_png(e.path());
    for (int64_t i = 0; i < in.numel(); ++i) ASSERT_EQ(out[i], in[i]);
  }
  EXPECT_EQ(outputs, 3);
  EXPECT_TRUE(fs::is_directory(dir / "out" / "masks"));
}

TEST(Cli, EvalOfIdenticalDirectories) {
  const fs::path dir = scratch("eval");
  ASSERT_EQ(cli("synth --out " + (dir / "data").string() + " --count 2 --size 32").status, 0);
  const std::string gt = (dir / "data" / "gt").string();
  const CliResult r = cli("eval --input " + gt + " --gt " + gt + " --out " + (dir / "report").string());
  ASSERT_EQ(r.status, 0) << r.output;
  const std::string summary = slurp(dir / "report" / "summary.txt");
  EXPECT_NE(summary.find("mean_psnr: 100.0000"), std::string::npos) << summary;
  EXPECT_NE(summary.find("mean_ssim: 1.0000"), std::string::npos) << summary;
  EXPECT_NE(summary.find("curve_area: 0.000000"), std::string::npos) << summary;
  for (const char* f : {"report.csv", "curve.csv", "curve.png"}) EXPECT_TRUE(fs::exists(dir / "report" / f)) << f;

  RecNet model({1, 8, 2}, 2);
  save_checkpoint(dir / "model.rec", capture_checkpoint(model, nullptr, 0));
  const CliResult c = cli("eval --input " + (dir / "data" / "input").string() + " --gt " + gt + " --out " +
                    (dir / "corrected").string() + " --checkpoint " + (dir / "model.rec").string());
  ASSERT_EQ(c.status, 0) << c.output;
  EXPECT_TRUE(fs::exists(dir / "corrected" / "curve_input.csv"));
  EXPECT_NE(slurp(dir / "corrected" / "summary.txt").find("curve_area_input: "), std::string::npos);
}

TEST(Cli, SummaryCountsParameters) {
  const CliResult r = cli("summary");
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_NE(r.output.find("618444"), std::string::npos) << r.output;
  const CliResult small = cli("summary --set num_blocks=2 --set base_channels=16");
  EXPECT_NE(small.output.find("62815"), std::string::npos) << small.output;
}

TEST(FetchScript, ArchiveWriterMatchesTheCppReader) {
  if (std::system("python3 -c 'import numpy' >/dev/null 2>&1") != 0) GTEST_SKIP() << "python3 with numpy not available";
  const fs::path dir = scratch("python");
  const fs::path out = dir / "vgg.rec";
  std::ofstream(dir / "write.py") << "import sys\n"
                                     "import numpy as np\n"
                                     "sys.path.insert(0, '" RECNET_TOOLS_DIR "')\n"
                                     "import fetch_vgg16 as f\n"
                                     "chans = [3, 64, 64, 128, 128, 256, 256, 256]\n"
                                     "arrays = {}\n"
                                     "for i, idx in enumerate(f.CONV_INDICES):\n"
                                     "    n = 9 * chans[i] * chans[i + 1]\n"
                                     "    w = (np.arange(n, dtype=np.float64) % 7 - 3) * 1e-3\n"
                                     "    arrays['features.%d.weight' % idx] = w.reshape(3, 3, chans[i], chans[i + 1])\n"
                                     "    arrays['features.%d.bias' % idx] = np.full(chans[i + 1], 0.01 * idx)\n"
                                     "f.write_archive(sys.argv[1], {'kind': 'vgg16-features', 'source': 'test'}, arrays)\n";
  ASSERT_EQ(std::system(("python3 " + (dir / "write.py").string() + " " + out.string()).c_str()), 0);

  const Archive ar = Archive::load(out);
  EXPECT_EQ(ar.meta_at("source"), "test");
  const Tensor& w = ar.array_at("features.5.weight");
  EXPECT_EQ(w.shape(), (Shape{3, 3, 64, 128}));
  for (int64_t i = 0; i < 20; ++i) EXPECT_EQ(w[i], (static_cast<double>(i % 7) - 3) * 1e-3);
  EXPECT_EQ(ar.array_at("features.14.bias")[0], 0.01 * 14);

  const auto ex = PerceptualExtractor::load(out, PerceptualExtractor::Layer::Relu3_3, sha256_file(out));
  EXPECT_EQ(ex.provenance(), "pretrained:" + sha256_file(out));
}

TEST(FetchScript, ExportedTorchVggMatchesTorchFeatures) {
  if (std::system("python3 -c 'import torch, torchvision' >/dev/null 2>&1") != 0) {
    GTEST_SKIP() << "torch/torchvision not available";
  }
  const fs::path dir = scratch("torch");
  const std::string cmd = "python3 " RECNET_TESTS_DIR "/torch_vgg_reference.py " RECNET_TOOLS_DIR " " +
                          (dir / "vgg.rec").string() + " " + (dir / "ref.rec").string();
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  const Archive ref = Archive::load(dir / "ref.rec");
  const Var image(ref.array_at("image"));
  for (const char* name : {"relu1_2", "relu2_2", "relu3_3"}) {
    const auto ex = PerceptualExtractor::load(dir / "vgg.rec", PerceptualExtractor::parse_layer(name));
    const Tensor got = ex.features(image).value();
    const Tensor& want = ref.array_at(name);
    ASSERT_EQ(got.shape(), want.shape()) << name;
    const double scale = std::max(want.max_abs(), 1e-12);
    double worst = 0.0;
    for (int64_t i = 0; i < got.numel(); ++i) worst = std::max(worst, std::abs(got[i] - want[i]));
    EXPECT_LT(worst / scale, 1e-12) << name;
  }
}

}  // namespace
}  // namespace recnet
