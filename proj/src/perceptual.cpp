#include "recnet/perceptual.hpp"

#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include "recnet/archive.hpp"
#include "recnet/nn.hpp"
#include "recnet/ops.hpp"

namespace recnet {

namespace {

constexpr std::array<double, 3> kImagenetMean = {0.485, 0.456, 0.406};
constexpr std::array<double, 3> kImagenetStd = {0.229, 0.224, 0.225};

// A 2x2 max pool follows the 2nd and 4th convolutions.
bool pool_after(size_t conv) { return conv == 1 || conv == 3; }

std::string fetch_instructions(const std::filesystem::path& path) {
  return "perceptual weights not found at '" + path.string() +
         "'. Run `python3 tools/fetch_vgg16.py --out " + path.string() +
         "` on a machine with network access (it converts torchvision's ImageNet VGG16 weights), or set "
         "lambda_ecr = 0 to train without the contrastive term.";
}

}  // namespace

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw std::runtime_error("SHA-256 init failed");
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest.data(), &len);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return os.str();
}

std::vector<std::pair<int, std::pair<int, int>>> PerceptualExtractor::layout(Layer layer) {
  // (torchvision index, (in, out)) for every conv up to the chosen ReLU.
  std::vector<std::pair<int, std::pair<int, int>>> all = {
      {0, {3, 64}},     {2, {64, 64}},    {5, {64, 128}},   {7, {128, 128}},
      {10, {128, 256}}, {12, {256, 256}}, {14, {256, 256}},
  };
  const size_t keep = layer == Layer::Relu1_2 ? 2 : layer == Layer::Relu2_2 ? 4 : 7;
  all.resize(keep);
  return all;
}

PerceptualExtractor PerceptualExtractor::load(const std::filesystem::path& path, Layer layer,
                                              const std::string& expected_sha256) {
  if (!std::filesystem::exists(path)) throw WeightsUnavailable(fetch_instructions(path));
  std::string digest = sha256_file(path);
  if (!expected_sha256.empty() && digest != expected_sha256) {
    throw WeightsUnavailable("perceptual weights at '" + path.string() + "' have SHA-256 " + digest +
                             " but the configuration expects " + expected_sha256);
  }
  Archive ar = Archive::load(path);
  PerceptualExtractor ex;
  ex.layer_ = layer;
  ex.provenance_ = "pretrained:" + digest;
  for (const auto& [index, io] : layout(layer)) {
    const std::string base = "features." + std::to_string(index);
    const Tensor& w = ar.array_at(base + ".weight");
    const Tensor& b = ar.array_at(base + ".bias");
    if (w.shape() != Shape{3, 3, io.first, io.second} || b.shape() != Shape{io.second}) {
      throw FormatError("perceptual weights: unexpected shape for " + base + ": " + shape_str(w.shape()));
    }
    ex.convs_.push_back({index, Var(w, false), Var(b, false)});
  }
  return ex;
}

PerceptualExtractor PerceptualExtractor::with_random_weights(uint64_t seed, Layer layer) {
  PerceptualExtractor ex;
  ex.layer_ = layer;
  ex.provenance_ = "random:" + std::to_string(seed);
  Rng rng(seed);
  for (const auto& [index, io] : layout(layer)) {
    Tensor w = nn::kaiming_normal({3, 3, io.first, io.second}, 9 * io.first, rng);
    ex.convs_.push_back({index, Var(std::move(w), false), Var(Tensor(Shape{io.second}), false)});
  }
  return ex;
}

Var PerceptualExtractor::features(const Var& image) const {
  const Tensor& img = image.value();
  if (img.rank() != 4 || img.channels() != 3) {
    throw std::invalid_argument("perceptual features: expected (B,H,W,3), got " + shape_str(img.shape()));
  }
  std::vector<double> scale(3), shift(3);
  for (size_t c = 0; c < 3; ++c) {
    scale[c] = 1.0 / kImagenetStd[c];
    shift[c] = -kImagenetMean[c] / kImagenetStd[c];
  }
  Var h = ops::channel_affine(image, scale, shift);
  for (size_t i = 0; i < convs_.size(); ++i) {
    h = ops::relu(ops::conv2d(h, convs_[i].weight, convs_[i].bias));
    if (pool_after(i) && i + 1 < convs_.size()) h = ops::max_pool2x2(h);
  }
  return h;
}

int PerceptualExtractor::stride() const {
  switch (layer_) {
    case Layer::Relu1_2:
      return 1;
    case Layer::Relu2_2:
      return 2;
    case Layer::Relu3_3:
      return 4;
  }
  return 1;
}

int64_t PerceptualExtractor::channels() const { return convs_.back().weight.value().dim(3); }

std::vector<const Tensor*> PerceptualExtractor::weights() const {
  std::vector<const Tensor*> out;
  for (const auto& c : convs_) {
    out.push_back(&c.weight.value());
    out.push_back(&c.bias.value());
  }
  return out;
}

PerceptualExtractor::Layer PerceptualExtractor::parse_layer(const std::string& name) {
  if (name == "relu1_2") return Layer::Relu1_2;
  if (name == "relu2_2") return Layer::Relu2_2;
  if (name == "relu3_3") return Layer::Relu3_3;
  throw std::invalid_argument("unknown perceptual layer '" + name + "' (expected relu1_2, relu2_2 or relu3_3)");
}

std::string PerceptualExtractor::layer_name(Layer layer) {
  switch (layer) {
    case Layer::Relu1_2:
      return "relu1_2";
    case Layer::Relu2_2:
      return "relu2_2";
    case Layer::Relu3_3:
      return "relu3_3";
  }
  return "relu3_3";
}

}  // namespace recnet
