#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "recnet/autograd.hpp"

namespace recnet {

/// Raised when pretrained perceptual weights cannot be found or verified.
class WeightsUnavailable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// Frozen VGG16 feature extractor truncated at a ReLU layer. Inputs are sRGB
/// images in [0,1]; the ImageNet mean/std normalization is applied
/// internally. The weights never receive gradients; gradients do flow back to
/// the input image.
class PerceptualExtractor {
 public:
  enum class Layer { Relu1_2, Relu2_2, Relu3_3 };

  /// Loads weights from an archive written by tools/fetch_vgg16.py. When
  /// expected_sha256 is non-empty the file hash must match it.
  static PerceptualExtractor load(const std::filesystem::path& path, Layer layer = Layer::Relu3_3,
                                  const std::string& expected_sha256 = "");

  /// Same architecture with seeded Kaiming-normal weights. Only for tests
  /// and offline experiments; never substituted for missing weights.
  static PerceptualExtractor with_random_weights(uint64_t seed, Layer layer = Layer::Relu3_3);

  Var features(const Var& image) const;

  Layer layer() const { return layer_; }
  /// Spatial downsampling factor of the chosen layer.
  int stride() const;
  int64_t channels() const;
  /// "pretrained:<sha256>" or "random:<seed>".
  const std::string& provenance() const { return provenance_; }

  /// Every weight tensor, for freeze checks.
  std::vector<const Tensor*> weights() const;

  static Layer parse_layer(const std::string& name);
  static std::string layer_name(Layer layer);

 private:
  struct ConvLayer {
    int index;  // position in torchvision's vgg16().features
    Var weight;  // (3,3,in,out)
    Var bias;
  };
  PerceptualExtractor() = default;
  static std::vector<std::pair<int, std::pair<int, int>>> layout(Layer layer);

  Layer layer_ = Layer::Relu3_3;
  std::vector<ConvLayer> convs_;
  std::string provenance_;
};

}  // namespace recnet
