#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "recnet/tensor.hpp"

namespace recnet {

/// Reported in place of +inf for identical images.
inline constexpr double kPsnrCap = 100.0;

/// 10 log10(1 / MSE) with peak 1, capped at kPsnrCap.
double psnr(const Tensor& a, const Tensor& b);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

/// Mean SSIM over every valid window position of the BT.601 luma planes,
/// averaged over the batch. Accepts RGB (B,H,W,3) or single-channel
/// (B,H,W,1) tensors. Throws when a side is smaller than the window.
double ssim(const Tensor& a, const Tensor& b, const SsimOptions& options = {});

struct ImageMetrics {
  std::string name;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct MetricReport {
  std::vector<ImageMetrics> images;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;

  void add(ImageMetrics m);
  /// `name,psnr,ssim` per image.
  void write_csv(const std::filesystem::path& path) const;
  std::string summary() const;
};

}  // namespace recnet
