#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "recnet/synth.hpp"

namespace recnet {

/// Pairs matched by file name, sorted by name. Immutable once built.
struct PairedDataset {
  std::vector<PairedSample> samples;
  /// One line per orphan file or rejected pair.
  std::vector<std::string> warnings;

  size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
};

/// Loads every *.png present in both directories. Orphans and pairs whose
/// sizes differ are skipped with a warning; an empty intersection throws.
PairedDataset load_paired_dir(const std::filesystem::path& input_dir, const std::filesystem::path& gt_dir);

/// Sorted *.png paths directly inside `dir`.
std::vector<std::filesystem::path> list_pngs(const std::filesystem::path& dir);

enum class Flip { None, Horizontal, Vertical, Both };

/// Mirrors a (B,H,W,C) tensor.
Tensor flip(const Tensor& t, Flip f);

/// Random joint horizontal / vertical flip of input, gt and mask.
PairedSample augment(const PairedSample& sample, uint64_t seed);

struct Batch {
  Tensor input;    // (B,crop,crop,3)
  Tensor gt;       // (B,crop,crop,3)
  Tensor gt_mask;  // (B,crop,crop,1)
};

/// Crops a window of `crop` pixels from a single-image (1,H,W,C) tensor.
Tensor crop_window(const Tensor& t, int64_t top, int64_t left, int64_t crop);

/// Stacks a list of (1,H,W,C) tensors of equal shape into (B,H,W,C).
Tensor stack_batch(const std::vector<Tensor>& items);

/// `batch` samples drawn with replacement, each cropped at one random window
/// shared by input, gt and mask. When `flips` is set each draw is also
/// passed through augment().
Batch random_crop_batch(const PairedDataset& data, int64_t crop, int64_t batch, uint64_t seed, bool flips = false);

}  // namespace recnet
