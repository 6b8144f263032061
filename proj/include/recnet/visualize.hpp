#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "recnet/model.hpp"

namespace recnet {

struct MaskVisualization {
  /// One row: input, every block's underexposure mask, then the target mask
  /// (1 - gt brightness mask, black when no gt was given). (1,H,(2+N)*W,3).
  Tensor grid;
  std::vector<Tensor> masks;    // (1,H,W,1) per block
  std::optional<Tensor> target; // (1,H,W,1)
  int columns = 0;
};

/// Runs the model without gradients on a single (1,H,W,3) image.
MaskVisualization visualize_masks(const RecNet& model, const Tensor& image, const std::optional<Tensor>& gt = std::nullopt);

/// grid.png, mask_block<i>.png (grayscale) and target_mask.png if present.
void write_mask_visualization(const std::filesystem::path& dir, const MaskVisualization& vis);

}  // namespace recnet
