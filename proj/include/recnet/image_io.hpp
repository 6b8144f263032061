#pragma once

#include <filesystem>

#include "recnet/tensor.hpp"

namespace recnet {

/// Decodes an 8-bit PNG to a (1,H,W,channels) tensor in [0,1]. channels is 1
/// (luma) or 3 (RGB); the file is converted as needed.
Tensor read_png(const std::filesystem::path& path, int channels = 3);

/// Encodes a (1,H,W,C) or (H,W,C) tensor with C in {1,3} as 8-bit PNG.
/// Values are clamped to [0,1] and rounded to the nearest level.
void write_png(const std::filesystem::path& path, const Tensor& image);

/// The byte a value in [0,1] is stored as.
unsigned char quantize_unit(double v);

}  // namespace recnet
