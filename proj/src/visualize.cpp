#include "recnet/visualize.hpp"

#include <stdexcept>

#include "recnet/color.hpp"
#include "recnet/image_io.hpp"

namespace recnet {

namespace {

void paste(Tensor& grid, const Tensor& tile, int64_t column) {
  const int64_t H = tile.height(), W = tile.width();
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x)
      for (int64_t c = 0; c < 3; ++c)
        grid.at(0, y, column * W + x, c) = tile.at(0, y, x, tile.channels() == 1 ? 0 : c);
}

}  // namespace

MaskVisualization visualize_masks(const RecNet& model, const Tensor& image, const std::optional<Tensor>& gt) {
  validate_image(image, "visualize_masks");
  if (image.batch() != 1) throw std::invalid_argument("visualize_masks: expected a single image");
  NoGradGuard no_grad;
  ForwardResult fr = model.forward(image);

  MaskVisualization vis;
  for (const Var& m : fr.masks) vis.masks.push_back(m.value());
  if (gt) {
    Tensor t = brighter_mask(image, *gt);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = 1.0 - t[i];
    vis.target = std::move(t);
  }
  vis.columns = 2 + static_cast<int>(vis.masks.size());
  vis.grid = Tensor(Shape{1, image.height(), vis.columns * image.width(), 3});
  paste(vis.grid, image, 0);
  for (size_t i = 0; i < vis.masks.size(); ++i) paste(vis.grid, vis.masks[i], static_cast<int64_t>(i) + 1);
  if (vis.target) paste(vis.grid, *vis.target, vis.columns - 1);
  return vis;
}

void write_mask_visualization(const std::filesystem::path& dir, const MaskVisualization& vis) {
  std::filesystem::create_directories(dir);
  write_png(dir / "grid.png", vis.grid);
  for (size_t i = 0; i < vis.masks.size(); ++i) write_png(dir / ("mask_block" + std::to_string(i) + ".png"), vis.masks[i]);
  if (vis.target) write_png(dir / "target_mask.png", *vis.target);
}

}  // namespace recnet
