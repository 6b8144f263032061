#include "recnet/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <vector>

namespace recnet {

unsigned char quantize_unit(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<unsigned char>(std::lround(c * 255.0));
}

Tensor read_png(const std::filesystem::path& path, int channels) {
  if (channels != 1 && channels != 3) throw std::invalid_argument("read_png: channels must be 1 or 3");
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw std::runtime_error("cannot read PNG " + path.string() + ": " + img.message);
  }
  img.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<unsigned char> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw std::runtime_error("cannot decode PNG " + path.string() + ": " + img.message);
  }
  Tensor out(Shape{1, static_cast<int64_t>(img.height), static_cast<int64_t>(img.width), channels});
  for (size_t i = 0; i < buf.size(); ++i) out[static_cast<int64_t>(i)] = buf[i] / 255.0;
  return out;
}

void write_png(const std::filesystem::path& path, const Tensor& image) {
  int64_t h, w, c;
  if (image.rank() == 4 && image.batch() == 1) {
    h = image.height(), w = image.width(), c = image.channels();
  } else if (image.rank() == 3) {
    h = image.dim(0), w = image.dim(1), c = image.dim(2);
  } else {
    throw std::invalid_argument("write_png: expected (1,H,W,C) or (H,W,C), got " + shape_str(image.shape()));
  }
  if (c != 1 && c != 3) throw std::invalid_argument("write_png: channels must be 1 or 3");
  std::vector<unsigned char> buf(static_cast<size_t>(image.numel()));
  for (int64_t i = 0; i < image.numel(); ++i) buf[static_cast<size_t>(i)] = quantize_unit(image[i]);

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(w);
  img.height = static_cast<png_uint_32>(h);
  img.format = c == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr)) {
    throw std::runtime_error("cannot write PNG " + path.string() + ": " + img.message);
  }
}

}  // namespace recnet
