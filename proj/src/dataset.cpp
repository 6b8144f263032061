#include "recnet/dataset.hpp"

#include <algorithm>
#include <random>
#include <set>
#include <stdexcept>

#include "recnet/image_io.hpp"

namespace fs = std::filesystem;

namespace recnet {

std::vector<fs::path> list_pngs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

PairedDataset load_paired_dir(const fs::path& input_dir, const fs::path& gt_dir) {
  std::set<std::string> in_names, gt_names;
  for (const auto& p : list_pngs(input_dir)) in_names.insert(p.filename().string());
  for (const auto& p : list_pngs(gt_dir)) gt_names.insert(p.filename().string());

  PairedDataset ds;
  for (const auto& n : in_names)
    if (!gt_names.count(n)) ds.warnings.push_back("skipping " + n + ": no ground truth in " + gt_dir.string());
  for (const auto& n : gt_names)
    if (!in_names.count(n)) ds.warnings.push_back("skipping " + n + ": no input in " + input_dir.string());

  bool any_common = false;
  for (const auto& n : in_names) {
    if (!gt_names.count(n)) continue;
    any_common = true;
    Tensor input = read_png(input_dir / n, 3);
    Tensor gt = read_png(gt_dir / n, 3);
    if (!input.same_shape(gt)) {
      ds.warnings.push_back("skipping " + n + ": size mismatch " + shape_str(input.shape()) + " vs " +
                            shape_str(gt.shape()));
      continue;
    }
    ds.samples.push_back(make_sample(std::move(input), std::move(gt), fs::path(n).stem().string()));
  }
  if (!any_common) {
    throw std::runtime_error("no matching PNG names between " + input_dir.string() + " and " + gt_dir.string());
  }
  return ds;
}

Tensor flip(const Tensor& t, Flip f) {
  require_nhwc(t, "flip");
  if (f == Flip::None) return t;
  const bool h = f == Flip::Horizontal || f == Flip::Both;
  const bool v = f == Flip::Vertical || f == Flip::Both;
  const int64_t H = t.height(), W = t.width();
  Tensor out(t.shape());
  for (int64_t n = 0; n < t.batch(); ++n)
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x)
        for (int64_t c = 0; c < t.channels(); ++c)
          out.at(n, y, x, c) = t.at(n, v ? H - 1 - y : y, h ? W - 1 - x : x, c);
  return out;
}

PairedSample augment(const PairedSample& sample, uint64_t seed) {
  Rng rng(seed);
  std::bernoulli_distribution coin(0.5);
  const bool h = coin(rng), v = coin(rng);
  const Flip f = h && v ? Flip::Both : h ? Flip::Horizontal : v ? Flip::Vertical : Flip::None;
  PairedSample out;
  out.input = flip(sample.input, f);
  out.gt = flip(sample.gt, f);
  out.gt_mask = flip(sample.gt_mask, f);
  out.id = sample.id;
  return out;
}

Tensor crop_window(const Tensor& t, int64_t top, int64_t left, int64_t crop) {
  require_nhwc(t, "crop_window");
  if (top < 0 || left < 0 || top + crop > t.height() || left + crop > t.width()) {
    throw std::invalid_argument("crop window outside image " + shape_str(t.shape()));
  }
  const int64_t C = t.channels();
  Tensor out(Shape{t.batch(), crop, crop, C});
  for (int64_t n = 0; n < t.batch(); ++n)
    for (int64_t y = 0; y < crop; ++y)
      std::copy_n(&t.at(n, top + y, left, 0), crop * C, &out.at(n, y, 0, 0));
  return out;
}

Tensor stack_batch(const std::vector<Tensor>& items) {
  if (items.empty()) throw std::invalid_argument("stack_batch: empty list");
  Shape s = items[0].shape();
  for (const auto& t : items) {
    if (t.shape() != s || t.batch() != 1) throw std::invalid_argument("stack_batch: items must share a (1,H,W,C) shape");
  }
  s[0] = static_cast<int64_t>(items.size());
  Tensor out(s);
  const int64_t each = items[0].numel();
  for (size_t i = 0; i < items.size(); ++i) std::copy_n(items[i].data(), each, out.data() + i * each);
  return out;
}

Batch random_crop_batch(const PairedDataset& data, int64_t crop, int64_t batch, uint64_t seed, bool flips) {
  if (data.empty()) throw std::invalid_argument("random_crop_batch: empty dataset");
  if (batch < 1) throw std::invalid_argument("random_crop_batch: batch must be positive");
  if (crop < 1) throw std::invalid_argument("random_crop_batch: crop must be positive");
  for (const auto& s : data.samples) {
    if (crop > std::min(s.input.height(), s.input.width())) {
      throw std::invalid_argument("crop " + std::to_string(crop) + " exceeds image " + s.id + " of size " +
                                  std::to_string(s.input.height()) + "x" + std::to_string(s.input.width()));
    }
  }
  Rng rng(seed);
  std::vector<Tensor> ins, gts, masks;
  for (int64_t b = 0; b < batch; ++b) {
    const auto idx = std::uniform_int_distribution<size_t>(0, data.size() - 1)(rng);
    PairedSample s = flips ? augment(data.samples[idx], rng()) : data.samples[idx];
    const int64_t top = std::uniform_int_distribution<int64_t>(0, s.input.height() - crop)(rng);
    const int64_t left = std::uniform_int_distribution<int64_t>(0, s.input.width() - crop)(rng);
    ins.push_back(crop_window(s.input, top, left, crop));
    gts.push_back(crop_window(s.gt, top, left, crop));
    masks.push_back(crop_window(s.gt_mask, top, left, crop));
  }
  return {stack_batch(ins), stack_batch(gts), stack_batch(masks)};
}

}  // namespace recnet
