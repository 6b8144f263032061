#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "recnet/color.hpp"
#include "recnet/dataset.hpp"
#include "recnet/image_io.hpp"
#include "recnet/losses.hpp"
#include "recnet/synth.hpp"
#include "testing.hpp"

namespace recnet {
namespace {

namespace fs = std::filesystem;
using testing::random_image;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("recnet_test_data_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

bool equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (int64_t i = 0; i < a.numel(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

TEST(Color, YCbCrReferencePoints) {
  Tensor px({1, 1, 3, 3}, {0, 0, 0, 1, 1, 1, 1, 0, 0});
  const Tensor y = rgb_to_ycbcr(px);
  EXPECT_NEAR(y[0], 0.0, 1e-15);
  EXPECT_NEAR(y[1], 0.5, 1e-15);
  EXPECT_NEAR(y[2], 0.5, 1e-15);
  EXPECT_NEAR(y[3], 1.0, 1e-15);
  EXPECT_NEAR(y[4], 0.5, 1e-12);
  EXPECT_NEAR(y[5], 0.5, 1e-12);
  EXPECT_NEAR(y[6], 0.299, 1e-15);
}

TEST(Color, YCbCrStaysInUnitRange) {
  const Tensor y = rgb_to_ycbcr(random_image(2, 16, 16, 1, 0, 1));
  for (double v : y.values()) {
    EXPECT_GE(v, -1e-12);
    EXPECT_LE(v, 1.0 + 1e-12);
  }
  const Tensor l = luma_image(random_image(1, 4, 4, 2));
  EXPECT_EQ(l.shape(), (Shape{1, 4, 4, 1}));
}

TEST(Synth, CleanSceneRangeAndDeterminism) {
  const Tensor a = make_clean_scene(48, 40, 3), b = make_clean_scene(48, 40, 3), c = make_clean_scene(48, 40, 4);
  EXPECT_EQ(a.shape(), (Shape{1, 48, 40, 3}));
  EXPECT_TRUE(equal(a, b));
  EXPECT_FALSE(equal(a, c));
  for (double v : a.values()) {
    EXPECT_GE(v, 0.05);
    EXPECT_LE(v, 0.6);
  }
}

TEST(Synth, IdentitySpecLeavesImageUnchanged) {
  const Tensor clean = make_clean_scene(32, 32, 5);
  const PairedSample s = synthesize_pair(clean, DegradationSpec::identity(), 9);
  EXPECT_TRUE(equal(s.input, s.gt));
  EXPECT_EQ(s.gt_mask.max_abs(), 0.0);
}

TEST(Synth, TwoColumnGainsOnGray) {
  const Tensor gray({1, 64, 64, 3}, 0.3);
  const PairedSample s = synthesize_pair(gray, DegradationSpec::columns({2.0, 0.5}), 1);
  const Tensor oracle = testing::oracle::gt_mask(s.input, s.gt);
  // Away from the feathered seam the halves take their region's label.
  for (int64_t y = 0; y < 64; ++y) {
    for (int64_t x = 0; x < 20; ++x) EXPECT_EQ(s.gt_mask.at(0, y, x, 0), 1.0);
    for (int64_t x = 44; x < 64; ++x) EXPECT_EQ(s.gt_mask.at(0, y, x, 0), 0.0);
  }
  for (int64_t i = 0; i < oracle.numel(); ++i) EXPECT_EQ(s.gt_mask[i], oracle[i]);
  EXPECT_NEAR(s.input.at(0, 10, 2, 0), 0.6, 1e-9);
  EXPECT_NEAR(s.input.at(0, 10, 61, 0), 0.15, 1e-9);
}

TEST(Synth, SameSeedIsBitwiseIdentical) {
  Rng r1(7), r2(7);
  RandomSpecOptions opts;
  opts.noise_std = 0.02;
  opts.gamma_probability = 0.5;
  const DegradationSpec s1 = random_spec(r1, opts), s2 = random_spec(r2, opts);
  EXPECT_EQ(s1.describe(), s2.describe());
  const Tensor clean = make_clean_scene(32, 32, 8);
  const PairedSample a = synthesize_pair(clean, s1, 42), b = synthesize_pair(clean, s2, 42);
  EXPECT_TRUE(equal(a.input, b.input));
  EXPECT_TRUE(equal(a.gt_mask, b.gt_mask));
}

TEST(Synth, RandomSpecsAreMixedAndValid) {
  Rng rng(11);
  RandomSpecOptions opts;
  opts.gamma_probability = 0.5;
  for (int i = 0; i < 200; ++i) {
    const DegradationSpec s = random_spec(rng, opts);
    EXPECT_NO_THROW(s.validate());
    ASSERT_GE(s.params.size(), 2u);
    ASSERT_LE(s.params.size(), 4u);
    bool up = false, down = false;
    for (size_t r = 0; r < s.params.size(); ++r) {
      up = up || s.brightens(r);
      down = down || s.darkens(r);
    }
    EXPECT_TRUE(up && down);
  }
}

TEST(Synth, ValidationRejectsBadSpecs) {
  DegradationSpec s = DegradationSpec::columns({2.0, 1.5});
  EXPECT_THROW(s.validate(), std::invalid_argument);  // not mixed
  EXPECT_THROW(synthesize_pair(make_clean_scene(16, 16, 1), s, 0), std::invalid_argument);
  EXPECT_THROW(DegradationSpec::columns({3.5, 0.5}).validate(), std::invalid_argument);
  EXPECT_THROW(DegradationSpec::columns({2.0}).validate(), std::invalid_argument);
  DegradationSpec g;
  g.curve = DegradationSpec::Curve::Gamma;
  g.params = {0.3, 2.0};
  EXPECT_THROW(g.validate(), std::invalid_argument);
  g.params = {0.5, 2.0};
  EXPECT_NO_THROW(g.validate());
}

TEST(Synth, RegionWeightsPartitionUnity) {
  Rng rng(12);
  const DegradationSpec s = random_spec(rng);
  const Tensor w = region_weights(s, 40, 40, 3);
  const int64_t r = static_cast<int64_t>(s.params.size());
  ASSERT_EQ(w.shape(), (Shape{1, 40, 40, r}));
  for (int64_t p = 0; p < 1600; ++p) {
    double sum = 0.0;
    for (int64_t k = 0; k < r; ++k) {
      EXPECT_GE(w[p * r + k], 0.0);
      sum += w[p * r + k];
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Synth, OutputsInUnitRangeWithConsistentMask) {
  Rng rng(13);
  RandomSpecOptions opts;
  opts.noise_std = 0.05;
  opts.gamma_probability = 0.5;
  for (int i = 0; i < 10; ++i) {
    const PairedSample s = synthesize_pair(make_clean_scene(24, 24, i), random_spec(rng, opts), i);
    for (const Tensor* t : {&s.input, &s.gt})
      for (double v : t->values()) ASSERT_TRUE(v >= 0.0 && v <= 1.0);
    EXPECT_TRUE(equal(s.gt_mask, losses::compute_gt_mask(s.input, s.gt)));
  }
}

TEST(Synth, BlurPreservesConstants) {
  const Tensor c({1, 9, 7, 2}, 0.25);
  const Tensor b = gaussian_blur(c, 2.0);
  for (double v : b.values()) EXPECT_NEAR(v, 0.25, 1e-15);
}

TEST(ImageIo, PngRoundTripWithinHalfStep) {
  const fs::path dir = scratch("png");
  const Tensor img = random_image(1, 13, 17, 14, 0, 1);
  write_png(dir / "a.png", img);
  const Tensor back = read_png(dir / "a.png");
  ASSERT_EQ(back.shape(), img.shape());
  for (int64_t i = 0; i < img.numel(); ++i) EXPECT_LE(std::abs(back[i] - img[i]), 0.5 / 255.0 + 1e-12);
  // A second round trip is exact.
  write_png(dir / "b.png", back);
  EXPECT_TRUE(equal(read_png(dir / "b.png"), back));
  const Tensor gray = read_png(dir / "a.png", 1);
  EXPECT_EQ(gray.shape(), (Shape{1, 13, 17, 1}));
  EXPECT_THROW(read_png(dir / "missing.png"), std::runtime_error);
}

TEST(Dataset, OrphansAreSkippedWithWarnings) {
  const fs::path dir = scratch("orphans");
  fs::create_directories(dir / "in");
  fs::create_directories(dir / "gt");
  for (const char* n : {"c", "a", "b"}) {
    write_png(dir / "in" / (std::string(n) + ".png"), random_image(1, 8, 8, n[0]));
    write_png(dir / "gt" / (std::string(n) + ".png"), random_image(1, 8, 8, n[0] + 100));
  }
  write_png(dir / "in" / "orphan.png", random_image(1, 8, 8, 1));
  write_png(dir / "gt" / "wrong_size.png", random_image(1, 8, 9, 2));
  write_png(dir / "in" / "wrong_size.png", random_image(1, 8, 8, 3));
  std::ofstream(dir / "in" / "notes.txt") << "ignored";
  const PairedDataset d = load_paired_dir(dir / "in", dir / "gt");
  ASSERT_EQ(d.size(), 3u);
  EXPECT_EQ(d.samples[0].id, "a");
  EXPECT_EQ(d.samples[1].id, "b");
  EXPECT_EQ(d.samples[2].id, "c");
  EXPECT_EQ(d.warnings.size(), 2u);
  for (const auto& s : d.samples) EXPECT_TRUE(equal(s.gt_mask, losses::compute_gt_mask(s.input, s.gt)));
}

TEST(Dataset, EmptyIntersectionThrows) {
  const fs::path dir = scratch("empty");
  fs::create_directories(dir / "in");
  fs::create_directories(dir / "gt");
  write_png(dir / "in" / "x.png", random_image(1, 8, 8, 1));
  write_png(dir / "gt" / "y.png", random_image(1, 8, 8, 2));
  EXPECT_THROW(load_paired_dir(dir / "in", dir / "gt"), std::runtime_error);
  EXPECT_THROW(load_paired_dir(dir / "nope", dir / "gt"), std::runtime_error);
}

PairedSample index_sample(int64_t h, int64_t w) {
  // Every pixel stores its own coordinates, so crops and flips are traceable.
  Tensor in({1, h, w, 3}), gt({1, h, w, 3});
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      in.at(0, y, x, 0) = static_cast<double>(y) / h;
      in.at(0, y, x, 1) = static_cast<double>(x) / w;
      in.at(0, y, x, 2) = 0.5;
      for (int c = 0; c < 3; ++c) gt.at(0, y, x, c) = 0.5 * in.at(0, y, x, c) + ((x + y) % 2 ? 0.3 : 0.0);
    }
  return make_sample(in, gt, "grid");
}

TEST(Augment, FlipsAreInvolutionsAndEquivariant) {
  const PairedSample s = index_sample(6, 9);
  for (Flip f : {Flip::Horizontal, Flip::Vertical, Flip::Both}) {
    EXPECT_TRUE(equal(flip(flip(s.input, f), f), s.input));
    EXPECT_TRUE(equal(losses::compute_gt_mask(flip(s.input, f), flip(s.gt, f)), flip(s.gt_mask, f)));
  }
  EXPECT_EQ(flip(s.input, Flip::Horizontal).at(0, 2, 0, 1), s.input.at(0, 2, 8, 1));
  EXPECT_EQ(flip(s.input, Flip::Vertical).at(0, 0, 3, 0), s.input.at(0, 5, 3, 0));
}

TEST(Augment, JointAndSeedDeterministic) {
  const PairedSample s = index_sample(8, 8);
  bool saw_change = false;
  for (uint64_t seed = 0; seed < 16; ++seed) {
    const PairedSample a = augment(s, seed), b = augment(s, seed);
    EXPECT_TRUE(equal(a.input, b.input));
    EXPECT_TRUE(equal(a.gt_mask, losses::compute_gt_mask(a.input, a.gt)));
    saw_change = saw_change || !equal(a.input, s.input);
  }
  EXPECT_TRUE(saw_change);
}

TEST(RandomCrop, WindowsAlignAcrossTheTriple) {
  PairedDataset d;
  d.samples.push_back(index_sample(20, 24));
  const Batch b = random_crop_batch(d, 8, 5, 3);
  EXPECT_EQ(b.input.shape(), (Shape{5, 8, 8, 3}));
  EXPECT_EQ(b.gt.shape(), (Shape{5, 8, 8, 3}));
  EXPECT_EQ(b.gt_mask.shape(), (Shape{5, 8, 8, 1}));
  for (int64_t n = 0; n < 5; ++n) {
    const int64_t top = std::lround(b.input.at(n, 0, 0, 0) * 20);
    const int64_t left = std::lround(b.input.at(n, 0, 0, 1) * 24);
    for (int64_t y = 0; y < 8; ++y)
      for (int64_t x = 0; x < 8; ++x) {
        const PairedSample& s = d.samples[0];
        for (int c = 0; c < 3; ++c) {
          ASSERT_EQ(b.input.at(n, y, x, c), s.input.at(0, top + y, left + x, c));
          ASSERT_EQ(b.gt.at(n, y, x, c), s.gt.at(0, top + y, left + x, c));
        }
        ASSERT_EQ(b.gt_mask.at(n, y, x, 0), s.gt_mask.at(0, top + y, left + x, 0));
      }
  }
}

TEST(RandomCrop, FullSizeCropAndErrors) {
  PairedDataset d;
  d.samples.push_back(index_sample(10, 12));
  const Batch full = random_crop_batch(d, 10, 1, 0);
  EXPECT_EQ(full.input.shape(), (Shape{1, 10, 10, 3}));
  EXPECT_EQ(full.input.at(0, 0, 0, 0), 0.0);  // full height leaves no vertical choice
  EXPECT_THROW(random_crop_batch(d, 11, 1, 0), std::invalid_argument);
  PairedDataset sq;
  sq.samples.push_back(index_sample(9, 9));
  EXPECT_TRUE(equal(random_crop_batch(sq, 9, 1, 5).input, sq.samples[0].input));
  EXPECT_TRUE(equal(random_crop_batch(sq, 4, 3, 17).input, random_crop_batch(sq, 4, 3, 17).input));
}

}  // namespace
}  // namespace recnet
