#include <gtest/gtest.h>

#include "bokeh/synthetic.hpp"
#include "oracles.hpp"

using namespace bokeh;

namespace {

SceneLayer disc_layer(double depth, double cx, double cy, double r, std::uint64_t tex_seed) {
  SceneLayer l;
  l.depth = depth;
  l.shape.center = {cx, cy};
  l.shape.radius_x = l.shape.radius_y = r;
  l.texture.base = {0.9, 0.2, 0.1};
  l.texture.accent = {0.1, 0.3, 0.8};
  l.texture.seed = tex_seed;
  return l;
}

SceneSpec base_scene(double gain) {
  SceneSpec s;
  s.image_size = 32;
  s.focus_depth = 2.0;
  s.background_depth = 8.0;
  s.blur_gain = gain;
  s.background.base = {0.2, 0.7, 0.3};
  s.background.accent = {0.9, 0.9, 0.1};
  s.background.seed = 77;
  s.background.noise_cells = {4, 8, 16};
  return s;
}

double laplacian_energy(const Tensor<double>& img, const Tensor<double>& mask) {
  double e = 0;
  for (std::size_t c = 0; c < img.channels(); ++c)
    for (std::size_t y = 1; y + 1 < img.height(); ++y)
      for (std::size_t x = 1; x + 1 < img.width(); ++x) {
        if (mask.at(0, y, x) == 0.0) continue;
        const double l = img.at(c, y - 1, x) + img.at(c, y + 1, x) + img.at(c, y, x - 1) + img.at(c, y, x + 1) -
                         4 * img.at(c, y, x);
        e += l * l;
      }
  return e;
}

}  // namespace

TEST(Coc, FormulaAndQuantization) {
  EXPECT_EQ(coc_radius(2.0, 2.0, 50.0), 0.0);
  EXPECT_DOUBLE_EQ(coc_radius(4.0, 2.0, 50.0), 12.5);
  EXPECT_DOUBLE_EQ(coc_radius(3.0, 2.0, 10.0), 1.75);  // 1.6667 -> nearest quarter
  double prev = -1;
  for (double d : {2.0, 2.5, 3.0, 4.0, 6.0, 10.0, 50.0}) {
    const double r = coc_radius(d, 2.0, 30.0);
    EXPECT_GE(r, prev);
    prev = r;
  }
  EXPECT_THROW(coc_radius(0.0, 2.0, 1.0), ConfigError);
  EXPECT_THROW(coc_radius(1.0, 2.0, -1.0), ConfigError);
}

TEST(DiskKernel, NormalizedAndRound) {
  for (double r : {0.0, 1.0, 2.5, 4.0}) {
    const auto k = disk_kernel(r);
    double s = 0;
    for (double v : k.data()) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
    const std::size_t side = 2 * std::size_t(r) + 1;
    EXPECT_EQ(k.shape(), (Shape{side, side}));
  }
  const auto k = disk_kernel(2.0);
  EXPECT_EQ(k[0], 0.0);    // corner is outside the disc
  EXPECT_GT(k[12], 0.0);   // center
  EXPECT_EQ(k[2], k[12]);  // (0,-2) is on the rim
}

TEST(DiskBlur, IdentityConstantImpulse) {
  std::mt19937_64 gen(31);
  const auto img = oracle::random_tensor({3, 12, 12}, gen, 0, 1);
  EXPECT_TRUE(disk_blur(img, 0.0) == img);
  const Tensor<double> flat({2, 10, 10}, 0.37);
  EXPECT_LE(oracle::max_abs_diff(disk_blur(flat, 3.0), flat), 1e-15);

  Tensor<double> impulse({1, 15, 15});
  impulse.at(0, 7, 7) = 1.0;
  const auto out = disk_blur(impulse, 3.0);
  const auto k = disk_kernel(3.0);
  for (std::size_t y = 0; y < 7; ++y)
    for (std::size_t x = 0; x < 7; ++x) EXPECT_NEAR(out.at(0, 4 + y, 4 + x), k[y * 7 + x], 1e-15);
}

TEST(DiskBlur, MatchesPerPixelLoop) {
  std::mt19937_64 gen(32);
  for (int trial = 0; trial < 10; ++trial) {
    const auto img = oracle::random_tensor({3, 14, 17}, gen, 0, 1);
    const double r = 0.25 * oracle::random_int(gen, 0, 24);
    EXPECT_LE(oracle::max_abs_diff(disk_blur(img, r), oracle::disk_blur(img, r)), 1e-12) << r;
  }
}

TEST(DiskBlur, RejectsOversizedKernel) {
  EXPECT_THROW(disk_blur(Tensor<double>({1, 8, 20}), 4.0), ShapeError);
  EXPECT_NO_THROW(disk_blur(Tensor<double>({1, 9, 20}), 4.0));
  EXPECT_THROW(disk_blur(Tensor<double>({1, 9, 9}), -1.0), ConfigError);
}

TEST(Render, AllLayersInFocusMeansNoBlur) {
  SceneSpec s = base_scene(40.0);
  s.background_depth = 2.0;
  s.layers = {disc_layer(2.0, 0.4, 0.5, 0.2, 1), disc_layer(2.0, 0.6, 0.5, 0.2, 2)};
  const auto r = render_scene(s);
  EXPECT_TRUE(r.shallow == r.sharp);
  EXPECT_TRUE(r.wide == box_downsample2(r.sharp));
}

TEST(Render, BackgroundOnlyEqualsDiskBlur) {
  SceneSpec s = base_scene(24.0);
  const auto r = render_scene(s);
  const double radius = coc_radius(8.0, 2.0, 24.0);
  EXPECT_GT(radius, 0.0);
  EXPECT_LE(oracle::max_abs_diff(r.shallow, oracle::disk_blur(r.sharp, radius)), 1e-12);
}

TEST(Render, SubjectInteriorIsUntouched) {
  SceneSpec s = base_scene(24.0);
  s.layers = {disc_layer(2.0, 0.5, 0.5, 0.3, 3)};
  const auto r = render_scene(s);
  const double max_r = *std::max_element(r.radii.begin(), r.radii.end());
  const double n = 64.0;
  for (std::size_t y = 0; y < 64; ++y)
    for (std::size_t x = 0; x < 64; ++x) {
      const double dx = (x + 0.5) - 0.5 * n, dy = (y + 0.5) - 0.5 * n;
      if (std::hypot(dx, dy) > 0.3 * n - max_r - 1) continue;
      for (std::size_t c = 0; c < 3; ++c) ASSERT_EQ(r.shallow.at(c, y, x), r.sharp.at(c, y, x));
    }
}

TEST(Render, BrightnessConserved) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const auto r = render_scene(sample_scene(seed, 32));
    double a = 0, b = 0;
    for (std::size_t i = 0; i < r.sharp.numel(); ++i) {
      a += r.sharp[i];
      b += r.shallow[i];
    }
    EXPECT_LE(std::abs(a - b) / a, 0.01) << seed;
  }
}

TEST(Render, StrongerGainRemovesMoreDetail) {
  SceneSpec s = base_scene(0.0);
  s.layers = {disc_layer(2.0, 0.5, 0.5, 0.15, 4)};
  const auto mask_scene = render_scene(s);
  Tensor<double> bg_mask({1, 64, 64});
  for (std::size_t y = 0; y < 64; ++y)
    for (std::size_t x = 0; x < 64; ++x) {
      const double d = std::hypot(x + 0.5 - 32.0, y + 0.5 - 32.0);
      bg_mask.at(0, y, x) = d > 0.15 * 64 + 10 ? 1.0 : 0.0;
    }
  double prev = laplacian_energy(mask_scene.shallow, bg_mask);
  for (double gain : {4.0, 8.0, 14.0, 20.0}) {
    s.blur_gain = gain;
    const double e = laplacian_energy(render_scene(s).shallow, bg_mask);
    EXPECT_LT(e, prev) << gain;
    prev = e;
  }
}

TEST(Render, DepthIsFrontMostSurface) {
  SceneSpec s = base_scene(10.0);
  s.layers = {disc_layer(1.5, 0.5, 0.5, 0.2, 5), disc_layer(3.0, 0.5, 0.5, 0.35, 6)};
  const auto r = render_scene(s);
  EXPECT_EQ(r.depth.at(0, 16, 16), 1.5);
  EXPECT_EQ(r.depth.at(0, 16, 16 + 9), 3.0);
  EXPECT_EQ(r.depth.at(0, 0, 0), 8.0);
}

TEST(Scene, ValidationRules) {
  SceneSpec s = base_scene(10.0);
  EXPECT_NO_THROW(s.validate());
  s.layers = {disc_layer(3.0, 0.5, 0.5, 0.2, 1), disc_layer(2.0, 0.5, 0.5, 0.2, 2)};
  EXPECT_THROW(s.validate(), ConfigError);  // not front to back
  s.layers = {disc_layer(9.0, 0.5, 0.5, 0.2, 1)};
  EXPECT_THROW(s.validate(), ConfigError);  // behind the background
  s.layers = std::vector<SceneLayer>(5, disc_layer(2.0, 0.5, 0.5, 0.2, 1));
  EXPECT_THROW(s.validate(), ConfigError);
  s.layers = {disc_layer(2.0, 1.5, 0.5, 0.2, 1)};
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(Scene, SamplerInvariants) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const SceneSpec s = sample_scene(seed, 32);
    ASSERT_NO_THROW(s.validate());
    ASSERT_GE(s.layers.size(), 1u);
    int at_focus = 0;
    for (const auto& l : s.layers) at_focus += l.depth == s.focus_depth;
    EXPECT_EQ(at_focus, 1);
  }
}

TEST(Pair, DeterministicAndConsistent) {
  const auto a = render_pair(sample_scene(9, 32));
  const auto b = render_pair(sample_scene(9, 32));
  EXPECT_TRUE(a.input_rgbd == b.input_rgbd);
  EXPECT_TRUE(a.target == b.target);
  EXPECT_EQ(a.input_rgbd.shape(), (Shape{4, 32, 32}));
  EXPECT_EQ(a.target.shape(), (Shape{3, 64, 64}));
  for (float v : a.input_rgbd.data()) {
    ASSERT_GE(v, -1.f);
    ASSERT_LE(v, 1.f);
  }
  auto p = a;
  p.build_level_targets(4);
  EXPECT_EQ(p.level_targets[2].shape(), (Shape{3, 16, 16}));
  EXPECT_EQ(p.level_targets[4].shape(), (Shape{3, 4, 4}));
  EXPECT_TRUE(p.level_targets[2] == box_downsample2(box_downsample2(a.target)));
}

TEST(Pair, DepthNormalization) {
  EXPECT_EQ(normalize_depth(1.0), -1.0);
  EXPECT_EQ(normalize_depth(10.0), 1.0);
  EXPECT_DOUBLE_EQ(normalize_depth(5.5), 0.0);
}
