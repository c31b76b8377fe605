#include <gtest/gtest.h>

#include "bokeh/losses.hpp"
#include "oracles.hpp"

using namespace bokeh;

TEST(GaussianWindow, NormalizedAndSymmetric) {
  const auto g = gaussian_window_1d({});
  ASSERT_EQ(g.size(), 11u);
  double s = 0;
  for (double v : g) s += v;
  EXPECT_NEAR(s, 1.0, 1e-15);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(g[i], g[10 - i]);
  EXPECT_NEAR(g[5] / g[6], std::exp(1.0 / (2 * 1.5 * 1.5)), 1e-12);
}

TEST(Ssim, MatchesDirectWindowedSum) {
  std::mt19937_64 gen(21);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t h = std::size_t(oracle::random_int(gen, 11, 18)), w = std::size_t(oracle::random_int(gen, 11, 18));
    const auto a = oracle::random_tensor({3, h, w}, gen, 0, 1);
    auto b = a;
    for (auto& v : b.data()) v = std::clamp(v + 0.2 * (oracle::random_tensor({1}, gen)[0]), 0.0, 1.0);
    EXPECT_NEAR(ssim_value(a, b), oracle::ssim(a, b), 1e-10);
  }
}

TEST(Ssim, IdenticalImagesScoreOne) {
  std::mt19937_64 gen(22);
  const auto a = oracle::random_tensor({3, 16, 16}, gen, 0, 1);
  EXPECT_NEAR(ssim_value(a, a), 1.0, 1e-12);
}

TEST(Ssim, TooSmallOrBadParamsThrow) {
  const Tensor<double> a({1, 8, 20});
  EXPECT_THROW(ssim_value(a, a), ShapeError);
  SsimParams p;
  p.window_size = 4;
  EXPECT_THROW(p.validate(), ConfigError);
}

TEST(Psnr, KnownValuesAndCap) {
  Tensor<double> a({1, 2, 2}, 0.5), b({1, 2, 2}, 0.6);
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);  // MSE 0.01
  EXPECT_EQ(psnr(a, a), kPsnrCap);
  EXPECT_NEAR(psnr(a, b, 2.0), 20.0 + 20.0 * std::log10(2.0), 1e-9);
  std::mt19937_64 gen(23);
  const auto x = oracle::random_tensor({3, 5, 7}, gen, 0, 1), y = oracle::random_tensor({3, 5, 7}, gen, 0, 1);
  EXPECT_NEAR(psnr(x, y), oracle::psnr(x, y), 1e-10);
}

TEST(Losses, GradientsMatchFiniteDifferences) {
  std::mt19937_64 gen(24);
  const FeatureExtractor<double> fx;
  auto x = ad::leaf(oracle::random_tensor({3, 32, 32}, gen, 0.1, 0.9));
  auto y = ad::leaf(oracle::random_tensor({3, 32, 32}, gen, 0.1, 0.9));
  // Keep |x - target| away from the kink of the absolute value.
  Tensor<double> t = x.value();
  std::uniform_real_distribution<double> off(0.05, 0.2);
  for (auto& v : t.data()) v += (gen() & 1 ? 1 : -1) * off(gen);
  const auto tgt = ad::constant(t);
  EXPECT_LE(oracle::check_gradients([&] { return ad::ssim(x, y); }, {x, y}, gen).worst_rel, 1e-4);
  EXPECT_LE(oracle::check_gradients([&] { return ad::l1_loss(x, tgt); }, {x}, gen).worst_rel, 1e-4);
  EXPECT_LE(oracle::check_gradients([&] { return ad::feature_loss(x, tgt, fx); }, {x}, gen).worst_rel, 1e-4);
  EXPECT_LE(oracle::check_gradients([&] { return level1_loss(x, tgt, fx).total; }, {x}, gen).worst_rel, 1e-4);
}

TEST(Losses, Level1LossIsTheStatedSum) {
  std::mt19937_64 gen(25);
  const FeatureExtractor<double> fx;
  const auto x = ad::constant(oracle::random_tensor({3, 32, 32}, gen, 0, 1));
  const auto y = ad::constant(oracle::random_tensor({3, 32, 32}, gen, 0, 1));
  const auto parts = level1_loss(x, y, fx);
  EXPECT_NEAR(parts.total.value()[0], parts.l1 + (1 - parts.ssim) + 0.01 * parts.feature, 1e-12);
  EXPECT_NEAR(parts.ssim, oracle::ssim(x.value(), y.value()), 1e-10);
  double l1 = 0;
  for (std::size_t i = 0; i < x.value().numel(); ++i) l1 += std::abs(x.value()[i] - y.value()[i]);
  EXPECT_NEAR(parts.l1, l1 / double(x.value().numel()), 1e-12);
  EXPECT_NEAR(level1_loss(x, x, fx).total.value()[0], 0.0, 1e-12);
}

TEST(FeatureExtractor, FrozenDeterministicAndShaped) {
  const FeatureExtractor<double> a, b;
  ASSERT_EQ(a.weights().size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_TRUE(a.weights()[i] == b.weights()[i]);
  const FeatureExtractor<double> other(1);
  EXPECT_FALSE(a.weights()[0] == other.weights()[0]);
  const auto f = a.extract(ad::constant(Tensor<double>({3, 32, 40}, 0.3)));
  EXPECT_EQ(f.shape(), (Shape{32, 4, 5}));
  EXPECT_THROW(ad::feature_loss(ad::constant(Tensor<double>({3, 20, 20})), ad::constant(Tensor<double>({3, 20, 20})), a),
               ShapeError);
}

TEST(Losses, FeatureLossIgnoresTargetGradient) {
  std::mt19937_64 gen(26);
  const FeatureExtractor<double> fx;
  auto x = ad::leaf(oracle::random_tensor({3, 32, 32}, gen, 0, 1));
  auto y = ad::leaf(oracle::random_tensor({3, 32, 32}, gen, 0, 1));
  ad::backward(ad::feature_loss(x, y, fx));
  EXPECT_TRUE(x.has_grad());
  EXPECT_FALSE(y.has_grad());
}

TEST(UnitRange, MapsModelRange) {
  const Tensor<double> t({3}, std::vector<double>{-1.0, 0.0, 1.0});
  const auto u = to_unit_range(t);
  EXPECT_EQ(u[0], 0.0);
  EXPECT_EQ(u[1], 0.5);
  EXPECT_EQ(u[2], 1.0);
}
