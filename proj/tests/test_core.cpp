#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "bokeh/adam.hpp"
#include "bokeh/autodiff.hpp"
#include "bokeh/ops.hpp"
#include "bokeh/rng.hpp"
#include "oracles.hpp"

using namespace bokeh;

TEST(Tensor, RejectsZeroExtentAndLengthMismatch) {
  EXPECT_THROW(Tensor<float>({3, 0, 2}), ShapeError);
  EXPECT_THROW(Tensor<float>({2, 2}, std::vector<float>(3)), ShapeError);
  Tensor<double> t({2, 3, 4}, 1.5);
  EXPECT_EQ(t.numel(), 24u);
  EXPECT_EQ(t.channels(), 2u);
  EXPECT_EQ(t.at(1, 2, 3), 1.5);
}

TEST(Tensor, RowMajorLayout) {
  Tensor<double> t({2, 2, 3});
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = double(i);
  EXPECT_EQ(t.at(1, 0, 2), 8.0);
  EXPECT_EQ(t.plane(1)[4], 10.0);
}

TEST(Tensor, FiniteCheck) {
  Tensor<float> t({4}, 0.f);
  EXPECT_NO_THROW(check_finite(t, "x"));
  t[2] = NAN;
  EXPECT_THROW(check_finite(t, "x"), NumericError);
  t[2] = INFINITY;
  EXPECT_FALSE(all_finite<float>(t.data()));
}

TEST(Autodiff, BackwardRequiresScalar) {
  auto x = ad::leaf(Tensor<double>({2}, 1.0));
  EXPECT_THROW(ad::backward(ad::affine(x, 2.0, 0.0)), ShapeError);
}

TEST(Autodiff, LeafGradsAccumulateUntilZeroed) {
  auto x = ad::leaf(Tensor<double>({1, 1, 3}, 2.0));
  ad::backward(ad::sum(ad::affine(x, 3.0, 1.0)));
  ad::backward(ad::sum(ad::affine(x, 3.0, 1.0)));
  const auto g = x.grad();
  for (double v : g.data()) EXPECT_EQ(v, 6.0);
  x.zero_grad();
  EXPECT_EQ(x.grad()[0], 0.0);
}

TEST(Autodiff, SharedSubexpressionGetsBothPaths) {
  auto x = ad::leaf(Tensor<double>({1, 2, 2}, 0.5));
  auto y = ad::affine(x, 2.0, 0.0);
  ad::backward(ad::sum(ad::add(y, y)));
  const auto g = x.grad();
  for (double v : g.data()) EXPECT_EQ(v, 4.0);
}

TEST(Autodiff, InteriorGradsResetBetweenCalls) {
  auto x = ad::leaf(Tensor<double>({1, 1, 2}, 1.0));
  auto y = ad::affine(x, 2.0, 0.0);
  auto loss = ad::sum(y);
  ad::backward(loss);
  x.zero_grad();
  ad::backward(loss);
  EXPECT_EQ(x.grad()[0], 2.0);
}

TEST(Autodiff, SeedScalesGradient) {
  auto x = ad::leaf(Tensor<double>({1, 1, 2}, 1.0));
  ad::backward(ad::sum(x), 0.25);
  EXPECT_EQ(x.grad()[1], 0.25);
}

TEST(Autodiff, ConstantsReceiveNoGradient) {
  auto c = ad::constant(Tensor<double>({1, 1, 2}, 1.0));
  auto x = ad::leaf(Tensor<double>({1, 1, 2}, 1.0));
  ad::backward(ad::sum(ad::add(c, x)));
  EXPECT_FALSE(c.has_grad());
  EXPECT_TRUE(x.has_grad());
}

TEST(Autodiff, CycleIsDetected) {
  auto x = ad::leaf(Tensor<double>({1}, 1.0));
  auto a = ad::affine(x, 1.0, 0.0);
  auto b = ad::affine(a, 1.0, 0.0);
  a.node()->inputs.push_back(b.ptr());  // a <- b <- a
  EXPECT_THROW(ad::backward(ad::sum(b)), Error);
  a.node()->inputs.clear();
}

TEST(Rng, DeterministicAndRestorable) {
  Rng a(42), b(42);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  const std::string s = a.save_state();
  const double next = a.uniform();
  Rng c;
  c.load_state(s);
  EXPECT_EQ(c.uniform(), next);
}

TEST(Rng, RangesRespected) {
  Rng r(7);
  int seen_lo = 0, seen_hi = 0;
  for (int i = 0; i < 5000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    const auto k = r.uniform_int(-2, 3);
    ASSERT_GE(k, -2);
    ASSERT_LE(k, 3);
    seen_lo += k == -2;
    seen_hi += k == 3;
  }
  EXPECT_GT(seen_lo, 0);
  EXPECT_GT(seen_hi, 0);
}

TEST(Rng, DeriveSeedSeparatesStreams) {
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
  EXPECT_EQ(derive_seed(9, 4), derive_seed(9, 4));
}

TEST(Adam, MatchesScalarReference) {
  std::mt19937_64 gen(3);
  const auto p0 = oracle::random_tensor({2, 3, 3}, gen);
  Tensor<double> p = p0;
  auto st = AdamState<double>::for_shape(p.shape());
  std::vector<oracle::ScalarAdam> ref(p.numel());
  Tensor<double> expect = p0;
  for (int t = 0; t < 25; ++t) {
    const auto g = oracle::random_tensor(p.shape(), gen);
    adam_step(p, g, st, 1e-2);
    for (std::size_t i = 0; i < p.numel(); ++i) expect[i] = ref[i].step(expect[i], g[i], 1e-2);
  }
  EXPECT_EQ(st.step, 25);
  EXPECT_LE(oracle::max_abs_diff(p, expect), 1e-12);
}

TEST(Adam, FirstStepMovesByLr) {
  // With bias correction the first update is lr * g / (|g| + eps).
  Tensor<double> p({1}, 0.0);
  auto st = AdamState<double>::for_shape(p.shape());
  adam_step(p, Tensor<double>({1}, 3.0), st, 0.1);
  EXPECT_NEAR(p[0], -0.1, 1e-8);
}

TEST(Adam, ZeroLrLeavesParamsBitwise) {
  std::mt19937_64 gen(5);
  const auto p0 = oracle::random_tensor({5}, gen).cast<float>();
  Tensor<float> p = p0;
  auto st = AdamState<float>::for_shape(p.shape());
  for (int i = 0; i < 10; ++i) adam_step(p, oracle::random_tensor({5}, gen).cast<float>(), st, 0.0);
  EXPECT_TRUE(p == p0);
}

TEST(Adam, RejectsBadInput) {
  Tensor<double> p({3});
  auto st = AdamState<double>::for_shape(p.shape());
  EXPECT_THROW(adam_step(p, Tensor<double>({4}), st, 0.1), ShapeError);
  EXPECT_THROW(adam_step(p, Tensor<double>({3}), st, -1.0), ConfigError);
}
