#include <gtest/gtest.h>

#include "bokeh/ops.hpp"
#include "oracles.hpp"

using namespace bokeh;
using ad::Var;

namespace {

Var<double> leaf_of(const Tensor<double>& t) { return ad::leaf(t); }

struct ConvCase {
  std::size_t c, o, h, w;
  int k, stride, pad;
};

ConvCase random_conv_case(std::mt19937_64& gen) {
  for (;;) {
    ConvCase cc;
    cc.c = std::size_t(oracle::random_int(gen, 1, 4));
    cc.o = std::size_t(oracle::random_int(gen, 1, 4));
    cc.k = 2 * oracle::random_int(gen, 0, 2) + 1;
    cc.stride = oracle::random_int(gen, 1, 2);
    cc.pad = oracle::random_int(gen, 0, cc.k / 2);
    cc.h = std::size_t(oracle::random_int(gen, cc.k, 9));
    cc.w = std::size_t(oracle::random_int(gen, cc.k, 9));
    const long span_h = long(cc.h) + 2 * cc.pad - cc.k, span_w = long(cc.w) + 2 * cc.pad - cc.k;
    if (span_h >= 0 && span_w >= 0 && span_h % cc.stride == 0 && span_w % cc.stride == 0) return cc;
  }
}

}  // namespace

TEST(Conv2d, MatchesDirectLoop) {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 40; ++trial) {
    const ConvCase cc = random_conv_case(gen);
    const auto x = oracle::random_tensor({cc.c, cc.h, cc.w}, gen);
    const auto w = oracle::random_tensor({cc.o, cc.c, std::size_t(cc.k), std::size_t(cc.k)}, gen);
    const auto b = oracle::random_tensor({cc.o}, gen);
    const auto got = ad::conv2d(ad::constant(x), ad::constant(w), ad::constant(b), cc.stride, cc.pad).value();
    EXPECT_LE(oracle::max_abs_diff(got, oracle::conv2d(x, w, b, cc.stride, cc.pad)), 1e-12) << "trial " << trial;
  }
}

TEST(Conv2d, RejectsNonIntegralExtent) {
  const auto x = ad::constant(Tensor<double>({1, 6, 6}));
  const auto w = ad::constant(Tensor<double>({1, 1, 3, 3}));
  const auto b = ad::constant(Tensor<double>({1}));
  EXPECT_THROW(ad::conv2d(x, w, b, 2, 1), ShapeError);  // (6 + 2 - 3) / 2 is not whole
  EXPECT_NO_THROW(ad::conv2d(x, w, b, 1, 1));
  EXPECT_THROW(ad::conv2d(x, ad::constant(Tensor<double>({1, 2, 3, 3})), b, 1, 1), ShapeError);
}

TEST(Conv2d, GradientsMatchFiniteDifferences) {
  std::mt19937_64 gen(12);
  for (int trial = 0; trial < 6; ++trial) {
    const ConvCase cc = random_conv_case(gen);
    auto x = leaf_of(oracle::random_tensor({cc.c, cc.h, cc.w}, gen));
    auto w = leaf_of(oracle::random_tensor({cc.o, cc.c, std::size_t(cc.k), std::size_t(cc.k)}, gen));
    auto b = leaf_of(oracle::random_tensor({cc.o}, gen));
    const auto probe = oracle::random_tensor(ad::conv2d(x, w, b, cc.stride, cc.pad).shape(), gen);
    const auto r = oracle::check_gradients([&] { return oracle::probe(ad::conv2d(x, w, b, cc.stride, cc.pad), probe); },
                                           {x, w, b}, gen);
    EXPECT_LE(r.worst_rel, 1e-4);
  }
}

TEST(ConvTranspose, MatchesScatterLoop) {
  std::mt19937_64 gen(13);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t c = std::size_t(oracle::random_int(gen, 1, 4)), o = std::size_t(oracle::random_int(gen, 1, 4));
    const int k = oracle::random_int(gen, 1, 3);
    const auto x = oracle::random_tensor({c, std::size_t(oracle::random_int(gen, 1, 6)),
                                          std::size_t(oracle::random_int(gen, 1, 6))}, gen);
    const auto w = oracle::random_tensor({c, o, std::size_t(k), std::size_t(k)}, gen);
    const auto b = oracle::random_tensor({o}, gen);
    const auto got = ad::conv2d_transpose(ad::constant(x), ad::constant(w), ad::constant(b), k).value();
    EXPECT_LE(oracle::max_abs_diff(got, oracle::conv2d_transpose(x, w, b, k)), 1e-12);
  }
}

TEST(ConvTranspose, KernelMustEqualStride) {
  const auto x = ad::constant(Tensor<double>({1, 3, 3}));
  const auto w = ad::constant(Tensor<double>({1, 1, 3, 3}));
  const auto b = ad::constant(Tensor<double>({1}));
  try {
    ad::conv2d_transpose(x, w, b, 2);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("unsupported configuration"), std::string::npos);
  }
}

TEST(ConvTranspose, GradientsMatchFiniteDifferences) {
  std::mt19937_64 gen(14);
  for (int k = 1; k <= 3; ++k) {
    auto x = leaf_of(oracle::random_tensor({3, 3, 4}, gen));
    auto w = leaf_of(oracle::random_tensor({3, 2, std::size_t(k), std::size_t(k)}, gen));
    auto b = leaf_of(oracle::random_tensor({2}, gen));
    const auto probe = oracle::random_tensor(ad::conv2d_transpose(x, w, b, k).shape(), gen);
    const auto r = oracle::check_gradients([&] { return oracle::probe(ad::conv2d_transpose(x, w, b, k), probe); },
                                           {x, w, b}, gen);
    EXPECT_LE(r.worst_rel, 1e-4);
  }
}

TEST(MaxPool, MatchesLoopAndRoutesTiesToFirst) {
  std::mt19937_64 gen(15);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = oracle::random_tensor({2, 2 * std::size_t(oracle::random_int(gen, 1, 4)),
                                          2 * std::size_t(oracle::random_int(gen, 1, 4))}, gen);
    EXPECT_EQ(oracle::max_abs_diff(ad::maxpool2(ad::constant(x)).value(), oracle::maxpool2(x)), 0.0);
  }
  auto x = ad::leaf(Tensor<double>({1, 2, 2}, 1.0));
  ad::backward(ad::sum(ad::maxpool2(x)));
  const auto g = x.grad();
  EXPECT_EQ(g[0], 1.0);
  EXPECT_EQ(g[1] + g[2] + g[3], 0.0);
  EXPECT_THROW(ad::maxpool2(ad::constant(Tensor<double>({1, 3, 4}))), ShapeError);
}

TEST(Elementwise, LeakyReluAndTanh) {
  auto x = ad::constant(Tensor<double>({1, 1, 3}, std::vector<double>{-2.0, 0.0, 3.0}));
  const auto y = ad::leaky_relu(x, 0.2).value();
  EXPECT_DOUBLE_EQ(y[0], -0.4);
  EXPECT_DOUBLE_EQ(y[1], 0.0);
  EXPECT_DOUBLE_EQ(y[2], 3.0);
  EXPECT_THROW(ad::leaky_relu(x, 1.5), ConfigError);
  EXPECT_DOUBLE_EQ(ad::tanh_act(x).value()[2], std::tanh(3.0));

  // Saturated inputs stay strictly inside (-1, 1).
  const auto big = ad::constant(Tensor<float>({1, 1, 2}, std::vector<float>{-40.f, 40.f}));
  const auto t = ad::tanh_act(big).value();
  EXPECT_GT(t[0], -1.0f);
  EXPECT_LT(t[1], 1.0f);
  EXPECT_EQ(t[1], std::nextafter(1.0f, 0.0f));
}

TEST(InstanceNorm, StandardizesEachChannel) {
  std::mt19937_64 gen(16);
  const auto x = oracle::random_tensor({3, 4, 5}, gen, -3, 5);
  const auto y = ad::instance_norm(ad::constant(x), ad::constant(Tensor<double>({3}, 1.0)),
                                   ad::constant(Tensor<double>({3}, 0.0)), 0.0)
                     .value();
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0, v = 0;
    for (std::size_t q = 0; q < 20; ++q) m += y[c * 20 + q] / 20;
    for (std::size_t q = 0; q < 20; ++q) v += (y[c * 20 + q] - m) * (y[c * 20 + q] - m) / 20;
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v, 1.0, 1e-12);
  }
  EXPECT_THROW(ad::instance_norm(ad::constant(Tensor<double>({1, 1, 1})), ad::constant(Tensor<double>({1}, 1.0)),
                                 ad::constant(Tensor<double>({1})), 1e-5),
               ShapeError);
}

TEST(Ops, NonFiniteOutputThrows) {
  Tensor<double> t({1, 2, 2}, 1.0);
  t[1] = NAN;
  EXPECT_THROW(ad::affine(ad::constant(t), 1.0, 0.0), NumericError);
}

TEST(Ops, SmallOpsGradients) {
  std::mt19937_64 gen(17);
  auto a = leaf_of(oracle::random_tensor({2, 3, 4}, gen));
  auto b = leaf_of(oracle::random_tensor({2, 3, 4}, gen));
  auto c = leaf_of(oracle::random_tensor({3, 3, 4}, gen));
  auto gamma = leaf_of(oracle::random_tensor({2}, gen));
  auto beta = leaf_of(oracle::random_tensor({2}, gen));
  const auto p2 = oracle::random_tensor({2, 3, 4}, gen);
  const auto p5 = oracle::random_tensor({5, 3, 4}, gen);
  const std::vector<std::pair<const char*, std::function<Var<double>()>>> cases = {
      {"leaky_relu", [&] { return oracle::probe(ad::leaky_relu(a, 0.2), p2); }},
      {"tanh", [&] { return oracle::probe(ad::tanh_act(a), p2); }},
      {"instance_norm", [&] { return oracle::probe(ad::instance_norm(a, gamma, beta, 1e-5), p2); }},
      {"concat", [&] { return oracle::probe(ad::concat_channels(a, c), p5); }},
      {"slice", [&] { return oracle::probe(ad::slice_channels(c, 1, 2), p2); }},
      {"add", [&] { return oracle::probe(ad::add(a, b), p2); }},
      {"sub", [&] { return oracle::probe(ad::sub(a, b), p2); }},
      {"affine", [&] { return oracle::probe(ad::affine(a, 0.7, -0.1), p2); }},
      {"sum", [&] { return ad::sum(ad::tanh_act(a)); }},
      {"mean", [&] { return ad::mean(ad::tanh_act(a)); }},
      {"mean_abs_diff", [&] { return ad::mean_abs_diff(a, b); }},
      {"mean_sq_diff", [&] { return ad::mean_sq_diff(a, b); }},
  };
  for (const auto& [name, f] : cases) {
    const auto r = oracle::check_gradients(f, {a, b, c, gamma, beta}, gen);
    EXPECT_LE(r.worst_rel, 1e-4) << name;
  }
}

TEST(Ops, ShapeMismatchesThrow) {
  auto a = ad::constant(Tensor<double>({1, 2, 2}));
  auto b = ad::constant(Tensor<double>({1, 2, 3}));
  EXPECT_THROW(ad::add(a, b), ShapeError);
  EXPECT_THROW(ad::concat_channels(a, b), ShapeError);
  EXPECT_THROW(ad::slice_channels(a, 1, 1), ShapeError);
}
