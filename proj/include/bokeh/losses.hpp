#pragma once

#include <cstdint>
#include <vector>

#include "bokeh/autodiff.hpp"
#include "bokeh/ops.hpp"

namespace bokeh {

// Gaussian-window SSIM constants. Images are expected in [0, 1].
struct SsimParams {
  int window_size = 11;
  double gaussian_sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;

  void validate() const;
};

// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
std::vector<double> gaussian_window_1d(const SsimParams& params);

namespace ad {

// Mean SSIM over all valid window positions and channels.
template <class T>
Var<T> ssim(const Var<T>& x, const Var<T>& y, const SsimParams& params = {});

}  // namespace ad

// Frozen convolutional feature extractor used by the perceptual term:
// three stages of 3x3 conv (3->8->16->32) + leaky ReLU + 2x2 max pooling,
// weights drawn once from a fixed seed.
template <class T>
class FeatureExtractor {
 public:
  static constexpr std::uint64_t kDefaultSeed = 0xFEA7;
  static constexpr int kStages = 3;

  explicit FeatureExtractor(std::uint64_t seed = kDefaultSeed);

  // Final-stage features of a 3-channel image whose sides are multiples of 8.
  ad::Var<T> extract(const ad::Var<T>& image) const;

  const std::vector<Tensor<T>>& weights() const { return weights_; }
  const std::vector<Tensor<T>>& biases() const { return biases_; }

 private:
  std::vector<Tensor<T>> weights_;
  std::vector<Tensor<T>> biases_;
};

namespace ad {

template <class T>
Var<T> l1_loss(const Var<T>& pred, const Var<T>& target);

// Mean squared difference of the extractor's final-stage features.
// Gradient flows into `pred` only.
template <class T>
Var<T> feature_loss(const Var<T>& pred, const Var<T>& target, const FeatureExtractor<T>& extractor);

}  // namespace ad

template <class T>
struct Level1Loss {
  ad::Var<T> total;
  double l1 = 0.0;
  double ssim = 0.0;
  double feature = 0.0;
};

inline constexpr double kFeatureLossWeight = 0.01;

// L1 + (1 - SSIM) + 0.01 * feature, on images already mapped to [0, 1].
template <class T>
Level1Loss<T> level1_loss(const ad::Var<T>& pred, const ad::Var<T>& target, const FeatureExtractor<T>& extractor,
                          const SsimParams& params = {});

// Maps model range [-1, 1] to [0, 1].
template <class T>
ad::Var<T> to_unit_range(const ad::Var<T>& x) {
  return ad::affine(x, T{0.5}, T{0.5});
}
template <class T>
Tensor<T> to_unit_range(const Tensor<T>& x);

// Plain metric helpers (no graph).
inline constexpr double kPsnrCap = 99.0;

// 10 log10(peak^2 / MSE), capped at kPsnrCap (returned for MSE == 0).
template <class T>
double psnr(const Tensor<T>& pred, const Tensor<T>& target, double peak = 1.0);

template <class T>
double ssim_value(const Tensor<T>& x, const Tensor<T>& y, const SsimParams& params = {});

}  // namespace bokeh
