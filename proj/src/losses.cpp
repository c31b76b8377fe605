#include "bokeh/losses.hpp"

#include <cmath>
#include <string>

#include "bokeh/ops.hpp"
#include "bokeh/rng.hpp"

namespace bokeh {

void SsimParams::validate() const {
  if (window_size < 1 || window_size % 2 == 0) throw ConfigError("SsimParams: window_size must be odd");
  if (!(gaussian_sigma > 0.0)) throw ConfigError("SsimParams: gaussian_sigma must be > 0");
  if (!(k1 > 0.0 && k2 > 0.0 && dynamic_range > 0.0)) throw ConfigError("SsimParams: constants must be > 0");
}

std::vector<double> gaussian_window_1d(const SsimParams& params) {
  params.validate();
  const int n = params.window_size;
  const int half = n / 2;
  std::vector<double> g(static_cast<std::size_t>(n));
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = i - half;
    g[static_cast<std::size_t>(i)] = std::exp(-(d * d) / (2.0 * params.gaussian_sigma * params.gaussian_sigma));
    total += g[static_cast<std::size_t>(i)];
  }
  for (double& v : g) v /= total;
  return g;
}

namespace {

// Separable "valid" Gaussian filtering of an h x w plane.
std::vector<double> filter_valid(const std::vector<double>& plane, std::size_t h, std::size_t w,
                                 const std::vector<double>& g) {
  const std::size_t n = g.size(), oh = h - n + 1, ow = w - n + 1;
  std::vector<double> tmp(h * ow, 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += g[j] * plane[y * w + x + j];
      tmp[y * ow + x] = s;
    }
  }
  std::vector<double> out(oh * ow, 0.0);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t i = 0; i < n; ++i) {
      const double gi = g[i];
      const double* src = tmp.data() + (y + i) * ow;
      double* dst = out.data() + y * ow;
      for (std::size_t x = 0; x < ow; ++x) dst[x] += gi * src[x];
    }
  }
  return out;
}

// Adjoint of filter_valid: spreads an oh x ow map back to h x w.
std::vector<double> filter_adjoint(const std::vector<double>& map, std::size_t h, std::size_t w,
                                   const std::vector<double>& g) {
  const std::size_t n = g.size(), oh = h - n + 1, ow = w - n + 1;
  std::vector<double> tmp(h * ow, 0.0);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t i = 0; i < n; ++i) {
      const double gi = g[i];
      const double* src = map.data() + y * ow;
      double* dst = tmp.data() + (y + i) * ow;
      for (std::size_t x = 0; x < ow; ++x) dst[x] += gi * src[x];
    }
  }
  std::vector<double> out(h * w, 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      const double v = tmp[y * ow + x];
      for (std::size_t j = 0; j < n; ++j) out[y * w + x + j] += g[j] * v;
    }
  }
  return out;
}

struct SsimChannel {
  double sum = 0.0;  // sum of the SSIM map over valid positions
  // Per-position coefficients of dS/dx and dS/dy (see ssim backward).
  std::vector<double> ax, bx, ay, by, c;
};

template <class T>
SsimChannel ssim_channel(const T* xp, const T* yp, std::size_t h, std::size_t w, const std::vector<double>& g,
                         const SsimParams& params, bool want_grad) {
  const std::size_t n = h * w;
  std::vector<double> x(xp, xp + n), y(yp, yp + n), xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, h, w, g);
  const auto my = filter_valid(y, h, w, g);
  const auto fxx = filter_valid(xx, h, w, g);
  const auto fyy = filter_valid(yy, h, w, g);
  const auto fxy = filter_valid(xy, h, w, g);
  const double c1 = (params.k1 * params.dynamic_range) * (params.k1 * params.dynamic_range);
  const double c2 = (params.k2 * params.dynamic_range) * (params.k2 * params.dynamic_range);

  SsimChannel out;
  const std::size_t m = mx.size();
  if (want_grad) {
    out.ax.resize(m);
    out.bx.resize(m);
    out.ay.resize(m);
    out.by.resize(m);
    out.c.resize(m);
  }
  for (std::size_t i = 0; i < m; ++i) {
    const double sxx = fxx[i] - mx[i] * mx[i];
    const double syy = fyy[i] - my[i] * my[i];
    const double sxy = fxy[i] - mx[i] * my[i];
    const double a1 = 2.0 * mx[i] * my[i] + c1;
    const double a2 = 2.0 * sxy + c2;
    const double b1 = mx[i] * mx[i] + my[i] * my[i] + c1;
    const double b2 = sxx + syy + c2;
    const double s = (a1 * a2) / (b1 * b2);
    out.sum += s;
    if (!want_grad) continue;
    // Partial derivatives treating the local statistics as independent.
    const double d_mx = 2.0 * my[i] * a2 / (b1 * b2) - s * 2.0 * mx[i] / b1;
    const double d_my = 2.0 * mx[i] * a2 / (b1 * b2) - s * 2.0 * my[i] / b1;
    const double d_var = -s / b2;
    const double d_cov = 2.0 * a1 / (b1 * b2);
    out.ax[i] = d_mx - 2.0 * mx[i] * d_var - my[i] * d_cov;
    out.ay[i] = d_my - 2.0 * my[i] * d_var - mx[i] * d_cov;
    out.bx[i] = d_var;
    out.by[i] = d_var;
    out.c[i] = d_cov;
  }
  return out;
}

template <class T>
void check_ssim_inputs(const Tensor<T>& x, const Tensor<T>& y, const SsimParams& params) {
  require_same_shape(x.shape(), y.shape(), "ssim");
  if (x.rank() != 3) throw ShapeError("ssim: inputs must be channels x height x width");
  params.validate();
  const auto win = static_cast<std::size_t>(params.window_size);
  if (x.height() < win || x.width() < win) {
    throw ShapeError("ssim: image " + to_string(x.shape()) + " is smaller than the " + std::to_string(win) +
                     "-pixel window");
  }
}

}  // namespace

template <class T>
double ssim_value(const Tensor<T>& x, const Tensor<T>& y, const SsimParams& params) {
  check_ssim_inputs(x, y, params);
  const auto g = gaussian_window_1d(params);
  const std::size_t h = x.height(), w = x.width(), win = g.size();
  double total = 0.0;
  for (std::size_t c = 0; c < x.channels(); ++c) {
    total += ssim_channel(x.plane(c), y.plane(c), h, w, g, params, false).sum;
  }
  return total / static_cast<double>(x.channels() * (h - win + 1) * (w - win + 1));
}

namespace ad {

template <class T>
Var<T> ssim(const Var<T>& x, const Var<T>& y, const SsimParams& params) {
  const double value = ssim_value(x.value(), y.value(), params);
  Tensor<T> out({1}, static_cast<T>(value));
  check_finite(out, "ssim");
  auto bw = [params](Node<T>& self) {
    Node<T>& nx = *self.inputs[0];
    Node<T>& ny = *self.inputs[1];
    const Tensor<T>& xv = nx.value;
    const Tensor<T>& yv = ny.value;
    const auto g = gaussian_window_1d(params);
    const std::size_t h = xv.height(), w = xv.width(), win = g.size();
    const double count = static_cast<double>(xv.channels() * (h - win + 1) * (w - win + 1));
    const double scale = static_cast<double>(self.grad[0]) / count;
    for (std::size_t c = 0; c < xv.channels(); ++c) {
      const T* xp = xv.plane(c);
      const T* yp = yv.plane(c);
      SsimChannel ch = ssim_channel(xp, yp, h, w, g, params, true);
      const auto fc = filter_adjoint(ch.c, h, w, g);
      if (nx.requires_grad) {
        const auto fa = filter_adjoint(ch.ax, h, w, g);
        const auto fb = filter_adjoint(ch.bx, h, w, g);
        T* gx = nx.grad_buffer().plane(c);
        for (std::size_t i = 0; i < h * w; ++i) {
          gx[i] += static_cast<T>(scale * (fa[i] + 2.0 * xp[i] * fb[i] + yp[i] * fc[i]));
        }
      }
      if (ny.requires_grad) {
        const auto fa = filter_adjoint(ch.ay, h, w, g);
        const auto fb = filter_adjoint(ch.by, h, w, g);
        T* gy = ny.grad_buffer().plane(c);
        for (std::size_t i = 0; i < h * w; ++i) {
          gy[i] += static_cast<T>(scale * (fa[i] + 2.0 * yp[i] * fb[i] + xp[i] * fc[i]));
        }
      }
    }
  };
  return make_result<T>(std::move(out), {x, y}, std::move(bw));
}

template <class T>
Var<T> l1_loss(const Var<T>& pred, const Var<T>& target) {
  return mean_abs_diff(pred, target);
}

template <class T>
Var<T> feature_loss(const Var<T>& pred, const Var<T>& target, const FeatureExtractor<T>& extractor) {
  require_same_shape(pred.shape(), target.shape(), "feature_loss");
  Var<T> fp = extractor.extract(pred);
  Var<T> ft = extractor.extract(constant(target.value()));
  return mean_sq_diff(fp, ft);
}

}  // namespace ad

template <class T>
FeatureExtractor<T>::FeatureExtractor(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t channels[kStages + 1] = {3, 8, 16, 32};
  for (int s = 0; s < kStages; ++s) {
    const std::size_t in = channels[s], out = channels[s + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>((in + out) * 9));
    Tensor<T> w({out, in, 3, 3});
    for (auto& v : w.data()) v = static_cast<T>(rng.uniform(-bound, bound));
    weights_.push_back(std::move(w));
    biases_.emplace_back(Shape{out});
  }
}

template <class T>
ad::Var<T> FeatureExtractor<T>::extract(const ad::Var<T>& image) const {
  const Shape& s = image.shape();
  if (s.size() != 3 || s[0] != 3 || s[1] < 32 || s[2] < 32 || s[1] % 8 || s[2] % 8) {
    throw ShapeError("feature extractor: expects 3 x H x W with H, W >= 32 and multiples of 8, got " +
                     to_string(s));
  }
  ad::Var<T> x = image;
  for (int i = 0; i < kStages; ++i) {
    const auto si = static_cast<std::size_t>(i);
    x = ad::conv2d(x, ad::constant(weights_[si]), ad::constant(biases_[si]), 1, 1);
    x = ad::maxpool2(ad::leaky_relu(x, static_cast<T>(0.2)));
  }
  return x;
}

template <class T>
Level1Loss<T> level1_loss(const ad::Var<T>& pred, const ad::Var<T>& target, const FeatureExtractor<T>& extractor,
                          const SsimParams& params) {
  Level1Loss<T> r;
  ad::Var<T> l1 = ad::l1_loss(pred, target);
  ad::Var<T> s = ad::ssim(pred, target, params);
  ad::Var<T> f = ad::feature_loss(pred, target, extractor);
  r.total = ad::add(ad::add(l1, ad::affine(s, T{-1}, T{1})),
                    ad::affine(f, static_cast<T>(kFeatureLossWeight), T{0}));
  r.l1 = l1.value()[0];
  r.ssim = s.value()[0];
  r.feature = f.value()[0];
  return r;
}

template <class T>
Tensor<T> to_unit_range(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = T{0.5} * x[i] + T{0.5};
  return out;
}

template <class T>
double psnr(const Tensor<T>& pred, const Tensor<T>& target, double peak) {
  require_same_shape(pred.shape(), target.shape(), "psnr");
  if (!(peak > 0.0)) throw ConfigError("psnr: peak must be > 0");
  double mse = 0.0;
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    const double d = static_cast<double>(pred[i]) - target[i];
    mse += d * d;
  }
  mse /= static_cast<double>(pred.numel());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

#define BOKEH_INSTANTIATE_LOSSES(T)                                                                  \
  template class FeatureExtractor<T>;                                                                \
  template double ssim_value<T>(const Tensor<T>&, const Tensor<T>&, const SsimParams&);              \
  template ad::Var<T> ad::ssim<T>(const ad::Var<T>&, const ad::Var<T>&, const SsimParams&);          \
  template ad::Var<T> ad::l1_loss<T>(const ad::Var<T>&, const ad::Var<T>&);                          \
  template ad::Var<T> ad::feature_loss<T>(const ad::Var<T>&, const ad::Var<T>&,                      \
                                          const FeatureExtractor<T>&);                               \
  template Level1Loss<T> level1_loss<T>(const ad::Var<T>&, const ad::Var<T>&,                        \
                                        const FeatureExtractor<T>&, const SsimParams&);              \
  template Tensor<T> to_unit_range<T>(const Tensor<T>&);                                             \
  template double psnr<T>(const Tensor<T>&, const Tensor<T>&, double);

BOKEH_INSTANTIATE_LOSSES(float)
BOKEH_INSTANTIATE_LOSSES(double)

}  // namespace bokeh
