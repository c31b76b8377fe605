#include "bokeh/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <string>

namespace bokeh::ad {
namespace {

template <class T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using Map = Eigen::Map<MatR<T>>;
template <class T>
using CMap = Eigen::Map<const MatR<T>>;

void require_rank(const Shape& s, std::size_t rank, const char* op, const char* what) {
  if (s.size() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got " +
                     to_string(s));
  }
}

std::size_t output_extent(std::size_t in, std::size_t k, int stride, int padding, const char* op,
                          const char* dim) {
  const long num = static_cast<long>(in) + 2L * padding - static_cast<long>(k);
  if (num < 0 || num % stride != 0) {
    throw ShapeError(std::string(op) + ": non-integral output " + dim + " for extent " + std::to_string(in) +
                     ", kernel " + std::to_string(k) + ", stride " + std::to_string(stride) + ", padding " +
                     std::to_string(padding));
  }
  return static_cast<std::size_t>(num / stride + 1);
}

struct ConvGeometry {
  std::size_t channels, height, width, kernel, out_h, out_w;
  int stride, padding;
};

// Unfolds input patches into a [C*k*k, out_h*out_w] matrix.
template <class T>
void im2col(const T* in, const ConvGeometry& g, T* cols) {
  const std::size_t k = g.kernel;
  const std::size_t plane = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* src = in + c * g.height * g.width;
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        T* dst = cols + ((c * k + ki) * k + kj) * plane;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride - g.padding + static_cast<long>(ki);
          T* row = dst + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<long>(g.height)) {
            std::fill(row, row + g.out_w, T{0});
            continue;
          }
          const T* srow = src + iy * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox) * g.stride - g.padding + static_cast<long>(kj);
            row[ox] = (ix < 0 || ix >= static_cast<long>(g.width)) ? T{0} : srow[ix];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters-adds columns back into an image.
template <class T>
void col2im(const T* cols, const ConvGeometry& g, T* out) {
  const std::size_t k = g.kernel;
  const std::size_t plane = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* dst = out + c * g.height * g.width;
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        const T* src = cols + ((c * k + ki) * k + kj) * plane;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride - g.padding + static_cast<long>(ki);
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          T* drow = dst + iy * g.width;
          const T* row = src + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox) * g.stride - g.padding + static_cast<long>(kj);
            if (ix >= 0 && ix < static_cast<long>(g.width)) drow[ix] += row[ox];
          }
        }
      }
    }
  }
}

template <class T>
double sum_all(const Tensor<T>& t) {
  double s = 0.0;
  for (T v : t.data()) s += static_cast<double>(v);
  return s;
}

template <class T>
Var<T> finish(Tensor<T> out, std::vector<Var<T>> inputs, std::function<void(Node<T>&)> bw, const char* op) {
  check_finite(out, op);
  return make_result(std::move(out), std::move(inputs), std::move(bw));
}

}  // namespace

template <class T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias, int stride, int padding) {
  const char* op = "conv2d";
  const Tensor<T>& x = input.value();
  const Tensor<T>& w = weight.value();
  require_rank(x.shape(), 3, op, "input");
  require_rank(w.shape(), 4, op, "weight");
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
  if (padding < 0) throw ShapeError("conv2d: padding must be >= 0");
  const std::size_t out_ch = w.dim(0);
  if (w.dim(1) != x.channels()) {
    throw ShapeError("conv2d: weight in-channels (dim 1) is " + std::to_string(w.dim(1)) + " but input has " +
                     std::to_string(x.channels()) + " channels");
  }
  if (w.dim(2) != w.dim(3)) throw ShapeError("conv2d: kernel must be square, got " + to_string(w.shape()));
  if (bias.value().numel() != out_ch) {
    throw ShapeError("conv2d: bias length " + std::to_string(bias.value().numel()) + " does not match " +
                     std::to_string(out_ch) + " output channels (weight dim 0)");
  }
  ConvGeometry g{x.channels(), x.height(), x.width(), w.dim(2), 0, 0, stride, padding};
  g.out_h = output_extent(g.height, g.kernel, stride, padding, op, "height");
  g.out_w = output_extent(g.width, g.kernel, stride, padding, op, "width");
  const std::size_t patch = g.channels * g.kernel * g.kernel;
  const std::size_t pixels = g.out_h * g.out_w;

  Tensor<T> cols({patch, pixels});
  im2col(x.raw(), g, cols.raw());
  Tensor<T> out({out_ch, g.out_h, g.out_w});
  {
    Map<T> o(out.raw(), out_ch, pixels);
    o.noalias() = CMap<T>(w.raw(), out_ch, patch) * CMap<T>(cols.raw(), patch, pixels);
    const T* b = bias.value().raw();
    for (std::size_t oc = 0; oc < out_ch; ++oc) o.row(oc).array() += b[oc];
  }

  auto bw = [g, cols = std::move(cols), out_ch, patch, pixels](Node<T>& self) {
    const Tensor<T>& gout = self.grad;
    CMap<T> go(gout.raw(), out_ch, pixels);
    Node<T>& in = *self.inputs[0];
    Node<T>& wt = *self.inputs[1];
    Node<T>& bs = *self.inputs[2];
    if (wt.requires_grad) {
      Map<T> gw(wt.grad_buffer().raw(), out_ch, patch);
      gw.noalias() += go * CMap<T>(cols.raw(), patch, pixels).transpose();
    }
    if (bs.requires_grad) {
      T* gb = bs.grad_buffer().raw();
      // Plain loop: Eigen's vectorized sum peels by pointer alignment, which
      // would make the summation order depend on the allocator.
      for (std::size_t oc = 0; oc < out_ch; ++oc) {
        const T* row = gout.raw() + oc * pixels;
        T acc = 0;
        for (std::size_t p = 0; p < pixels; ++p) acc += row[p];
        gb[oc] += acc;
      }
    }
    if (in.requires_grad) {
      Tensor<T> gcols({patch, pixels});
      Map<T>(gcols.raw(), patch, pixels).noalias() = CMap<T>(wt.value.raw(), out_ch, patch).transpose() * go;
      col2im(gcols.raw(), g, in.grad_buffer().raw());
    }
  };
  return finish<T>(std::move(out), {input, weight, bias}, std::move(bw), op);
}

template <class T>
Var<T> conv2d_transpose(const Var<T>& input, const Var<T>& weight, const Var<T>& bias, int stride) {
  const char* op = "conv2d_transpose";
  const Tensor<T>& x = input.value();
  const Tensor<T>& w = weight.value();
  require_rank(x.shape(), 3, op, "input");
  require_rank(w.shape(), 4, op, "weight");
  if (stride < 1) throw ShapeError("conv2d_transpose: stride must be >= 1");
  if (w.dim(2) != w.dim(3) || w.dim(2) != static_cast<std::size_t>(stride)) {
    throw ConfigError("conv2d_transpose: unsupported configuration, kernel " + to_string(w.shape()) +
                      " must be square with side equal to stride " + std::to_string(stride));
  }
  const std::size_t in_ch = x.channels();
  if (w.dim(0) != in_ch) {
    throw ShapeError("conv2d_transpose: weight in-channels (dim 0) is " + std::to_string(w.dim(0)) +
                     " but input has " + std::to_string(in_ch) + " channels");
  }
  const std::size_t out_ch = w.dim(1);
  if (bias.value().numel() != out_ch) {
    throw ShapeError("conv2d_transpose: bias length " + std::to_string(bias.value().numel()) +
                     " does not match " + std::to_string(out_ch) + " output channels (weight dim 1)");
  }
  const std::size_t k = w.dim(2);
  const std::size_t h = x.height(), wd = x.width();
  const std::size_t pixels = h * wd;
  const std::size_t taps = out_ch * k * k;
  const std::size_t oh = h * k, ow = wd * k;

  Tensor<T> cols({taps, pixels});
  Map<T>(cols.raw(), taps, pixels).noalias() =
      CMap<T>(w.raw(), in_ch, taps).transpose() * CMap<T>(x.raw(), in_ch, pixels);
  Tensor<T> out({out_ch, oh, ow});
  const T* b = bias.value().raw();
  for (std::size_t o = 0; o < out_ch; ++o) {
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        const T* src = cols.raw() + ((o * k + i) * k + j) * pixels;
        for (std::size_t y = 0; y < h; ++y) {
          T* dst = out.plane(o) + (y * k + i) * ow + j;
          for (std::size_t xx = 0; xx < wd; ++xx) dst[xx * k] = src[y * wd + xx] + b[o];
        }
      }
    }
  }

  auto bw = [in_ch, out_ch, k, h, wd, pixels, taps, oh, ow](Node<T>& self) {
    const Tensor<T>& gout = self.grad;
    Node<T>& in = *self.inputs[0];
    Node<T>& wt = *self.inputs[1];
    Node<T>& bs = *self.inputs[2];
    Tensor<T> gcols({taps, pixels});
    for (std::size_t o = 0; o < out_ch; ++o) {
      for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
          T* dst = gcols.raw() + ((o * k + i) * k + j) * pixels;
          for (std::size_t y = 0; y < h; ++y) {
            const T* src = gout.plane(o) + (y * k + i) * ow + j;
            for (std::size_t xx = 0; xx < wd; ++xx) dst[y * wd + xx] = src[xx * k];
          }
        }
      }
    }
    CMap<T> gc(gcols.raw(), taps, pixels);
    if (wt.requires_grad) {
      Map<T>(wt.grad_buffer().raw(), in_ch, taps).noalias() +=
          CMap<T>(in.value.raw(), in_ch, pixels) * gc.transpose();
    }
    if (bs.requires_grad) {
      T* gb = bs.grad_buffer().raw();
      for (std::size_t o = 0; o < out_ch; ++o) {
        double s = 0.0;
        const T* p = gout.plane(o);
        for (std::size_t q = 0; q < oh * ow; ++q) s += p[q];
        gb[o] += static_cast<T>(s);
      }
    }
    if (in.requires_grad) {
      Map<T>(in.grad_buffer().raw(), in_ch, pixels).noalias() += CMap<T>(wt.value.raw(), in_ch, taps) * gc;
    }
  };
  return finish<T>(std::move(out), {input, weight, bias}, std::move(bw), op);
}

template <class T>
Var<T> maxpool2(const Var<T>& input) {
  const Tensor<T>& x = input.value();
  require_rank(x.shape(), 3, "maxpool2", "input");
  if (x.height() % 2 || x.width() % 2) {
    throw ShapeError("maxpool2: spatial extents must be even, got " + to_string(x.shape()));
  }
  const std::size_t c = x.channels(), oh = x.height() / 2, ow = x.width() / 2, w = x.width();
  Tensor<T> out({c, oh, ow});
  std::vector<std::uint32_t> arg(out.numel());
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T* src = x.plane(ch);
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx) {
        const std::size_t base = (2 * y) * w + 2 * xx;
        const std::size_t cand[4] = {base, base + 1, base + w, base + w + 1};
        std::size_t best = cand[0];
        for (int q = 1; q < 4; ++q) {
          if (src[cand[q]] > src[best]) best = cand[q];
        }
        const std::size_t o = (ch * oh + y) * ow + xx;
        out[o] = src[best];
        arg[o] = static_cast<std::uint32_t>(ch * x.height() * w + best);
      }
    }
  }
  auto bw = [arg = std::move(arg)](Node<T>& self) {
    Node<T>& in = *self.inputs[0];
    T* gi = in.grad_buffer().raw();
    const T* go = self.grad.raw();
    for (std::size_t i = 0; i < arg.size(); ++i) gi[arg[i]] += go[i];
  };
  return finish<T>(std::move(out), {input}, std::move(bw), "maxpool2");
}

template <class T>
Var<T> leaky_relu(const Var<T>& input, T alpha) {
  if (!(alpha > T{0} && alpha < T{1})) throw ConfigError("leaky_relu: alpha must lie in (0, 1)");
  const Tensor<T>& x = input.value();
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] > T{0} ? x[i] : alpha * x[i];
  auto bw = [alpha](Node<T>& self) {
    Node<T>& in = *self.inputs[0];
    T* gi = in.grad_buffer().raw();
    const T* go = self.grad.raw();
    const T* xv = in.value.raw();
    for (std::size_t i = 0, n = in.value.numel(); i < n; ++i) gi[i] += xv[i] > T{0} ? go[i] : alpha * go[i];
  };
  return finish<T>(std::move(out), {input}, std::move(bw), "leaky_relu");
}

template <class T>
Var<T> tanh_act(const Var<T>& input) {
  const Tensor<T>& x = input.value();
  Tensor<T> out(x.shape());
  // Rounding would otherwise return exactly +-1 for |x| beyond ~9 (float);
  // keep the open interval.
  const T edge = std::nextafter(T{1}, T{0});
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = std::clamp(std::tanh(x[i]), -edge, edge);
  auto bw = [](Node<T>& self) {
    Node<T>& in = *self.inputs[0];
    T* gi = in.grad_buffer().raw();
    const T* go = self.grad.raw();
    const T* y = self.value.raw();
    for (std::size_t i = 0, n = self.value.numel(); i < n; ++i) gi[i] += go[i] * (T{1} - y[i] * y[i]);
  };
  return finish<T>(std::move(out), {input}, std::move(bw), "tanh_act");
}

template <class T>
Var<T> instance_norm(const Var<T>& input, const Var<T>& gamma, const Var<T>& beta, T eps) {
  const Tensor<T>& x = input.value();
  require_rank(x.shape(), 3, "instance_norm", "input");
  const std::size_t c = x.channels(), n = x.height() * x.width();
  if (n < 2) throw ShapeError("instance_norm: needs at least 2 spatial elements, got " + to_string(x.shape()));
  if (gamma.value().numel() != c || beta.value().numel() != c) {
    throw ShapeError("instance_norm: gamma/beta length must equal channel count " + std::to_string(c));
  }
  Tensor<T> out(x.shape());
  Tensor<T> xhat(x.shape());
  std::vector<T> inv_std(c);
  const T* g = gamma.value().raw();
  const T* b = beta.value().raw();
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T* src = x.plane(ch);
    double mu = 0.0;
    for (std::size_t i = 0; i < n; ++i) mu += src[i];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = src[i] - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + static_cast<double>(eps));
    inv_std[ch] = static_cast<T>(is);
    T* xh = xhat.plane(ch);
    T* dst = out.plane(ch);
    for (std::size_t i = 0; i < n; ++i) {
      xh[i] = static_cast<T>((src[i] - mu) * is);
      dst[i] = g[ch] * xh[i] + b[ch];
    }
  }
  auto bw = [c, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& self) {
    Node<T>& in = *self.inputs[0];
    Node<T>& gm = *self.inputs[1];
    Node<T>& bt = *self.inputs[2];
    const T* gv = gm.value.raw();
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T* go = self.grad.plane(ch);
      const T* xh = xhat.plane(ch);
      double sum_g = 0.0, sum_gx = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        sum_g += go[i];
        sum_gx += static_cast<double>(go[i]) * xh[i];
      }
      if (gm.requires_grad) gm.grad_buffer()[ch] += static_cast<T>(sum_gx);
      if (bt.requires_grad) bt.grad_buffer()[ch] += static_cast<T>(sum_g);
      if (in.requires_grad) {
        T* gi = in.grad_buffer().plane(ch);
        const double scale = static_cast<double>(gv[ch]) * inv_std[ch] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
          gi[i] += static_cast<T>(scale * (static_cast<double>(n) * go[i] - sum_g - xh[i] * sum_gx));
        }
      }
    }
  };
  return finish<T>(std::move(out), {input, gamma, beta}, std::move(bw), "instance_norm");
}

template <class T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const Tensor<T>& first = parts.front().value();
  require_rank(first.shape(), 3, "concat_channels", "input");
  std::size_t total = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    const Tensor<T>& t = p.value();
    require_rank(t.shape(), 3, "concat_channels", "input");
    if (t.height() != first.height() || t.width() != first.width()) {
      throw ShapeError("concat_channels: spatial mismatch " + to_string(first.shape()) + " vs " +
                       to_string(t.shape()));
    }
    offsets.push_back(total);
    total += t.channels();
  }
  const std::size_t plane = first.height() * first.width();
  Tensor<T> out({total, first.height(), first.width()});
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Tensor<T>& t = parts[i].value();
    std::copy(t.raw(), t.raw() + t.numel(), out.raw() + offsets[i] * plane);
  }
  auto bw = [offsets, plane](Node<T>& self) {
    for (std::size_t i = 0; i < self.inputs.size(); ++i) {
      Node<T>& in = *self.inputs[i];
      if (!in.requires_grad) continue;
      T* gi = in.grad_buffer().raw();
      const T* go = self.grad.raw() + offsets[i] * plane;
      for (std::size_t q = 0, n = in.value.numel(); q < n; ++q) gi[q] += go[q];
    }
  };
  return finish<T>(std::move(out), parts, std::move(bw), "concat_channels");
}

template <class T>
Var<T> slice_channels(const Var<T>& input, std::size_t begin, std::size_t count) {
  const Tensor<T>& x = input.value();
  require_rank(x.shape(), 3, "slice_channels", "input");
  if (count == 0 || begin + count > x.channels()) {
    throw ShapeError("slice_channels: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") outside " + std::to_string(x.channels()) + " channels");
  }
  const std::size_t plane = x.height() * x.width();
  Tensor<T> out({count, x.height(), x.width()});
  std::copy(x.raw() + begin * plane, x.raw() + (begin + count) * plane, out.raw());
  auto bw = [begin, plane](Node<T>& self) {
    Node<T>& in = *self.inputs[0];
    T* gi = in.grad_buffer().raw() + begin * plane;
    const T* go = self.grad.raw();
    for (std::size_t q = 0, n = self.value.numel(); q < n; ++q) gi[q] += go[q];
  };
  return finish<T>(std::move(out), {input}, std::move(bw), "slice_channels");
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] + b.value()[i];
  auto bw = [](Node<T>& self) {
    for (auto& in : self.inputs) {
      if (in->requires_grad) in->accumulate(self.grad);
    }
  };
  return finish<T>(std::move(out), {a, b}, std::move(bw), "add");
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] - b.value()[i];
  auto bw = [](Node<T>& self) {
    if (self.inputs[0]->requires_grad) self.inputs[0]->accumulate(self.grad);
    if (self.inputs[1]->requires_grad) {
      T* gi = self.inputs[1]->grad_buffer().raw();
      for (std::size_t i = 0; i < self.grad.numel(); ++i) gi[i] -= self.grad[i];
    }
  };
  return finish<T>(std::move(out), {a, b}, std::move(bw), "sub");
}

template <class T>
Var<T> affine(const Var<T>& input, T scale, T shift) {
  const Tensor<T>& x = input.value();
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = scale * x[i] + shift;
  auto bw = [scale](Node<T>& self) {
    T* gi = self.inputs[0]->grad_buffer().raw();
    for (std::size_t i = 0; i < self.grad.numel(); ++i) gi[i] += scale * self.grad[i];
  };
  return finish<T>(std::move(out), {input}, std::move(bw), "affine");
}

template <class T>
Var<T> sum(const Var<T>& input) {
  Tensor<T> out({1}, static_cast<T>(sum_all(input.value())));
  auto bw = [](Node<T>& self) {
    const T g = self.grad[0];
    T* gi = self.inputs[0]->grad_buffer().raw();
    for (std::size_t i = 0, n = self.inputs[0]->value.numel(); i < n; ++i) gi[i] += g;
  };
  return finish<T>(std::move(out), {input}, std::move(bw), "sum");
}

template <class T>
Var<T> mean(const Var<T>& input) {
  const double n = static_cast<double>(input.value().numel());
  Tensor<T> out({1}, static_cast<T>(sum_all(input.value()) / n));
  auto bw = [n](Node<T>& self) {
    const T g = static_cast<T>(self.grad[0] / n);
    T* gi = self.inputs[0]->grad_buffer().raw();
    for (std::size_t i = 0, m = self.inputs[0]->value.numel(); i < m; ++i) gi[i] += g;
  };
  return finish<T>(std::move(out), {input}, std::move(bw), "mean");
}

template <class T>
Var<T> mean_abs_diff(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mean_abs_diff");
  const Tensor<T>& x = a.value();
  const Tensor<T>& y = b.value();
  double s = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) s += std::abs(static_cast<double>(x[i]) - y[i]);
  const double n = static_cast<double>(x.numel());
  Tensor<T> out({1}, static_cast<T>(s / n));
  auto bw = [n](Node<T>& self) {
    const T g = static_cast<T>(self.grad[0] / n);
    Node<T>& na = *self.inputs[0];
    Node<T>& nb = *self.inputs[1];
    const std::size_t m = na.value.numel();
    for (int side = 0; side < 2; ++side) {
      Node<T>& tgt = side == 0 ? na : nb;
      if (!tgt.requires_grad) continue;
      const T sign_flip = side == 0 ? T{1} : T{-1};
      T* gi = tgt.grad_buffer().raw();
      for (std::size_t i = 0; i < m; ++i) {
        const T d = na.value[i] - nb.value[i];
        const T sgn = d > T{0} ? T{1} : (d < T{0} ? T{-1} : T{0});
        gi[i] += sign_flip * sgn * g;
      }
    }
  };
  return finish<T>(std::move(out), {a, b}, std::move(bw), "mean_abs_diff");
}

template <class T>
Var<T> mean_sq_diff(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mean_sq_diff");
  const Tensor<T>& x = a.value();
  const Tensor<T>& y = b.value();
  double s = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double d = static_cast<double>(x[i]) - y[i];
    s += d * d;
  }
  const double n = static_cast<double>(x.numel());
  Tensor<T> out({1}, static_cast<T>(s / n));
  auto bw = [n](Node<T>& self) {
    const T g = static_cast<T>(2.0 * self.grad[0] / n);
    Node<T>& na = *self.inputs[0];
    Node<T>& nb = *self.inputs[1];
    const std::size_t m = na.value.numel();
    if (na.requires_grad) {
      T* gi = na.grad_buffer().raw();
      for (std::size_t i = 0; i < m; ++i) gi[i] += g * (na.value[i] - nb.value[i]);
    }
    if (nb.requires_grad) {
      T* gi = nb.grad_buffer().raw();
      for (std::size_t i = 0; i < m; ++i) gi[i] -= g * (na.value[i] - nb.value[i]);
    }
  };
  return finish<T>(std::move(out), {a, b}, std::move(bw), "mean_sq_diff");
}

#define BOKEH_INSTANTIATE_OPS(T)                                                               \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, int, int);            \
  template Var<T> conv2d_transpose<T>(const Var<T>&, const Var<T>&, const Var<T>&, int);       \
  template Var<T> maxpool2<T>(const Var<T>&);                                                  \
  template Var<T> leaky_relu<T>(const Var<T>&, T);                                             \
  template Var<T> tanh_act<T>(const Var<T>&);                                                  \
  template Var<T> instance_norm<T>(const Var<T>&, const Var<T>&, const Var<T>&, T);            \
  template Var<T> concat_channels<T>(const std::vector<Var<T>>&);                              \
  template Var<T> slice_channels<T>(const Var<T>&, std::size_t, std::size_t);                  \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                        \
  template Var<T> sub<T>(const Var<T>&, const Var<T>&);                                        \
  template Var<T> affine<T>(const Var<T>&, T, T);                                              \
  template Var<T> sum<T>(const Var<T>&);                                                       \
  template Var<T> mean<T>(const Var<T>&);                                                      \
  template Var<T> mean_abs_diff<T>(const Var<T>&, const Var<T>&);                              \
  template Var<T> mean_sq_diff<T>(const Var<T>&, const Var<T>&);

BOKEH_INSTANTIATE_OPS(float)
BOKEH_INSTANTIATE_OPS(double)

}  // namespace bokeh::ad
