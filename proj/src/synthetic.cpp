#include "bokeh/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "bokeh/rng.hpp"

namespace bokeh {

namespace {

bool in_unit(const Point& p) { return p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0; }

void validate_texture(const Texture& t, const char* what) {
  for (int c : t.noise_cells) {
    if (c < 1) throw ConfigError(std::string("SceneSpec: ") + what + " noise cells must be >= 1");
  }
  for (const auto& p : t.patches) {
    if (p.polygon.size() < 3) throw ConfigError(std::string("SceneSpec: ") + what + " patch needs >= 3 vertices");
  }
}

// Even-odd point in polygon test.
bool inside_polygon(const std::vector<Point>& poly, double x, double y) {
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Point& a = poly[i];
    const Point& b = poly[j];
    if ((a.y > y) != (b.y > y) && x < (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x) inside = !inside;
  }
  return inside;
}

bool inside_shape(const LayerShape& s, double x, double y) {
  if (s.kind == LayerShape::Kind::kPolygon) return inside_polygon(s.polygon, x, y);
  const double dx = x - s.center.x, dy = y - s.center.y;
  const double c = std::cos(s.rotation), sn = std::sin(s.rotation);
  const double u = (c * dx + sn * dy) / s.radius_x;
  const double v = (-sn * dx + c * dy) / s.radius_y;
  return u * u + v * v <= 1.0;
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

Tensor<double> render_texture(const Texture& tex, std::size_t n) {
  // Lattice values are drawn per octave in a fixed order from the seed.
  Rng rng(tex.seed);
  std::vector<std::vector<double>> lattices;
  for (int cells : tex.noise_cells) {
    std::vector<double> lat(static_cast<std::size_t>((cells + 1) * (cells + 1)));
    for (double& v : lat) v = rng.uniform();
    lattices.push_back(std::move(lat));
  }
  Tensor<double> out({3, n, n});
  for (std::size_t py = 0; py < n; ++py) {
    for (std::size_t px = 0; px < n; ++px) {
      const double u = (static_cast<double>(px) + 0.5) / static_cast<double>(n);
      const double v = (static_cast<double>(py) + 0.5) / static_cast<double>(n);
      double t = 0.0, weight = 1.0, norm = 0.0;
      for (std::size_t o = 0; o < lattices.size(); ++o) {
        const int cells = tex.noise_cells[o];
        const double gx = u * cells, gy = v * cells;
        const int ix = std::min(static_cast<int>(gx), cells - 1);
        const int iy = std::min(static_cast<int>(gy), cells - 1);
        const double fx = smoothstep(gx - ix), fy = smoothstep(gy - iy);
        const auto& lat = lattices[o];
        auto at = [&](int x, int y) { return lat[static_cast<std::size_t>(y * (cells + 1) + x)]; };
        const double top = at(ix, iy) + (at(ix + 1, iy) - at(ix, iy)) * fx;
        const double bot = at(ix, iy + 1) + (at(ix + 1, iy + 1) - at(ix, iy + 1)) * fx;
        t += weight * (top + (bot - top) * fy);
        norm += weight;
        weight *= 0.5;
      }
      t = norm > 0.0 ? 0.5 + tex.noise_amplitude * (t / norm - 0.5) : 0.5;
      t = std::clamp(t, 0.0, 1.0);
      Rgb color;
      for (int c = 0; c < 3; ++c) color[c] = tex.base[c] + (tex.accent[c] - tex.base[c]) * t;
      for (const auto& patch : tex.patches) {
        if (inside_polygon(patch.polygon, u, v)) color = patch.color;
      }
      for (std::size_t c = 0; c < 3; ++c) out.at(c, py, px) = std::clamp(color[c], 0.0, 1.0);
    }
  }
  return out;
}

Tensor<double> render_mask(const LayerShape& shape, std::size_t n) {
  Tensor<double> out({1, n, n});
  for (std::size_t py = 0; py < n; ++py) {
    for (std::size_t px = 0; px < n; ++px) {
      const double u = (static_cast<double>(px) + 0.5) / static_cast<double>(n);
      const double v = (static_cast<double>(py) + 0.5) / static_cast<double>(n);
      out.at(0, py, px) = inside_shape(shape, u, v) ? 1.0 : 0.0;
    }
  }
  return out;
}

Rgb random_color(Rng& rng) { return {rng.uniform(), rng.uniform(), rng.uniform()}; }

Texture random_texture(Rng& rng) {
  Texture t;
  t.base = random_color(rng);
  t.accent = random_color(rng);
  t.noise_amplitude = rng.uniform(0.6, 1.0);
  t.seed = rng.next_u64();
  const auto patches = rng.uniform_int(0, 3);
  for (std::int64_t i = 0; i < patches; ++i) {
    FlatPatch p;
    const Point c{rng.uniform(), rng.uniform()};
    const double r = rng.uniform(0.05, 0.2);
    const auto verts = rng.uniform_int(3, 5);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (std::int64_t k = 0; k < verts; ++k) {
      const double a = phase + 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(verts);
      const double rr = r * rng.uniform(0.6, 1.0);
      p.polygon.push_back({std::clamp(c.x + rr * std::cos(a), 0.0, 1.0), std::clamp(c.y + rr * std::sin(a), 0.0, 1.0)});
    }
    p.color = random_color(rng);
    t.patches.push_back(std::move(p));
  }
  return t;
}

LayerShape random_shape(Rng& rng, double min_r, double max_r, double center_lo, double center_hi) {
  LayerShape s;
  s.center = {rng.uniform(center_lo, center_hi), rng.uniform(center_lo, center_hi)};
  s.radius_x = rng.uniform(min_r, max_r);
  s.radius_y = rng.uniform(min_r, max_r);
  if (rng.uniform() < 0.6) {
    s.kind = LayerShape::Kind::kEllipse;
    s.rotation = rng.uniform(0.0, std::numbers::pi);
  } else {
    s.kind = LayerShape::Kind::kPolygon;
    const auto verts = rng.uniform_int(3, 7);
    for (std::int64_t k = 0; k < verts; ++k) {
      const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(verts);
      const double rr = rng.uniform(0.7, 1.0);
      s.polygon.push_back({std::clamp(s.center.x + rr * s.radius_x * std::cos(a), 0.0, 1.0),
                           std::clamp(s.center.y + rr * s.radius_y * std::sin(a), 0.0, 1.0)});
    }
  }
  return s;
}

}  // namespace

void SceneSpec::validate() const {
  if (image_size < 8 || image_size % 2) throw ConfigError("SceneSpec: image_size must be even and >= 8");
  if (layers.size() > kMaxLayers) {
    throw ConfigError("SceneSpec: at most " + std::to_string(kMaxLayers) + " layers, got " +
                      std::to_string(layers.size()));
  }
  if (!(background_depth > 0.0) || !(focus_depth > 0.0)) throw ConfigError("SceneSpec: depths must be > 0");
  if (!(blur_gain >= 0.0)) throw ConfigError("SceneSpec: blur_gain must be >= 0");
  validate_texture(background, "background");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const SceneLayer& l = layers[i];
    if (!(l.depth > 0.0)) throw ConfigError("SceneSpec: layer depth must be > 0");
    if (i > 0 && l.depth < layers[i - 1].depth) {
      throw ConfigError("SceneSpec: layers must be ordered front to back by depth");
    }
    if (l.depth > background_depth) throw ConfigError("SceneSpec: layer lies behind the background");
    if (l.shape.kind == LayerShape::Kind::kPolygon) {
      if (l.shape.polygon.size() < 3) throw ConfigError("SceneSpec: polygon layer needs >= 3 vertices");
      for (const auto& p : l.shape.polygon) {
        if (!in_unit(p)) throw ConfigError("SceneSpec: layer polygon outside image bounds");
      }
    } else if (!in_unit(l.shape.center) || !(l.shape.radius_x > 0.0) || !(l.shape.radius_y > 0.0)) {
      throw ConfigError("SceneSpec: ellipse layer needs an in-bounds center and positive radii");
    }
    validate_texture(l.texture, "layer");
  }
}

double normalize_depth(double depth) {
  const double t = (depth - kDepthNear) / (kDepthFar - kDepthNear);
  return std::clamp(2.0 * t - 1.0, -1.0, 1.0);
}

double coc_radius(double depth, double focus_depth, double gain) {
  if (!(depth > 0.0) || !(focus_depth > 0.0)) throw ConfigError("coc_radius: depths must be > 0");
  if (!(gain >= 0.0)) throw ConfigError("coc_radius: gain must be >= 0");
  const double r = gain * std::abs(1.0 / depth - 1.0 / focus_depth);
  return std::round(r * 4.0) / 4.0;
}

Tensor<double> disk_kernel(double radius) {
  if (!(radius >= 0.0) || !std::isfinite(radius)) throw ConfigError("disk_kernel: radius must be finite and >= 0");
  const int r = static_cast<int>(std::floor(radius));
  const auto side = static_cast<std::size_t>(2 * r + 1);
  Tensor<double> k({side, side});
  double count = 0.0;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      if (dx * dx + dy * dy <= radius * radius) {
        k[static_cast<std::size_t>((dy + r) * (2 * r + 1) + dx + r)] = 1.0;
        count += 1.0;
      }
    }
  }
  for (double& v : k.data()) v /= count;
  return k;
}

Tensor<double> disk_blur(const Tensor<double>& image, double radius) {
  if (!(radius >= 0.0) || !std::isfinite(radius)) throw ConfigError("disk_blur: radius must be finite and >= 0");
  if (image.rank() != 3) throw ShapeError("disk_blur: expects channels x height x width");
  const long h = static_cast<long>(image.height()), w = static_cast<long>(image.width());
  const long r = static_cast<long>(std::floor(radius));
  if (2 * r + 1 > std::min(h, w)) {
    throw ShapeError("disk_blur: kernel of radius " + std::to_string(radius) + " exceeds image " +
                     to_string(image.shape()));
  }
  if (r == 0) return image;  // single-pixel kernel; prefix-sum differences would not be exact
  std::vector<long> half(static_cast<std::size_t>(2 * r + 1));
  for (long dy = -r; dy <= r; ++dy) {
    // Largest dx with dx^2 + dy^2 <= radius^2.
    long hw = static_cast<long>(std::floor(std::sqrt(std::max(0.0, radius * radius - double(dy * dy)))));
    while (hw * hw + dy * dy > radius * radius) --hw;
    while ((hw + 1) * (hw + 1) + dy * dy <= radius * radius) ++hw;
    half[static_cast<std::size_t>(dy + r)] = hw;
  }
  Tensor<double> out(image.shape());
  std::vector<double> prefix(static_cast<std::size_t>(w + 1));
  for (std::size_t c = 0; c < image.channels(); ++c) {
    const double* src = image.plane(c);
    std::vector<double> rows(static_cast<std::size_t>(h * (w + 1)));
    for (long y = 0; y < h; ++y) {
      double* pre = rows.data() + y * (w + 1);
      pre[0] = 0.0;
      for (long x = 0; x < w; ++x) pre[x + 1] = pre[x] + src[y * w + x];
    }
    double* dst = out.plane(c);
    for (long y = 0; y < h; ++y) {
      for (long x = 0; x < w; ++x) {
        double s = 0.0;
        long count = 0;
        for (long dy = -r; dy <= r; ++dy) {
          const long yy = y + dy;
          if (yy < 0 || yy >= h) continue;
          const long hw = half[static_cast<std::size_t>(dy + r)];
          const long x0 = std::max(0L, x - hw), x1 = std::min(w - 1, x + hw);
          const double* pre = rows.data() + yy * (w + 1);
          s += pre[x1 + 1] - pre[x0];
          count += x1 - x0 + 1;
        }
        dst[y * w + x] = s / static_cast<double>(count);
      }
    }
  }
  return out;
}

template <class T>
Tensor<T> box_downsample2(const Tensor<T>& image) {
  if (image.rank() != 3 || image.height() % 2 || image.width() % 2) {
    throw ShapeError("box_downsample2: expects rank-3 tensor with even extents, got " + to_string(image.shape()));
  }
  const std::size_t oh = image.height() / 2, ow = image.width() / 2;
  Tensor<T> out({image.channels(), oh, ow});
  for (std::size_t c = 0; c < image.channels(); ++c) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        const T s = image.at(c, 2 * y, 2 * x) + image.at(c, 2 * y, 2 * x + 1) + image.at(c, 2 * y + 1, 2 * x) +
                    image.at(c, 2 * y + 1, 2 * x + 1);
        out.at(c, y, x) = s * T(0.25);
      }
    }
  }
  return out;
}

template Tensor<float> box_downsample2<float>(const Tensor<float>&);
template Tensor<double> box_downsample2<double>(const Tensor<double>&);

RenderedScene render_scene(const SceneSpec& scene) {
  scene.validate();
  const auto s = static_cast<std::size_t>(scene.image_size);
  const std::size_t n = 2 * s;
  const std::size_t plane = n * n;
  RenderedScene out;

  Tensor<double> bg = render_texture(scene.background, n);
  std::vector<Tensor<double>> colors, alphas;
  for (const auto& layer : scene.layers) {
    colors.push_back(render_texture(layer.texture, n));
    alphas.push_back(render_mask(layer.shape, n));
    out.radii.push_back(coc_radius(layer.depth, scene.focus_depth, scene.blur_gain));
  }
  const double r_bg = coc_radius(scene.background_depth, scene.focus_depth, scene.blur_gain);
  out.radii.push_back(r_bg);

  // Back-to-front "over" compositing; the shallow image blurs each layer's
  // premultiplied color and its coverage with the layer's own radius.
  out.sharp = bg;
  out.shallow = disk_blur(bg, r_bg);
  for (std::size_t i = scene.layers.size(); i-- > 0;) {
    const Tensor<double>& a = alphas[i];
    Tensor<double> premul = colors[i];
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t q = 0; q < plane; ++q) premul[c * plane + q] *= a[q];
    }
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t q = 0; q < plane; ++q) {
        double& px = out.sharp[c * plane + q];
        px = premul[c * plane + q] + (1.0 - a[q]) * px;
      }
    }
    const double r = out.radii[i];
    Tensor<double> pb = r > 0.0 ? disk_blur(premul, r) : premul;
    Tensor<double> ab = r > 0.0 ? disk_blur(a, r) : a;
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t q = 0; q < plane; ++q) {
        double& px = out.shallow[c * plane + q];
        px = pb[c * plane + q] + (1.0 - ab[q]) * px;
      }
    }
  }

  // Depth of the front-most surface; each low-res pixel keeps the nearest
  // depth of its 2x2 block so the map stays piecewise constant.
  Tensor<double> depth_full({1, n, n}, scene.background_depth);
  for (std::size_t i = scene.layers.size(); i-- > 0;) {
    for (std::size_t q = 0; q < plane; ++q) {
      if (alphas[i][q] > 0.5) depth_full[q] = scene.layers[i].depth;
    }
  }
  out.depth = Tensor<double>({1, s, s});
  for (std::size_t y = 0; y < s; ++y) {
    for (std::size_t x = 0; x < s; ++x) {
      out.depth.at(0, y, x) = std::min({depth_full.at(0, 2 * y, 2 * x), depth_full.at(0, 2 * y, 2 * x + 1),
                                        depth_full.at(0, 2 * y + 1, 2 * x), depth_full.at(0, 2 * y + 1, 2 * x + 1)});
    }
  }
  out.wide = box_downsample2(out.sharp);
  return out;
}

void SamplePair::build_level_targets(int levels) {
  level_targets.assign(static_cast<std::size_t>(std::max(levels, 1) + 1), Tensor<float>());
  Tensor<float> cur = target;
  for (int l = 1; l <= levels; ++l) {
    if (cur.height() % 2 || cur.width() % 2) {
      throw ShapeError("SamplePair: target " + to_string(target.shape()) + " too small for " +
                       std::to_string(levels) + " levels");
    }
    cur = box_downsample2(cur);
    if (l >= 2) level_targets[static_cast<std::size_t>(l)] = cur;
  }
}

SamplePair render_pair(const SceneSpec& scene) {
  RenderedScene r = render_scene(scene);
  const auto s = static_cast<std::size_t>(scene.image_size);
  SamplePair p;
  p.input_rgbd = Tensor<float>({4, s, s});
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t q = 0; q < s * s; ++q) p.input_rgbd[c * s * s + q] = static_cast<float>(2.0 * r.wide[c * s * s + q] - 1.0);
  }
  for (std::size_t q = 0; q < s * s; ++q) p.input_rgbd[3 * s * s + q] = static_cast<float>(normalize_depth(r.depth[q]));
  p.target = Tensor<float>(r.shallow.shape());
  for (std::size_t q = 0; q < r.shallow.numel(); ++q) p.target[q] = static_cast<float>(2.0 * r.shallow[q] - 1.0);
  return p;
}

SceneSpec sample_scene(std::uint64_t seed, int image_size) {
  Rng rng(seed);
  SceneSpec sc;
  sc.seed = seed;
  sc.image_size = image_size;
  sc.focus_depth = 2.0;
  sc.background_depth = rng.uniform(6.0, 10.0);
  // Radii scale with the rendered resolution; 2S = 128 gives up to ~8 px.
  sc.blur_gain = rng.uniform(8.0, 20.0) * (2.0 * image_size) / 128.0;
  sc.background = random_texture(rng);

  SceneLayer subject;
  subject.depth = sc.focus_depth;
  subject.shape = random_shape(rng, 0.15, 0.3, 0.3, 0.7);
  subject.texture = random_texture(rng);
  std::vector<SceneLayer> layers{subject};

  const auto extra = rng.uniform_int(0, 2);
  for (std::int64_t i = 0; i < extra; ++i) {
    SceneLayer l;
    l.depth = rng.uniform() < 0.4 ? rng.uniform(1.2, 1.8) : rng.uniform(2.5, sc.background_depth - 0.5);
    l.shape = random_shape(rng, 0.08, 0.2, 0.1, 0.9);
    l.texture = random_texture(rng);
    layers.push_back(std::move(l));
  }
  std::sort(layers.begin(), layers.end(), [](const SceneLayer& a, const SceneLayer& b) { return a.depth < b.depth; });
  sc.layers = std::move(layers);
  return sc;
}

}  // namespace bokeh
