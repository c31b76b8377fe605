#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "bokeh/tensor.hpp"

namespace bokeh {

using Rgb = std::array<double, 3>;

// Coordinates below are normalized to [0, 1] so a scene can be rasterized
// at any resolution.
struct Point {
  double x = 0.0, y = 0.0;
};

struct FlatPatch {
  std::vector<Point> polygon;
  Rgb color{};
};

// Value noise blended between two colors, with flat-colored polygons on top.
struct Texture {
  Rgb base{0.5, 0.5, 0.5};
  Rgb accent{0.5, 0.5, 0.5};
  std::vector<int> noise_cells{4, 8, 16};  // lattice resolution per octave
  double noise_amplitude = 1.0;
  std::uint64_t seed = 0;
  std::vector<FlatPatch> patches;
};

struct LayerShape {
  enum class Kind { kEllipse, kPolygon };
  Kind kind = Kind::kEllipse;
  Point center{0.5, 0.5};
  double radius_x = 0.25, radius_y = 0.25;
  double rotation = 0.0;  // radians, ellipses only
  std::vector<Point> polygon;
};

struct SceneLayer {
  LayerShape shape;
  Texture texture;
  double depth = 2.0;
};

// Layered scene: opaque textured background plus up to four cut-out layers
// ordered front (smallest depth) to back.
struct SceneSpec {
  Texture background;
  double background_depth = 8.0;
  std::vector<SceneLayer> layers;
  double focus_depth = 2.0;
  double blur_gain = 0.0;  // px * depth units at the rendered (2x) resolution
  int image_size = 64;     // side of the wide input; targets render at 2x
  std::uint64_t seed = 0;

  static constexpr std::size_t kMaxLayers = 4;

  // Hard invariants: positive depths, layer count, coordinates in range.
  void validate() const;
};

// Depth range mapped onto [-1, 1] for the guidance plane.
inline constexpr double kDepthNear = 1.0;
inline constexpr double kDepthFar = 10.0;
double normalize_depth(double depth);

// Thin-lens circle of confusion: a * |1/d - 1/d_f|, quantized to 1/4 px.
double coc_radius(double depth, double focus_depth, double gain);

// Normalized hard-edged disk kernel, (2R+1) x (2R+1) with R = floor(radius).
Tensor<double> disk_kernel(double radius);

// Convolution with the normalized disk; border pixels average only the taps
// that fall inside the image.
Tensor<double> disk_blur(const Tensor<double>& image, double radius);

struct RenderedScene {
  Tensor<double> sharp;    // 3 x 2S x 2S, [0, 1]
  Tensor<double> shallow;  // 3 x 2S x 2S, [0, 1]
  Tensor<double> wide;     // 3 x S x S, 2x box-downsampled sharp
  Tensor<double> depth;    // 1 x S x S, depth units of the front-most surface
  std::vector<double> radii;  // blur radius per layer, then the background
};

RenderedScene render_scene(const SceneSpec& scene);

// One training record in model range [-1, 1].
struct SamplePair {
  Tensor<float> input_rgbd;  // 4 x S x S; plane 3 is normalized depth
  Tensor<float> target;      // 3 x 2S x 2S
  // level_targets[l] is the level-l target (3 x 2S/2^l), for l in 2..levels;
  // entries 0 and 1 are empty.
  std::vector<Tensor<float>> level_targets;

  void build_level_targets(int levels);
};

SamplePair render_pair(const SceneSpec& scene);

// Draws a random scene whose subject layer sits exactly at the focus depth.
SceneSpec sample_scene(std::uint64_t seed, int image_size);

// 2x2 box-filter downsampling of a rank-3 tensor with even extents.
template <class T>
Tensor<T> box_downsample2(const Tensor<T>& image);

}  // namespace bokeh
