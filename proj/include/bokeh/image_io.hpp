#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bokeh/tensor.hpp"

namespace bokeh {

// Interleaved pixel buffer as stored in a PNG.
template <class Sample>
struct RawImage {
  std::size_t width = 0, height = 0, channels = 0;
  std::vector<Sample> pixels;
};

using Image8 = RawImage<std::uint8_t>;
using Image16 = RawImage<std::uint16_t>;

// 8-bit RGB (or gray) PNG; throws FormatError on I/O or decode failure.
void write_png8(const std::string& path, const Image8& image);
Image8 read_png8(const std::string& path);

// 16-bit grayscale PNG.
void write_png16(const std::string& path, const Image16& image);
Image16 read_png16(const std::string& path);

// [0, 255] <-> [-1, 1] via v / 127.5 - 1; the inverse clamps to [-1, 1]
// and rounds half away from zero.
float byte_to_unit(std::uint8_t v);
std::uint8_t unit_to_byte(double x);

Image8 to_image8(const Tensor<float>& chw);
Tensor<float> from_image8(const Image8& image);

// Normalized depth in [-1, 1] <-> 16-bit code.
std::uint16_t depth_to_code(double normalized);
float code_to_depth(std::uint16_t code);

}  // namespace bokeh
