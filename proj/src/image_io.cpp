#include "bokeh/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

namespace bokeh {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open_file(const std::string& path, const char* mode) {
  File f(std::fopen(path.c_str(), mode));
  if (!f) throw FormatError("cannot open " + path);
  return f;
}

[[noreturn]] void png_error_fn(png_structp png, png_const_charp msg) {
  auto* what = static_cast<std::string*>(png_get_error_ptr(png));
  if (what) *what = msg;
  png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

int color_type_for(std::size_t channels) {
  switch (channels) {
    case 1: return PNG_COLOR_TYPE_GRAY;
    case 3: return PNG_COLOR_TYPE_RGB;
    case 4: return PNG_COLOR_TYPE_RGBA;
    default: throw FormatError("PNG: unsupported channel count " + std::to_string(channels));
  }
}

// Writes rows of `bytes_per_row` bytes; 16-bit samples must already be big-endian.
void write_png(const std::string& path, std::size_t w, std::size_t h, std::size_t channels, int bit_depth,
               const std::vector<std::uint8_t>& rows) {
  File f = open_file(path, "wb");
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  if (!png) throw FormatError("PNG: cannot allocate writer");
  png_infop info = png_create_info_struct(png);
  const std::size_t stride = w * channels * static_cast<std::size_t>(bit_depth / 8);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw FormatError("PNG: write failed for " + path + ": " + err);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), bit_depth,
               color_type_for(channels), PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < h; ++y) png_write_row(png, rows.data() + y * stride);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fflush(f.get()) != 0) throw FormatError("PNG: flush failed for " + path);
}

struct Decoded {
  std::size_t width = 0, height = 0, channels = 0;
  int bit_depth = 0;
  std::vector<std::uint8_t> rows;
};

Decoded read_png(const std::string& path) {
  File f = open_file(path, "rb");
  std::uint8_t sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw FormatError(path + " is not a PNG file");
  }
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  if (!png) throw FormatError("PNG: cannot allocate reader");
  png_infop info = png_create_info_struct(png);
  Decoded d;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("PNG: decode failed for " + path + ": " + err);
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  d.width = png_get_image_width(png, info);
  d.height = png_get_image_height(png, info);
  d.channels = png_get_channels(png, info);
  d.bit_depth = png_get_bit_depth(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  d.rows.resize(stride * d.height);
  for (std::size_t y = 0; y < d.height; ++y) png_read_row(png, d.rows.data() + y * stride, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return d;
}

void check_buffer(std::size_t w, std::size_t h, std::size_t c, std::size_t size) {
  if (w == 0 || h == 0 || w * h * c != size) throw FormatError("PNG: pixel buffer does not match dimensions");
}

}  // namespace

void write_png8(const std::string& path, const Image8& image) {
  check_buffer(image.width, image.height, image.channels, image.pixels.size());
  write_png(path, image.width, image.height, image.channels, 8, image.pixels);
}

Image8 read_png8(const std::string& path) {
  Decoded d = read_png(path);
  if (d.bit_depth != 8) throw FormatError(path + ": expected an 8-bit PNG, got " + std::to_string(d.bit_depth));
  return Image8{d.width, d.height, d.channels, std::move(d.rows)};
}

void write_png16(const std::string& path, const Image16& image) {
  check_buffer(image.width, image.height, image.channels, image.pixels.size());
  std::vector<std::uint8_t> bytes(image.pixels.size() * 2);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    bytes[2 * i] = static_cast<std::uint8_t>(image.pixels[i] >> 8);
    bytes[2 * i + 1] = static_cast<std::uint8_t>(image.pixels[i] & 0xFF);
  }
  write_png(path, image.width, image.height, image.channels, 16, bytes);
}

Image16 read_png16(const std::string& path) {
  Decoded d = read_png(path);
  if (d.bit_depth != 16) throw FormatError(path + ": expected a 16-bit PNG, got " + std::to_string(d.bit_depth));
  Image16 img{d.width, d.height, d.channels, {}};
  img.pixels.resize(d.rows.size() / 2);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    img.pixels[i] = static_cast<std::uint16_t>((d.rows[2 * i] << 8) | d.rows[2 * i + 1]);
  }
  return img;
}

float byte_to_unit(std::uint8_t v) { return static_cast<float>(v) / 127.5f - 1.0f; }

std::uint8_t unit_to_byte(double x) {
  const double c = std::clamp(std::isnan(x) ? -1.0 : x, -1.0, 1.0);
  return static_cast<std::uint8_t>(std::round((c + 1.0) * 127.5));
}

Image8 to_image8(const Tensor<float>& chw) {
  if (chw.rank() != 3) throw ShapeError("to_image8: expects channels x height x width");
  Image8 img{chw.width(), chw.height(), chw.channels(), {}};
  img.pixels.resize(chw.numel());
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      for (std::size_t c = 0; c < img.channels; ++c) {
        img.pixels[(y * img.width + x) * img.channels + c] = unit_to_byte(chw.at(c, y, x));
      }
    }
  }
  return img;
}

Tensor<float> from_image8(const Image8& image) {
  Tensor<float> t({image.channels, image.height, image.width});
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      for (std::size_t c = 0; c < image.channels; ++c) {
        t.at(c, y, x) = byte_to_unit(image.pixels[(y * image.width + x) * image.channels + c]);
      }
    }
  }
  return t;
}

std::uint16_t depth_to_code(double normalized) {
  const double c = std::clamp(normalized, -1.0, 1.0);
  return static_cast<std::uint16_t>(std::round((c + 1.0) * 0.5 * 65535.0));
}

float code_to_depth(std::uint16_t code) { return static_cast<float>(code / 65535.0 * 2.0 - 1.0); }

}  // namespace bokeh
