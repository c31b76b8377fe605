#include <gtest/gtest.h>

#include <unistd.h>

#include "bokeh/dataset.hpp"
#include "bokeh/image_io.hpp"
#include "test_support.hpp"

using namespace bokeh;
using testing_support::TempDir;

TEST(PixelMapping, BitExactConventions) {
  EXPECT_EQ(byte_to_unit(0), -1.0f);
  EXPECT_EQ(byte_to_unit(255), 1.0f);
  EXPECT_EQ(unit_to_byte(-1.0), 0);
  EXPECT_EQ(unit_to_byte(1.0), 255);
  EXPECT_EQ(unit_to_byte(0.0), 128);   // 127.5 rounds away from zero
  EXPECT_EQ(unit_to_byte(-3.0), 0);    // clamped
  EXPECT_EQ(unit_to_byte(2.0), 255);
  for (int v = 0; v < 256; ++v) EXPECT_EQ(unit_to_byte(byte_to_unit(std::uint8_t(v))), v);
}

TEST(DepthCode, RoundTripsWithinOneCode) {
  EXPECT_EQ(depth_to_code(-1.0), 0);
  EXPECT_EQ(depth_to_code(1.0), 65535);
  for (std::uint32_t c = 0; c < 65536; c += 257) EXPECT_EQ(depth_to_code(code_to_depth(std::uint16_t(c))), c);
}

TEST(Png, EightBitRoundTripIsExact) {
  TempDir dir;
  Image8 img{7, 5, 3, {}};
  for (std::size_t i = 0; i < 7 * 5 * 3; ++i) img.pixels.push_back(std::uint8_t(i * 37 % 256));
  write_png8((dir / "a.png").string(), img);
  const Image8 back = read_png8((dir / "a.png").string());
  EXPECT_EQ(back.width, 7u);
  EXPECT_EQ(back.height, 5u);
  EXPECT_EQ(back.channels, 3u);
  EXPECT_EQ(back.pixels, img.pixels);
}

TEST(Png, SixteenBitRoundTripIsExact) {
  TempDir dir;
  Image16 img{4, 3, 1, {}};
  for (std::uint32_t i = 0; i < 12; ++i) img.pixels.push_back(std::uint16_t(i * 5471));
  write_png16((dir / "d.png").string(), img);
  const Image16 back = read_png16((dir / "d.png").string());
  EXPECT_EQ(back.pixels, img.pixels);
  EXPECT_THROW(read_png8((dir / "d.png").string()), FormatError);
}

TEST(Png, GarbageAndMissingFilesThrow) {
  TempDir dir;
  testing_support::write_text(dir / "x.png", "not a png at all");
  EXPECT_THROW(read_png8((dir / "x.png").string()), FormatError);
  EXPECT_THROW(read_png8((dir / "missing.png").string()), FormatError);
}

TEST(Dataset, SplitCounts) {
  const auto c = split_counts(10);
  EXPECT_EQ(c.train, 8u);
  EXPECT_EQ(c.val, 1u);
  EXPECT_EQ(c.test, 1u);
  const auto d = split_counts(7);  // floor(5.6), floor(0.7), remainder
  EXPECT_EQ(d.train, 5u);
  EXPECT_EQ(d.val, 0u);
  EXPECT_EQ(d.test, 2u);
  EXPECT_EQ(split_counts(200).test, 20u);
}

TEST(Dataset, GenerationIsByteDeterministic) {
  TempDir a, b;
  generate_dataset(10, 4, a / "ds", 16);
  generate_dataset(10, 4, b / "ds", 16);
  std::size_t files = 0;
  for (const auto& e : std::filesystem::directory_iterator(a / "ds")) {
    ++files;
    const auto name = e.path().filename().string();
    EXPECT_EQ(testing_support::file_crc(e.path()), testing_support::file_crc(b / "ds" / name)) << name;
  }
  EXPECT_EQ(files, 31u);
  const Manifest m = read_manifest(a / "ds");
  EXPECT_EQ(m.entries(Split::kTrain).size(), 8u);
  EXPECT_EQ(m.entries(Split::kVal).size(), 1u);
  EXPECT_EQ(m.entries(Split::kTest).size(), 1u);
  EXPECT_EQ(m.samples[9].split, Split::kTest);
}

TEST(Dataset, ReloadMatchesQuantizedRender) {
  TempDir dir;
  const Manifest m = generate_dataset(3, 8, dir / "ds", 16);
  for (const auto& e : m.samples) {
    const SamplePair loaded = load_sample(dir / "ds", e);
    const SamplePair expect = quantize_pair(render_pair(sample_scene(e.seed, 16)));
    EXPECT_TRUE(loaded.input_rgbd == expect.input_rgbd);
    EXPECT_TRUE(loaded.target == expect.target);
  }
}

TEST(Dataset, ErrorsAreReported) {
  TempDir dir;
  EXPECT_THROW(generate_dataset(0, 1, dir / "ds", 16), ConfigError);
  testing_support::write_text(dir / "file", "x");
  EXPECT_THROW(generate_dataset(2, 1, dir / "file" / "sub", 16), ConfigError);
  EXPECT_THROW(read_manifest(dir / "nowhere"), FormatError);
  std::filesystem::create_directories(dir / "bad");
  testing_support::write_text(dir / "bad" / "manifest.json", "{\"version\": 1}");
  EXPECT_THROW(read_manifest(dir / "bad"), FormatError);
  EXPECT_THROW(parse_split("holdout"), ConfigError);
}
