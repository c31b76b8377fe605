#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bokeh/synthetic.hpp"

namespace bokeh {

enum class Split { kTrain, kVal, kTest };

const char* split_name(Split s);
Split parse_split(const std::string& name);

struct SplitCounts {
  std::size_t train = 0, val = 0, test = 0;
};

// 80/10/10 by index: the first floor(0.8 n) samples train, the next
// floor(0.1 n) validate, the rest test.
SplitCounts split_counts(std::size_t n);

struct DatasetEntry {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  std::string input, depth, target;  // file names relative to the dataset dir
  Split split = Split::kTrain;
};

struct Manifest {
  static constexpr int kVersion = 1;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  int input_size = 0;
  std::vector<DatasetEntry> samples;

  std::vector<const DatasetEntry*> entries(Split split) const;
};

inline constexpr const char* kManifestName = "manifest.json";

// Renders n scenes and writes input / depth / target PNGs plus the manifest.
Manifest generate_dataset(std::size_t n, std::uint64_t seed, const std::filesystem::path& out_dir, int input_size);

Manifest read_manifest(const std::filesystem::path& dir);

// Exactly what the dataset files encode: 8-bit color, 16-bit depth.
SamplePair quantize_pair(const SamplePair& pair);

SamplePair load_sample(const std::filesystem::path& dir, const DatasetEntry& entry);

// Loads a split and precomputes per-level targets for `levels` levels.
std::vector<SamplePair> load_split(const std::filesystem::path& dir, Split split, int levels);

}  // namespace bokeh
