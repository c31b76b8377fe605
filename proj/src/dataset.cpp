#include "bokeh/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <json.hpp>

#include "bokeh/image_io.hpp"
#include "bokeh/rng.hpp"

namespace bokeh {

namespace fs = std::filesystem;
using nlohmann::json;

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw ConfigError("unknown split '" + name + "' (expected train, val or test)");
}

SplitCounts split_counts(std::size_t n) {
  SplitCounts c;
  c.train = n * 8 / 10;
  c.val = n / 10;
  c.test = n - c.train - c.val;
  return c;
}

std::vector<const DatasetEntry*> Manifest::entries(Split split) const {
  std::vector<const DatasetEntry*> out;
  for (const auto& e : samples) {
    if (e.split == split) out.push_back(&e);
  }
  return out;
}

namespace {

std::string numbered(const char* stem, std::size_t i) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%05zu.png", stem, i);
  return buf;
}

Image16 depth_image(const Tensor<float>& input_rgbd) {
  const std::size_t s = input_rgbd.height();
  Image16 img{s, s, 1, {}};
  img.pixels.resize(s * s);
  for (std::size_t q = 0; q < s * s; ++q) img.pixels[q] = depth_to_code(input_rgbd[3 * s * s + q]);
  return img;
}

Image8 rgb_image(const Tensor<float>& t, std::size_t channels) {
  Tensor<float> rgb({channels, t.height(), t.width()});
  std::copy(t.raw(), t.raw() + rgb.numel(), rgb.raw());
  return to_image8(rgb);
}

}  // namespace

SamplePair quantize_pair(const SamplePair& pair) {
  SamplePair q = pair;
  for (std::size_t i = 0; i < 3 * pair.input_rgbd.height() * pair.input_rgbd.width(); ++i) {
    q.input_rgbd[i] = byte_to_unit(unit_to_byte(pair.input_rgbd[i]));
  }
  const std::size_t plane = pair.input_rgbd.height() * pair.input_rgbd.width();
  for (std::size_t i = 0; i < plane; ++i) {
    q.input_rgbd[3 * plane + i] = code_to_depth(depth_to_code(pair.input_rgbd[3 * plane + i]));
  }
  for (auto& v : q.target.data()) v = byte_to_unit(unit_to_byte(v));
  q.level_targets.clear();
  return q;
}

Manifest generate_dataset(std::size_t n, std::uint64_t seed, const fs::path& out_dir, int input_size) {
  if (n < 1) throw ConfigError("generate_dataset: n must be >= 1");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) {
    throw ConfigError("generate_dataset: cannot create output directory " + out_dir.string());
  }
  Manifest m;
  m.n = n;
  m.seed = seed;
  m.input_size = input_size;
  const SplitCounts counts = split_counts(n);
  for (std::size_t i = 0; i < n; ++i) {
    DatasetEntry e;
    e.index = i;
    e.seed = derive_seed(seed, i);
    e.input = numbered("input", i);
    e.depth = numbered("depth", i);
    e.target = numbered("target", i);
    e.split = i < counts.train ? Split::kTrain : (i < counts.train + counts.val ? Split::kVal : Split::kTest);
    const SamplePair pair = render_pair(sample_scene(e.seed, input_size));
    write_png8((out_dir / e.input).string(), rgb_image(pair.input_rgbd, 3));
    write_png16((out_dir / e.depth).string(), depth_image(pair.input_rgbd));
    write_png8((out_dir / e.target).string(), to_image8(pair.target));
    m.samples.push_back(std::move(e));
  }

  json j;
  j["version"] = Manifest::kVersion;
  j["n"] = n;
  j["seed"] = seed;
  j["input_size"] = input_size;
  j["split"] = {{"train", counts.train}, {"val", counts.val}, {"test", counts.test}};
  j["samples"] = json::array();
  for (const auto& e : m.samples) {
    j["samples"].push_back({{"index", e.index},
                            {"seed", e.seed},
                            {"input", e.input},
                            {"depth", e.depth},
                            {"target", e.target},
                            {"split", split_name(e.split)}});
  }
  std::ofstream os(out_dir / kManifestName, std::ios::binary);
  os << j.dump(2) << '\n';
  if (!os) throw FormatError("generate_dataset: cannot write manifest in " + out_dir.string());
  return m;
}

Manifest read_manifest(const fs::path& dir) {
  const fs::path path = dir / kManifestName;
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("dataset manifest not found: " + path.string());
  Manifest m;
  try {
    const json j = json::parse(is);
    if (j.at("version").get<int>() != Manifest::kVersion) throw FormatError("unsupported manifest version");
    m.n = j.at("n").get<std::size_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.input_size = j.at("input_size").get<int>();
    for (const auto& s : j.at("samples")) {
      DatasetEntry e;
      e.index = s.at("index").get<std::size_t>();
      e.seed = s.at("seed").get<std::uint64_t>();
      e.input = s.at("input").get<std::string>();
      e.depth = s.at("depth").get<std::string>();
      e.target = s.at("target").get<std::string>();
      e.split = parse_split(s.at("split").get<std::string>());
      m.samples.push_back(std::move(e));
    }
  } catch (const json::exception& ex) {
    throw FormatError("malformed manifest " + path.string() + ": " + ex.what());
  }
  if (m.samples.size() != m.n) throw FormatError("manifest lists a different number of samples than n");
  return m;
}

SamplePair load_sample(const fs::path& dir, const DatasetEntry& entry) {
  const Image8 rgb = read_png8((dir / entry.input).string());
  const Image16 depth = read_png16((dir / entry.depth).string());
  const Image8 target = read_png8((dir / entry.target).string());
  if (rgb.channels != 3 || target.channels != 3 || depth.channels != 1) {
    throw FormatError("sample " + std::to_string(entry.index) + ": unexpected channel layout");
  }
  if (rgb.width != rgb.height || depth.width != rgb.width || depth.height != rgb.height ||
      target.width != 2 * rgb.width || target.height != 2 * rgb.height) {
    throw FormatError("sample " + std::to_string(entry.index) + ": inconsistent image sizes");
  }
  SamplePair p;
  const std::size_t s = rgb.width;
  p.input_rgbd = Tensor<float>({4, s, s});
  const Tensor<float> color = from_image8(rgb);
  std::copy(color.raw(), color.raw() + color.numel(), p.input_rgbd.raw());
  for (std::size_t q = 0; q < s * s; ++q) p.input_rgbd[3 * s * s + q] = code_to_depth(depth.pixels[q]);
  p.target = from_image8(target);
  return p;
}

std::vector<SamplePair> load_split(const fs::path& dir, Split split, int levels) {
  const Manifest m = read_manifest(dir);
  std::vector<SamplePair> out;
  for (const DatasetEntry* e : m.entries(split)) {
    SamplePair p = load_sample(dir, *e);
    p.build_level_targets(levels);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace bokeh
