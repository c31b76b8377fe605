#include "bokeh/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "bokeh/checkpoint.hpp"
#include "bokeh/config_json.hpp"
#include "bokeh/dataset.hpp"
#include "bokeh/image_io.hpp"
#include "bokeh/run_config.hpp"
#include "bokeh/runtime.hpp"
#include "bokeh/train.hpp"

namespace bokeh {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_json(const fs::path& path, const json& doc) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream os(path);
  os << doc.dump(2) << '\n';
  if (!os) throw ConfigError("cannot write " + path.string());
}

fs::path ensure_dir(const fs::path& dir, const char* what) {
  if (dir.empty()) throw ConfigError(std::string(what) + " is not set");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create " + std::string(what) + " " + dir.string());
  return dir;
}

// Calls fn(Checkpoint<T>&) with T matching the stored precision.
template <class Fn>
void with_checkpoint(const fs::path& path, Fn&& fn) {
  if (!fs::exists(path)) throw ConfigError("checkpoint not found: " + path.string());
  const std::vector<std::uint8_t> bytes = read_file(path);
  if (checkpoint_precision(bytes) == "f64") {
    Checkpoint<double> c = load_checkpoint<double>(bytes);
    fn(c);
  } else {
    Checkpoint<float> c = load_checkpoint<float>(bytes);
    fn(c);
  }
}

// RGB (+ depth) PNGs to a model input; enforces the square, divisible contract.
Tensor<float> load_input(const PyNetConfig& config, const std::string& image_path, const std::string& depth_path) {
  if (!fs::exists(image_path)) throw ConfigError("input image not found: " + image_path);
  const Image8 img = read_png8(image_path);
  if (img.channels < 3) throw FormatError(image_path + ": expected an RGB image");
  if (img.width != img.height) {
    throw ConfigError("input must be square, got " + std::to_string(img.width) + "x" + std::to_string(img.height));
  }
  const std::size_t s = img.width;
  const std::size_t unit = std::size_t{1} << (config.levels - 1);
  if (s % unit != 0) {
    throw ConfigError("input side " + std::to_string(s) + " must be divisible by " + std::to_string(unit));
  }
  const bool wants_depth = config.input_channels == 4;
  if (wants_depth && depth_path.empty()) throw ConfigError("this model takes RGBD input; pass --depth");
  if (!wants_depth && !depth_path.empty()) throw ConfigError("this model takes RGB input; drop --depth");

  Tensor<float> x({static_cast<std::size_t>(config.input_channels), s, s});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t q = 0; q < s * s; ++q) x[c * s * s + q] = byte_to_unit(img.pixels[q * img.channels + c]);
  if (wants_depth) {
    if (!fs::exists(depth_path)) throw ConfigError("depth image not found: " + depth_path);
    const Image16 d = read_png16(depth_path);
    if (d.channels != 1) throw FormatError(depth_path + ": expected a single-channel depth PNG");
    if (d.width != s || d.height != s) throw ConfigError("depth map size does not match the input image");
    for (std::size_t q = 0; q < s * s; ++q) x[3 * s * s + q] = code_to_depth(d.pixels[q]);
  }
  return x;
}

template <class T>
Tensor<float> infer_level1(const PyNetModel<T>& model, const Tensor<float>& input) {
  const PyNetModel<T> sized = model.with_input_size(static_cast<int>(input.height()));
  return sized.predict(input.cast<T>(), 1).template cast<float>();
}

std::set<int> parse_level_set(const std::string& text) {
  std::set<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(std::remove_if(item.begin(), item.end(), ::isspace), item.end());
    if (item.empty()) continue;
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw ConfigError("--disable: '" + item + "' is not a level number");
    out.insert(v);
  }
  return out;
}

std::string set_label(const std::set<int>& s) {
  if (s.empty()) return "none";
  std::string out;
  for (int l : s) out += (out.empty() ? "" : "_") + std::to_string(l);
  return out;
}

double mean_abs_diff(const Tensor<float>& a, const Tensor<float>& b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) sum += std::abs(0.5 * (double(a[i]) - double(b[i])));
  return sum / static_cast<double>(a.numel());
}

// ---- commands ----

int cmd_gen_data(const std::string& config_path) {
  const RunConfig cfg = load_run_config(config_path);
  ensure_dir(cfg.data.dir, "data.dir");
  const Manifest m = generate_dataset(cfg.data.n, cfg.data.seed, cfg.data.dir, cfg.model.input_size);
  std::cerr << "wrote " << m.samples.size() << " samples to " << cfg.data.dir.string() << '\n';
  return kExitOk;
}

TrainData load_training_data(const RunConfig& cfg) {
  if (cfg.data.dir.empty()) throw ConfigError("data.dir is not set");
  if (!fs::exists(cfg.data.dir / kManifestName)) {
    throw ConfigError("no dataset at " + cfg.data.dir.string() + " (missing " + kManifestName + "); run gen-data");
  }
  const Manifest m = read_manifest(cfg.data.dir);
  if (m.input_size != cfg.model.input_size) {
    throw ConfigError("dataset input_size " + std::to_string(m.input_size) + " differs from model.input_size " +
                      std::to_string(cfg.model.input_size));
  }
  TrainData d;
  d.train = load_split(cfg.data.dir, Split::kTrain, cfg.model.levels);
  d.val = load_split(cfg.data.dir, Split::kVal, cfg.model.levels);
  d.test = load_split(cfg.data.dir, Split::kTest, cfg.model.levels);
  return d;
}

template <class T>
void run_training(const RunConfig& cfg, const TrainData& data, const std::string& resume) {
  TrainState<T> state = TrainState<T>::fresh(cfg.model, cfg.schedule.seed);
  if (!resume.empty()) {
    if (!fs::exists(resume)) throw ConfigError("resume checkpoint not found: " + resume);
    const auto bytes = read_file(resume);
    if (checkpoint_precision(bytes) != precision_name(cfg.precision)) {
      throw ConfigError("resume checkpoint precision differs from mode.precision");
    }
    state = TrainState<T>::from_checkpoint(load_checkpoint<T>(bytes));
    if (!(state.model.config() == cfg.model.resolved())) {
      throw ConfigError("resume checkpoint was trained with a different model config");
    }
  }
  const RunReport report = train_progressive(state, data, cfg.schedule, cfg.io);
  if (report.test) {
    std::cerr << "test PSNR " << report.test->psnr.mean << " dB (baseline " << report.test->baseline_psnr.mean
              << "), SSIM " << report.test->ssim.mean << " (baseline " << report.test->baseline_ssim.mean << ")\n";
  }
}

int cmd_train(const std::string& config_path, const std::string& resume, int stop_after) {
  RunConfig cfg = load_run_config(config_path);
  ensure_dir(cfg.io.out_dir, "io.out_dir");
  if (stop_after > 0) {
    if (stop_after > cfg.model.levels) throw ConfigError("--stop-after-level outside the model's levels");
    cfg.io.stop_after_level = stop_after;
  }
  const TrainData data = load_training_data(cfg);
  if (cfg.precision == Precision::kF64) {
    run_training<double>(cfg, data, resume);
  } else {
    run_training<float>(cfg, data, resume);
  }
  write_json(cfg.io.out_dir / "run_config.json", to_json(cfg));
  return kExitOk;
}

int cmd_infer(const std::string& ckpt, const std::string& input, const std::string& depth, const std::string& output) {
  with_checkpoint(ckpt, [&](auto& c) {
    const Tensor<float> x = load_input(c.model.config(), input, depth);
    write_png8(output, to_image8(infer_level1(c.model, x)));
  });
  return kExitOk;
}

int cmd_ablate(const std::string& ckpt, const std::vector<std::string>& disable, const std::string& input,
               const std::string& depth, const fs::path& out_dir) {
  std::vector<std::set<int>> sets;
  for (const auto& d : disable) sets.push_back(parse_level_set(d));
  with_checkpoint(ckpt, [&](auto& c) {
    const int levels = c.model.config().levels;
    for (const auto& s : sets) {
      for (int l : s) {
        if (l < 4 || l > levels) {
          throw ConfigError("--disable: level " + std::to_string(l) + " outside [4, " + std::to_string(levels) +
                            "]; only levels 4 and deeper may be disabled");
        }
      }
    }
    const Tensor<float> x = load_input(c.model.config(), input, depth);
    ensure_dir(out_dir, "--out-dir");
    const Tensor<float> base = infer_level1(c.model, x);
    write_png8((out_dir / "baseline.png").string(), to_image8(base));
    json pairs = json::array();
    for (const auto& s : sets) {
      const Tensor<float> y = infer_level1(ablate_levels(c.model, s), x);
      const std::string name = "ablate_" + set_label(s) + ".png";
      write_png8((out_dir / name).string(), to_image8(y));
      pairs.push_back({{"disabled", std::vector<int>(s.begin(), s.end())},
                       {"output", name},
                       {"mad", mean_abs_diff(base, y)}});
    }
    write_json(out_dir / "ablation.json",
               {{"baseline", "baseline.png"}, {"metric", "mean_abs_diff_unit_range"}, {"pairs", pairs}});
  });
  return kExitOk;
}

int cmd_eval(const std::string& ckpt, const fs::path& data_dir, const std::string& split_name, const fs::path& out) {
  const Split split = parse_split(split_name);
  if (!fs::exists(data_dir / kManifestName)) throw ConfigError("no dataset at " + data_dir.string());
  with_checkpoint(ckpt, [&](auto& c) {
    const Manifest m = read_manifest(data_dir);
    if (m.input_size != c.model.config().input_size) {
      throw ConfigError("dataset input_size differs from the checkpoint's model");
    }
    const EvalReport r = evaluate(c.model, load_split(data_dir, split, 1), split_name);
    write_json(out, to_json(r));
    std::cerr << split_name << ": PSNR " << r.psnr.mean << " dB, margin " << r.psnr_margin << " dB\n";
  });
  return kExitOk;
}

struct Timing {
  int threads = 1;
  std::vector<double> ms;
  double median = 0.0, p90 = 0.0;
};

double nearest_rank(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
  return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

template <class T>
Timing time_forward(const PyNetModel<T>& model, const Tensor<T>& x, int iters, int threads) {
  set_num_threads(threads);
  Timing t;
  t.threads = num_threads();
  (void)model.predict(x, 1);  // warm-up
  for (int i = 0; i < iters; ++i) {
    const auto a = std::chrono::steady_clock::now();
    const Tensor<T> y = model.predict(x, 1);
    const auto b = std::chrono::steady_clock::now();
    t.ms.push_back(std::chrono::duration<double, std::milli>(b - a).count());
  }
  t.median = nearest_rank(t.ms, 0.5);
  t.p90 = nearest_rank(t.ms, 0.9);
  return t;
}

int cmd_bench(const std::string& ckpt, int size, int iters, const fs::path& out) {
  if (iters < 1) throw ConfigError("--iters must be >= 1");
  with_checkpoint(ckpt, [&](auto& c) {
    using T = typename std::decay_t<decltype(c.model.parameters().front().var.value())>::value_type;
    const int unit = 1 << (c.model.config().levels - 1);
    if (size < unit || size % unit != 0) {
      throw ConfigError("--size must be a positive multiple of " + std::to_string(unit));
    }
    const auto model = c.model.with_input_size(size);
    Rng rng(0);
    const auto s = static_cast<std::size_t>(size);
    Tensor<T> x({static_cast<std::size_t>(c.model.config().input_channels), s, s});
    for (auto& v : x.data()) v = T(rng.uniform(-1.0, 1.0));
    const Timing single = time_forward(model, x, iters, 1);
    const Timing multi = time_forward(model, x, iters, 0);
    set_num_threads(1);
    auto j = [](const Timing& t) {
      return json{{"threads", t.threads}, {"median_ms", t.median}, {"p90_ms", t.p90}, {"samples_ms", t.ms}};
    };
    write_json(out, {{"size", size},
                     {"output_size", 2 * size},
                     {"iters", iters},
                     {"warmup", 1},
                     {"precision", sizeof(T) == 4 ? "f32" : "f64"},
                     {"param_count", c.model.param_count()},
                     {"single_thread", j(single)},
                     {"multi_thread", j(multi)}});
    std::cerr << "level-1 forward " << size << "px: median " << single.median << " ms (1 thread), "
              << multi.median << " ms (" << multi.threads << " threads)\n";
  });
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Depth-guided bokeh rendering with a multi-scale pyramid network", "pynet-bokeh"};
  app.require_subcommand(1);

  std::string config, resume, ckpt, input, depth, output, data_dir, split = "test", out, out_dir;
  std::vector<std::string> disable;
  int stop_after = 0, size = 128, iters = 20;

  auto* gen = app.add_subcommand("gen-data", "Render a synthetic dataset");
  gen->add_option("--config", config, "Run config JSON")->required();

  auto* train = app.add_subcommand("train", "Progressive training, deepest level first");
  train->add_option("--config", config, "Run config JSON")->required();
  train->add_option("--resume", resume, "Checkpoint to continue from");
  train->add_option("--stop-after-level", stop_after, "Stop once this level has finished");

  auto* infer = app.add_subcommand("infer", "Render the bokeh image for one input");
  infer->add_option("--ckpt", ckpt)->required();
  infer->add_option("--input", input, "RGB PNG, square")->required();
  infer->add_option("--depth", depth, "16-bit depth PNG");
  infer->add_option("--output", output, "Output PNG at twice the input size")->required();

  auto* ablate = app.add_subcommand("ablate", "Compare outputs with deep levels switched off");
  ablate->add_option("--ckpt", ckpt)->required();
  ablate->add_option("--disable", disable, "Comma-separated levels; repeat for more sets")
      ->required()
      ->allow_extra_args(false);
  ablate->add_option("--input", input)->required();
  ablate->add_option("--depth", depth);
  ablate->add_option("--out-dir", out_dir)->required();

  auto* eval = app.add_subcommand("eval", "Score a checkpoint on a dataset split");
  eval->add_option("--ckpt", ckpt)->required();
  eval->add_option("--data", data_dir)->required();
  eval->add_option("--split", split)->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_option("--out", out, "Report path")->default_val("eval_report.json");

  auto* bench = app.add_subcommand("bench", "Time the level-1 forward pass");
  bench->add_option("--ckpt", ckpt)->required();
  bench->add_option("--size", size)->default_val(128);
  bench->add_option("--iters", iters)->default_val(20);
  bench->add_option("--out", out, "Report path")->default_val("bench_report.json");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*gen) return cmd_gen_data(config);
    if (*train) return cmd_train(config, resume, stop_after);
    if (*infer) return cmd_infer(ckpt, input, depth, output);
    if (*ablate) return cmd_ablate(ckpt, disable, input, depth, out_dir);
    if (*eval) return cmd_eval(ckpt, data_dir, split, out);
    if (*bench) return cmd_bench(ckpt, size, iters, out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace bokeh
