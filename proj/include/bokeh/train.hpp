#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bokeh/checkpoint.hpp"
#include "bokeh/losses.hpp"
#include "bokeh/pynet.hpp"
#include "bokeh/synthetic.hpp"

namespace bokeh {

struct LevelSchedule {
  int epochs = 30;
  int batch_size = 8;
  double lr = 5e-5;

  friend bool operator==(const LevelSchedule&, const LevelSchedule&) = default;
};

struct TrainSchedule {
  // Execution order, deepest level first and ending at 1.
  std::vector<int> order;
  std::map<int, LevelSchedule> levels;
  std::uint64_t seed = 0;
  bool deterministic = true;

  static constexpr double kDefaultLevel1LrScale = 0.5;

  // Same epochs / batch / lr at every level, except level 1 whose lr is
  // scaled by level1_lr_scale.
  static TrainSchedule uniform(int model_levels, const LevelSchedule& per_level,
                               double level1_lr_scale = kDefaultLevel1LrScale);

  const LevelSchedule& at(int level) const;
  // Throws ConfigError unless order is model_levels, ..., 1 and every entry is sane.
  void validate(int model_levels) const;
};

struct TrainData {
  std::vector<SamplePair> train, val, test;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_psnr = 0.0;  // NaN when there is no validation data
};

struct LevelLog {
  int level = 0;
  std::vector<double> step_losses;
  std::vector<EpochRecord> epochs;
};

struct TrainIo {
  std::filesystem::path out_dir;  // empty: no checkpoints or logs on disk
  int checkpoint_every = 1;       // epochs between "last" checkpoints
  std::optional<int> stop_after_level;
};

inline constexpr const char* kLastCheckpoint = "last.pynb";
inline constexpr const char* kBestCheckpoint = "best.pynb";
inline constexpr const char* kLogName = "train_log.ndjson";
inline constexpr const char* kReportName = "report.json";
// Checkpoint written when a level finishes, e.g. "level3.pynb".
std::string level_checkpoint_name(int level);

// Everything needed to continue training exactly where it stopped.
template <class T>
struct TrainState {
  PyNetModel<T> model;
  OptimizerStates<T> optimizer;
  TrainingCursor cursor;
  Rng rng;
  std::vector<LevelLog> history;

  static TrainState fresh(const PyNetConfig& config, std::uint64_t seed);
  static TrainState from_checkpoint(Checkpoint<T> ckpt);
  std::vector<std::uint8_t> checkpoint_bytes() const;
};

// Appends NDJSON events to a file; a default-constructed logger drops them.
class EventLog {
 public:
  EventLog() = default;
  explicit EventLog(const std::filesystem::path& path);
  void write(nlohmann::json event);

 private:
  std::ofstream os_;
};

// Trains `level` (and every deeper level) for the scheduled epochs, or the
// remainder of them when the cursor is mid-level.
template <class T>
LevelLog train_level(TrainState<T>& state, const TrainData& data, int level, const TrainSchedule& schedule,
                     const TrainIo& io, EventLog& log);

struct ImageScore {
  std::size_t index = 0;
  double psnr = 0.0, ssim = 0.0;
  double baseline_psnr = 0.0, baseline_ssim = 0.0;
};

struct Aggregate {
  double mean = 0.0, median = 0.0;
};

struct EvalReport {
  std::string split;
  std::vector<ImageScore> images;
  Aggregate psnr, ssim, baseline_psnr, baseline_ssim;
  double psnr_margin = 0.0;  // mean psnr - mean baseline psnr
  double ssim_margin = 0.0;
};

Aggregate aggregate(std::vector<double> values);

// Nearest-neighbour 2x upscale of the color planes of an RGBD input.
Tensor<float> nearest_upscale2(const Tensor<float>& input_rgbd);

// Level-1 metrics on [0, 1] images against the full-resolution targets.
template <class T>
EvalReport evaluate(const PyNetModel<T>& model, const std::vector<SamplePair>& samples,
                    const std::string& split_name);

nlohmann::json to_json(const EvalReport& report);
nlohmann::json to_json(const LevelLog& log);
nlohmann::json to_json(const TrainSchedule& schedule);

struct RunReport {
  std::vector<int> executed_order;
  std::vector<LevelLog> levels;
  std::optional<EvalReport> test;
  nlohmann::json to_json() const;
};

// Runs train_level from the cursor's position down to level 1, then
// evaluates the test split. Writes the report to io.out_dir when set.
template <class T>
RunReport train_progressive(TrainState<T>& state, const TrainData& data, const TrainSchedule& schedule,
                            const TrainIo& io);

}  // namespace bokeh
