#include "bokeh/run_config.hpp"

#include <fstream>

#include "bokeh/config_json.hpp"

namespace bokeh {

using nlohmann::json;

const char* precision_name(Precision p) { return p == Precision::kF32 ? "f32" : "f64"; }

namespace {

LevelSchedule level_schedule_from_json(const json& j, LevelSchedule base, const char* where) {
  reject_unknown_keys(j, {"epochs", "batch_size", "lr"}, where);
  if (j.contains("epochs")) base.epochs = j.at("epochs").get<int>();
  if (j.contains("batch_size")) base.batch_size = j.at("batch_size").get<int>();
  if (j.contains("lr")) base.lr = j.at("lr").get<double>();
  return base;
}

TrainSchedule schedule_from_json(const json& j, int model_levels) {
  reject_unknown_keys(j, {"epochs", "batch_size", "lr", "level1_lr_scale", "seed", "order", "levels"}, "schedule");
  const LevelSchedule base = level_schedule_from_json(
      json{{"epochs", j.value("epochs", 30)}, {"batch_size", j.value("batch_size", 8)}, {"lr", j.value("lr", 5e-5)}},
      {}, "schedule");
  const double scale = j.value("level1_lr_scale", TrainSchedule::kDefaultLevel1LrScale);
  if (!(scale >= 0.0)) throw ConfigError("schedule: level1_lr_scale must be >= 0");
  TrainSchedule s = TrainSchedule::uniform(model_levels, base, scale);
  if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("order")) s.order = j.at("order").get<std::vector<int>>();
  if (j.contains("levels")) {
    for (const auto& item : j.at("levels").items()) {
      int level = 0;
      try {
        std::size_t used = 0;
        level = std::stoi(item.key(), &used);
        if (used != item.key().size()) throw std::invalid_argument(item.key());
      } catch (const std::exception&) {
        throw ConfigError("schedule.levels: key '" + item.key() + "' is not a level number");
      }
      if (!s.levels.count(level)) throw ConfigError("schedule.levels: level " + item.key() + " not in the model");
      s.levels[level] = level_schedule_from_json(item.value(), s.levels[level], "schedule.levels entry");
    }
  }
  return s;
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
  reject_unknown_keys(j, {"model", "schedule", "data", "io", "mode"}, "run config");
  RunConfig c;
  try {
    c.model = pynet_config_from_json(j.value("model", json::object()));
    const json mode = j.value("mode", json::object());
    reject_unknown_keys(mode, {"deterministic", "precision"}, "mode");
    const std::string precision = mode.value("precision", std::string("f32"));
    if (precision == "f32") {
      c.precision = Precision::kF32;
    } else if (precision == "f64") {
      c.precision = Precision::kF64;
    } else {
      throw ConfigError("mode.precision must be \"f32\" or \"f64\", got \"" + precision + "\"");
    }
    c.schedule = schedule_from_json(j.value("schedule", json::object()), c.model.levels);
    c.schedule.deterministic = mode.value("deterministic", true);
    c.schedule.validate(c.model.levels);

    const json data = j.value("data", json::object());
    reject_unknown_keys(data, {"dir", "n", "seed"}, "data");
    if (data.contains("dir")) c.data.dir = data.at("dir").get<std::string>();
    if (data.contains("n")) {
      const auto n = data.at("n").get<std::int64_t>();
      if (n < 1) throw ConfigError("data.n must be >= 1");
      c.data.n = static_cast<std::size_t>(n);
    }
    if (data.contains("seed")) c.data.seed = data.at("seed").get<std::uint64_t>();

    const json io = j.value("io", json::object());
    reject_unknown_keys(io, {"out_dir", "checkpoint_every"}, "io");
    if (io.contains("out_dir")) c.io.out_dir = io.at("out_dir").get<std::string>();
    c.io.checkpoint_every = io.value("checkpoint_every", 1);
    if (c.io.checkpoint_every < 1) throw ConfigError("io.checkpoint_every must be >= 1");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

json to_json(const RunConfig& c) {
  json levels = json::object();
  for (const auto& [l, s] : c.schedule.levels) {
    levels[std::to_string(l)] = {{"epochs", s.epochs}, {"batch_size", s.batch_size}, {"lr", s.lr}};
  }
  return {{"model", to_json(c.model)},
          {"schedule", {{"order", c.schedule.order}, {"seed", c.schedule.seed}, {"levels", levels}}},
          {"data", {{"dir", c.data.dir.string()}, {"n", c.data.n}, {"seed", c.data.seed}}},
          {"io", {{"out_dir", c.io.out_dir.string()}, {"checkpoint_every", c.io.checkpoint_every}}},
          {"mode", {{"deterministic", c.schedule.deterministic}, {"precision", precision_name(c.precision)}}}};
}

}  // namespace bokeh
