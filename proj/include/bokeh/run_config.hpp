#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "bokeh/pynet.hpp"
#include "bokeh/train.hpp"

namespace bokeh {

enum class Precision { kF32, kF64 };

// The JSON document driving gen-data and train. Every section is optional
// and falls back to the desk defaults; unknown keys are errors.
struct RunConfig {
  PyNetConfig model;
  TrainSchedule schedule;
  struct Data {
    std::filesystem::path dir;
    std::size_t n = 200;
    std::uint64_t seed = 1;
  } data;
  TrainIo io;
  Precision precision = Precision::kF32;
};

// Throws ConfigError on unknown keys, wrong types or violated invariants.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& config);

const char* precision_name(Precision p);

}  // namespace bokeh
