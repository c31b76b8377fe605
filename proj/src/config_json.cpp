#include "bokeh/config_json.hpp"

#include <algorithm>
#include <cstring>

namespace bokeh {

using nlohmann::json;

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed, const char* where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
    if (!known) throw ConfigError(std::string(where) + ": unknown key '" + key + "'");
  }
}

json to_json(const PyNetConfig& config) {
  const PyNetConfig c = config.resolved();
  return json{{"levels", c.levels},
              {"base_width", c.base_width},
              {"width_cap_multiplier", c.width_cap_multiplier},
              {"input_channels", c.input_channels},
              {"input_size", c.input_size},
              {"kernel_sets", c.kernel_sets},
              {"instance_norm_levels", c.instance_norm_levels},
              {"seed", c.seed}};
}

PyNetConfig pynet_config_from_json(const json& j) {
  reject_unknown_keys(j,
                      {"levels", "base_width", "width_cap_multiplier", "input_channels", "input_size",
                       "kernel_sets", "instance_norm_levels", "seed"},
                      "model config");
  PyNetConfig c;
  try {
    if (j.contains("levels")) c.levels = j.at("levels").get<int>();
    if (j.contains("base_width")) c.base_width = j.at("base_width").get<int>();
    if (j.contains("width_cap_multiplier")) c.width_cap_multiplier = j.at("width_cap_multiplier").get<int>();
    if (j.contains("input_channels")) c.input_channels = j.at("input_channels").get<int>();
    if (j.contains("input_size")) c.input_size = j.at("input_size").get<int>();
    if (j.contains("kernel_sets")) c.kernel_sets = j.at("kernel_sets").get<std::vector<std::vector<int>>>();
    if (j.contains("instance_norm_levels")) c.instance_norm_levels = j.at("instance_norm_levels").get<std::set<int>>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c = c.resolved();
  c.validate();
  return c;
}

}  // namespace bokeh
