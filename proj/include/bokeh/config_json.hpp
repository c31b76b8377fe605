#pragma once

#include <json.hpp>

#include "bokeh/pynet.hpp"

namespace bokeh {

nlohmann::json to_json(const PyNetConfig& config);
// Unknown keys are rejected with ConfigError; missing keys keep defaults.
PyNetConfig pynet_config_from_json(const nlohmann::json& j);

// Throws ConfigError naming the first key of `j` not in `allowed`.
void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const char* where);

}  // namespace bokeh
