#pragma once

#include <string>
#include <vector>

namespace bokeh {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;  // bad flags or configuration
inline constexpr int kExitData = 3;   // unreadable or malformed data

// Runs one pynet-bokeh command. args excludes the program name.
int run_cli(const std::vector<std::string>& args);

}  // namespace bokeh
