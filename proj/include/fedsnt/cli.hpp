#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "fedsnt/scenario.hpp"

namespace fedsnt {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Config file (JSON, TOML, or a run manifest) plus overrides, resolved and
// validated. An empty path starts from the built-in defaults.
ScenarioConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides);

// "v1,v2,..." or "a..b:step" (inclusive). Values are JSON scalars or strings.
std::vector<nlohmann::json> parse_grid_values(const std::string& spec);

}  // namespace fedsnt
