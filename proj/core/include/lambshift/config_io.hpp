#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "lambshift/run_config.hpp"

namespace lambshift {

/// Parses a run configuration (JSON; `//` and `/* */` comments allowed).
/// Missing fields take defaults; unknown keys and type mismatches raise
/// ConfigError naming the field path.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

/// Full configuration with every default made explicit.
/// parse_config(config_to_text(c)) == c.
std::string config_to_text(const RunConfig& config);

}  // namespace lambshift
