#pragma once

#include <string>
#include <string_view>

#include "pararank/pipeline.hpp"

namespace pararank {

/// Reads a PipelineConfig from JSON (`.json`) or a flat TOML subset
/// (`key = value`, `#` comments, optional `[weights]` table). Unknown keys
/// are rejected; missing keys keep their defaults.
PipelineConfig load_pipeline_config(const std::string& path);
PipelineConfig parse_pipeline_config_json(std::string_view text);
PipelineConfig parse_pipeline_config_toml(std::string_view text);

}  // namespace pararank
