// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "agentloom/message.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace agentloom {

/// Reads the small TOML subset used by agentloom.toml: `[table]` headers (dotted names
/// allowed), `key = value` pairs with basic or literal strings, integers, floats, booleans
/// and flat arrays of those, and `#` comments. Produces nested JSON objects. Throws
/// ParseError naming the line.
json parse_toml_subset(std::string_view text);
json load_toml_subset(const std::filesystem::path& path);

struct ModelConfig {
    /// "openai" or "mock".
    std::string kind = "openai";
    std::string base_url = "https://api.openai.com/v1";
    /// Name of the environment variable holding the API key. Keys never come from flags.
    std::string api_key_env = "OPENAI_API_KEY";
    std::string model_name = "gpt-4o-mini";
    std::optional<std::filesystem::path> mock_script;
};

struct CliConfig {
    ModelConfig model;
    std::optional<std::string> studio_url;
    std::filesystem::path storage_root = "eval_storage";
    std::string log_level = "warn";
};

/// Applies `[model]`, `[studio]`, `[eval]` and `[log]` tables over the defaults.
CliConfig config_from_json(const json& j);
/// Missing file gives the defaults.
CliConfig load_cli_config(const std::filesystem::path& path);

} // namespace agentloom
