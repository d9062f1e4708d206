#pragma once

#include "tdm/model.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>

namespace tdm {

/// Parses a configuration document. Omitted `per_channel_rate_hz` and
/// `electrode_count` are derived from the topology; the result is not validated.
[[nodiscard]] SystemConfig config_from_json(const nlohmann::json& doc);
[[nodiscard]] nlohmann::json config_to_json(const SystemConfig& cfg);

[[nodiscard]] SystemConfig load_config(const std::filesystem::path& path);
[[nodiscard]] nlohmann::json load_json(const std::filesystem::path& path);

/// Rates are written as JSON numbers when integral, "num/den" strings otherwise.
[[nodiscard]] Rational rational_from_json(const nlohmann::json& value, const char* what);
[[nodiscard]] nlohmann::json rational_to_json(const Rational& value);

}  // namespace tdm
