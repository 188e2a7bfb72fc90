#pragma once

// YAML experiment configs.
//
// Every key is checked against a fixed schema; unknown keys, wrong types and
// missing required fields raise ConfigError with the dotted key path. A list
// given where the schema expects a scalar (or a list of lists where it
// expects a list) is a sweep axis; axes expand to their cartesian product in
// document order, last axis fastest.
//
// Overrides are "dotted.path=value" strings whose value is parsed as YAML
// and applied before validation.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "codistillery/harness.hpp"

namespace codistillery {

struct SweepPoint {
  /// Empty for a config without sweep axes, else "point_000", ...
  std::string label;
  /// (path, value) per sweep axis.
  std::vector<std::pair<std::string, std::string>> assignments;
  /// Canonical YAML of the fully resolved point (sorted keys).
  std::string canonical;
  ExperimentConfig experiment;
  bool export_dataset = false;
};

struct ParsedConfig {
  std::vector<SweepPoint> points;
  /// Present when the document has a `multiview` section.
  std::optional<MultiviewConfig> multiview;
};

/// `seed_offset` is added to every run seed and to the data seed.
ParsedConfig parse_config(std::string_view yaml_text, std::span<const std::string> overrides = {},
                          std::int64_t seed_offset = 0);
ParsedConfig load_config(const std::filesystem::path& path, std::span<const std::string> overrides = {},
                         std::int64_t seed_offset = 0);

/// Lower-case hex SHA-256.
std::string sha256_hex(std::string_view bytes);

}  // namespace codistillery
