#pragma once

// Engine configuration: JSON file with one object per section. Defaults are
// overridden by the file, then by command line flags. See
// docs/config-format.md for the key list.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <type_traits>
#include <utility>

#include "json.hpp"
#include "panodense/consistency.hpp"
#include "panodense/errors.hpp"
#include "panodense/fusion.hpp"
#include "panodense/patchmatch.hpp"
#include "panodense/view_filter.hpp"

namespace panodense {

struct ProcessingConfig {
  /// Processing resolution; 0 keeps the dataset resolution.
  int width = 0;
  int height = 0;
  int queue_capacity = 8;

  void validate() const {
    if (width != 0 || height != 0) {
      if (height <= 0 || width != 2 * height) {
        throw ConfigError("processing.width and processing.height must satisfy width = 2 * height > 0 (or both 0)");
      }
      if (width % 4 != 0) throw ConfigError("processing.width must be a multiple of 4");
    }
    if (queue_capacity < 1) throw ConfigError("processing.queue_capacity must be >= 1");
  }
};

struct OutputConfig {
  bool save_depth = false;
  bool write_cloud = true;
  bool evaluate = true;

  void validate() const {}
};

struct EngineConfig {
  ViewFilterConfig view_filter;
  PatchMatchOptions patchmatch;
  /// Seeds every random draw of the run.
  std::uint64_t seed = 1;
  bool warp = true;
  /// Narrows the depth range of each stereo group to its reference sparse
  /// points (2nd to 98th percentile distance, widened by auto_range_margin),
  /// clipped to [depth_min, depth_max].
  bool auto_depth_range = true;
  double auto_range_margin = 1.5;
  ConsistencyConfig consistency;
  FusionConfig fusion;
  ProcessingConfig processing;
  OutputConfig output;

  void validate() const {
    view_filter.validate();
    patchmatch.validate();
    if (!(auto_range_margin >= 1.0)) throw ConfigError("patchmatch.auto_range_margin must be >= 1");
    consistency.validate();
    fusion.validate();
    processing.validate();
    output.validate();
  }
};

/// Calls fn(section, key, field) for every configurable field.
template <typename Config, typename Fn>
void visit_config_fields(Config& c, Fn&& fn) {
  fn("view_filter", "theta_min_deg", c.view_filter.theta_min_deg);
  fn("view_filter", "theta_max_deg", c.view_filter.theta_max_deg);
  fn("view_filter", "accept_fraction", c.view_filter.accept_fraction);

  fn("patchmatch", "half_window", c.patchmatch.patch.half_window);
  fn("patchmatch", "sample_stride", c.patchmatch.patch.sample_stride);
  fn("patchmatch", "cost_truncation", c.patchmatch.patch.cost_truncation);
  fn("patchmatch", "iterations", c.patchmatch.iterations);
  fn("patchmatch", "depth_min", c.patchmatch.depth_range.min);
  fn("patchmatch", "depth_max", c.patchmatch.depth_range.max);
  fn("patchmatch", "auto_depth_range", c.auto_depth_range);
  fn("patchmatch", "auto_range_margin", c.auto_range_margin);
  fn("patchmatch", "refine_depth_fraction", c.patchmatch.refine_depth_fraction);
  fn("patchmatch", "refine_normal_deg", c.patchmatch.refine_normal_deg);
  fn("patchmatch", "max_valid_cost", c.patchmatch.max_valid_cost);
  fn("patchmatch", "pole_latitude_deg", c.patchmatch.pole_latitude_deg);
  fn("patchmatch", "median_window", c.patchmatch.median_window);
  fn("patchmatch", "median_rel_threshold", c.patchmatch.median_rel_threshold);
  fn("patchmatch", "warp", c.warp);
  fn("patchmatch", "seed", c.seed);
  fn("patchmatch", "workers", c.patchmatch.workers);

  fn("consistency", "window", c.consistency.window);
  fn("consistency", "min_support", c.consistency.min_support);
  fn("consistency", "rel_depth_tol", c.consistency.rel_depth_tol);

  fn("fusion", "buffer", c.fusion.buffer);
  fn("fusion", "pixel_radius", c.fusion.pixel_radius);
  fn("fusion", "rel_depth_tol", c.fusion.rel_depth_tol);
  fn("fusion", "erase_duplicates", c.fusion.erase_duplicates);

  fn("processing", "width", c.processing.width);
  fn("processing", "height", c.processing.height);
  fn("processing", "queue_capacity", c.processing.queue_capacity);

  fn("output", "save_depth", c.output.save_depth);
  fn("output", "write_cloud", c.output.write_cloud);
  fn("output", "evaluate", c.output.evaluate);
}

inline nlohmann::json config_to_json(const EngineConfig& config) {
  nlohmann::json out = nlohmann::json::object();
  visit_config_fields(config, [&](const char* section, const char* key, const auto& field) { out[section][key] = field; });
  return out;
}

namespace detail {

template <typename T>
void assign_json(T& field, const nlohmann::json& value, const std::string& key) {
  using nlohmann::json;
  if constexpr (std::is_same_v<T, bool>) {
    if (!value.is_boolean()) throw ConfigError(key + ": expected true or false");
    field = value.get<bool>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!value.is_number_integer()) throw ConfigError(key + ": expected an integer");
    if constexpr (std::is_unsigned_v<T>) {
      if (value.is_number_unsigned()) {
        field = value.get<T>();
      } else {
        if (value.get<std::int64_t>() < 0) throw ConfigError(key + ": expected a non-negative integer");
        field = static_cast<T>(value.get<std::int64_t>());
      }
    } else {
      const auto v = value.get<std::int64_t>();
      if (v < std::numeric_limits<T>::min() || v > std::numeric_limits<T>::max()) {
        throw ConfigError(key + ": integer out of range");
      }
      field = static_cast<T>(v);
    }
  } else {
    if (!value.is_number()) throw ConfigError(key + ": expected a number");
    field = value.get<T>();
  }
}

}  // namespace detail

/// Applies the keys of `doc` on top of `config`. Unknown sections or keys are
/// rejected; the result is not validated.
inline void merge_config(EngineConfig& config, const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("configuration root must be an object");
  std::set<std::string> known_sections;
  std::set<std::string> known_keys;
  visit_config_fields(config, [&](const char* section, const char* key, auto&) {
    known_sections.insert(section);
    known_keys.insert(std::string(section) + "." + key);
  });
  for (const auto& [section, body] : doc.items()) {
    if (!known_sections.count(section)) throw ConfigError(section + ": unknown section");
    if (!body.is_object()) throw ConfigError(section + ": expected an object");
    for (const auto& [key, value] : body.items()) {
      if (!known_keys.count(section + "." + key)) throw ConfigError(section + "." + key + ": unknown key");
    }
  }
  visit_config_fields(config, [&](const char* section, const char* key, auto& field) {
    if (doc.contains(section) && doc.at(section).contains(key)) {
      detail::assign_json(field, doc.at(section).at(key), std::string(section) + "." + key);
    }
  });
}

inline EngineConfig config_from_json(const nlohmann::json& doc) {
  EngineConfig config;
  merge_config(config, doc);
  config.validate();
  return config;
}

/// Defaults merged with the file at `path`. An empty file means defaults.
inline EngineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    EngineConfig config;
    config.validate();
    return config;
  }
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": parse error: " + e.what());
  }
  return config_from_json(doc);
}

/// Command line settings applied on top of a loaded configuration.
struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  bool no_warp = false;
  bool save_depth = false;
  /// WIDTHxHEIGHT, empty to keep the configured resolution.
  std::string resolution;
};

inline std::pair<int, int> parse_resolution(const std::string& text) {
  int w = 0, h = 0;
  char sep = 0;
  char extra = 0;
  if (std::sscanf(text.c_str(), "%d%c%d%c", &w, &sep, &h, &extra) != 3 || (sep != 'x' && sep != 'X')) {
    throw ConfigError("resolution: expected WIDTHxHEIGHT, got '" + text + "'");
  }
  return {w, h};
}

/// Applies `overrides` and validates the result.
inline void apply_overrides(EngineConfig& config, const ConfigOverrides& overrides) {
  if (overrides.seed) config.seed = *overrides.seed;
  if (overrides.workers) config.patchmatch.workers = *overrides.workers;
  if (overrides.no_warp) config.warp = false;
  if (overrides.save_depth) config.output.save_depth = true;
  if (!overrides.resolution.empty()) {
    const auto [w, h] = parse_resolution(overrides.resolution);
    config.processing.width = w;
    config.processing.height = h;
  }
  config.validate();
}

inline void save_config(const std::filesystem::path& path, const EngineConfig& config) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << config_to_json(config).dump(2) << "\n";
}

}  // namespace panodense
