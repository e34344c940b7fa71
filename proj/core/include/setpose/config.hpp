#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "setpose/data.hpp"
#include "setpose/model.hpp"
#include "setpose/train.hpp"

namespace setpose {

enum class Split { Train, Val, Test, TestShifted };

std::string_view to_string(Split split);
/// Accepts train, val, test and test-shifted. Throws ConfigError.
Split split_from_string(std::string_view name);

/// Generator settings plus the per-split derivation rules.
struct DataConfig {
  GenConfig gen;
  /// subject_scale_factor used for the test-shifted split.
  double shifted_subject_scale_factor = 1.3;

  /// The generator config for one split: a split-specific seed and, for
  /// test-shifted, the shifted subject scale.
  GenConfig for_split(Split split) const;

  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

void to_json(nlohmann::json& j, const DataConfig& cfg);
void from_json(const nlohmann::json& j, DataConfig& cfg);

struct EvalConfig {
  bool rescale = false;
  std::string scale_stats;  // path to a scale-stats JSON file
  bool pooled_scale = false;

  friend bool operator==(const EvalConfig&, const EvalConfig&) = default;
};

void to_json(nlohmann::json& j, const EvalConfig& cfg);
void from_json(const nlohmann::json& j, EvalConfig& cfg);

/// Top-level experiment file with optional "model", "train", "data" and
/// "eval" sections. Missing keys keep their defaults; unknown keys at any
/// level throw ConfigError naming the key.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  EvalConfig eval;

  void validate() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

void to_json(nlohmann::json& j, const RunConfig& cfg);
void from_json(const nlohmann::json& j, RunConfig& cfg);

/// Parses and validates a config file. Throws IoError / ConfigError.
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace setpose
