#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "setpose/config.hpp"

namespace setpose {

struct AblationVariant {
  std::string name;
  std::size_t image_size = 32;  // square images
  DepthMode depth_mode = DepthMode::AbsolutePerJoint;
};

struct AblationConfig {
  /// Everything except image size and depth mode comes from here.
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  std::size_t small_size = 32;
  std::size_t large_size = 64;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::size_t n_train = 512;
  std::size_t n_val = 128;
  std::size_t n_test = 128;
  std::size_t threads = 1;

  /// small/relative, small/absolute, large/absolute.
  std::vector<AblationVariant> variants() const;
  void validate() const;
};

struct SideErrors {
  double left = 0.0;  // mm
  double right = 0.0;
};

struct AblationRun {
  std::uint64_t seed = 0;
  std::size_t steps = 0;
  SideErrors test;
  SideErrors shifted;
};

/// One table row: a variant with rescaling off or on. The side errors are
/// means over seeds; the per-seed numbers are kept in `runs`.
struct AblationRow {
  AblationVariant variant;
  bool rescale = false;
  SideErrors test;
  SideErrors shifted;
  std::vector<AblationRun> runs;
};

struct AblationTable {
  std::vector<AblationRow> rows;
  std::vector<std::uint64_t> seeds;
  double shifted_subject_scale_factor = 1.0;
};

/// Trains every variant once per seed on its own rendering of the train
/// split (validation picks the checkpoint), then evaluates the test and
/// test-shifted splits with rescaling off and on. Scale statistics come from
/// the train split.
AblationTable ablate(const AblationConfig& config,
                     const std::function<void(const std::string&)>& progress = {});

nlohmann::json to_json(const AblationTable& table);
/// Aligned plain-text table, one line per row.
std::string format_table(const AblationTable& table);

}  // namespace setpose
