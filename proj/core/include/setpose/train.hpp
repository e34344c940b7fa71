#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "setpose/data.hpp"
#include "setpose/matching.hpp"
#include "setpose/model.hpp"
#include "setpose/nn/checkpoint.hpp"

namespace setpose {

struct TrainConfig {
  double lr_transformer = 1e-4;
  double lr_backbone = 1e-5;
  double weight_decay = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 8;
  std::size_t total_epochs = 30;
  /// Epoch (0-based) from which both rates are divided by lr_drop_factor;
  /// at or beyond total_epochs there is no drop.
  std::size_t lr_drop_epoch = 20;
  double lr_drop_factor = 10.0;
  /// 0 means ceil(n_samples / batch_size).
  std::size_t steps_per_epoch = 0;
  double lambda_cls = 1.0;
  double lambda_l1 = 5.0;
  double w_noobj = 0.1;
  /// Random horizontal flip with probability 0.5.
  bool hflip = true;
  std::uint64_t seed = 0;
  /// Forces single-threaded execution everywhere.
  bool deterministic = true;

  /// Throws ConfigError.
  void validate() const;
  LossWeights loss_weights() const { return {lambda_cls, lambda_l1, w_noobj}; }
  /// Transformer and backbone rates in effect during `epoch` (0-based).
  double lr_transformer_at(std::size_t epoch) const;
  double lr_backbone_at(std::size_t epoch) const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

void to_json(nlohmann::json& j, const TrainConfig& cfg);
void from_json(const nlohmann::json& j, TrainConfig& cfg);

struct StepRecord {
  std::size_t step = 0;  // 1-based, strictly increasing
  std::size_t epoch = 0;
  LossBreakdown loss;  // batch means
  double lr_transformer = 0.0;
  double lr_backbone = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean of the epoch's step totals
  std::optional<double> val_mpjpe_left;
  std::optional<double> val_mpjpe_right;
};

struct TrainLog {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
};

nlohmann::json to_json(const StepRecord& record);
nlohmann::json to_json(const EpochRecord& record);

struct TrainOptions {
  const Dataset* validation = nullptr;
  /// When set, <dir>/last and <dir>/best are written after every epoch.
  std::optional<std::filesystem::path> checkpoint_dir;
  /// When set, every step and epoch record is appended here as one JSON line.
  std::optional<std::filesystem::path> log_path;
  /// Worker cap for per-sample work inside a batch; ignored when deterministic.
  std::size_t threads = 1;
  /// Stops after this many steps in total (0 = run the full schedule).
  std::size_t max_steps = 0;
  /// Starts from these parameters instead of a fresh initialization.
  const nn::ParamStore* initial_params = nullptr;
  std::function<void(const StepRecord&)> on_step;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  nn::Checkpoint last;
  /// Lowest mean of left/right validation MPJPE; equals `last` without validation.
  nn::Checkpoint best;
  TrainLog log;
};

/// Per step: flip-augments every sample of the batch, runs the network,
/// matches each sample's hands to queries, averages the per-sample set loss
/// over the batch and takes one AdamW step with parameters under "backbone."
/// at lr_backbone and the rest at lr_transformer.
///
/// Gradients are reduced in sample order, so results do not depend on the
/// thread count. Throws NonFiniteLoss naming the step.
TrainResult train(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                  const Dataset& dataset, const TrainOptions& options = {});

/// Regression targets of every annotated hand. Throws ShapeError when the
/// image size disagrees with the model.
std::vector<HandTarget> make_targets(const SceneSample& sample, const ModelConfig& model_cfg);

/// Metadata stored in checkpoints written by train().
nlohmann::json checkpoint_metadata(const ModelConfig& model_cfg, const TrainConfig& train_cfg);
/// Reads the model section back. Throws FormatError.
ModelConfig model_config_from_checkpoint(const nn::Checkpoint& checkpoint);

}  // namespace setpose
