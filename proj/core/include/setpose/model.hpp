#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "setpose/geometry.hpp"
#include "setpose/image.hpp"
#include "setpose/nn/tape.hpp"

namespace setpose {

enum class DepthMode {
  /// Every joint's depth is its own channel mapped onto [z_min, z_max].
  AbsolutePerJoint,
  /// Wrist depth is absolute; other joints are wrist + (2 d_norm - 1) * delta.
  RootPlusRelative,
};

enum class PositionEncoding { Sinusoidal, Learned };

inline constexpr std::size_t kNumClasses = 3;  // Left, Right, NoHand
inline constexpr std::size_t kNoHandClass = 2;
inline constexpr std::size_t kJointValues = 3 * kNumJoints;

struct ModelConfig {
  std::size_t image_height = 32;
  std::size_t image_width = 32;
  std::size_t patch_size = 8;
  std::size_t embed_dim = 32;
  std::size_t n_heads = 4;
  std::size_t n_encoder_layers = 6;
  std::size_t n_decoder_layers = 6;
  std::size_t ffn_dim = 64;
  std::size_t n_queries = 4;
  DepthMode depth_mode = DepthMode::AbsolutePerJoint;
  double z_min = 100.0;
  double z_max = 1500.0;
  double relative_depth_half_range = 150.0;
  PositionEncoding position_encoding = PositionEncoding::Sinusoidal;

  /// Throws ConfigError on any invariant violation.
  void validate() const;
  std::size_t num_patches() const {
    return (image_height / patch_size) * (image_width / patch_size);
  }
  std::size_t patch_values() const { return patch_size * patch_size * kImageChannels; }

  /// 32x32 input, patch 8, width 16, one encoder and one decoder layer,
  /// 2 heads, 3 queries.
  static ModelConfig tiny();

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& cfg);
/// Missing keys keep their defaults; unknown keys throw ConfigError.
void from_json(const nlohmann::json& j, ModelConfig& cfg);

struct QueryPrediction {
  std::array<double, kNumClasses> class_logits{};
  std::array<double, kJointValues> joints_norm{};  // (u, v, d) per joint, each in [0, 1]
};

using DetectionSet = std::vector<QueryPrediction>;

/// Deterministic initialization: the parameter layout is a pure function of
/// config, values a pure function of (config, seed). Parameters of the patch
/// embedding are prefixed "backbone.".
nn::ParamStore build_model(const ModelConfig& config, std::uint64_t seed);

inline constexpr std::string_view kBackbonePrefix = "backbone.";

/// Splits the image into non-overlapping patches: one row per patch in
/// raster order, values ordered (dy, dx, channel). Throws ShapeError.
nn::Matrix patchify(const Image& image, std::size_t patch_size);

/// num_patches x embed_dim fixed 2D sinusoidal table.
nn::Matrix sinusoidal_position_encoding(const ModelConfig& config);

struct ModelGraph {
  nn::Var class_logits;  // n_queries x 3
  nn::Var joints;        // n_queries x 63, sigmoid outputs
};

/// Transformer body on pre-extracted patch rows. `positions`, when given,
/// replaces the configured position table as a constant (row i belongs to
/// patch row i); otherwise the fixed or learned table is used.
ModelGraph forward_graph(nn::Tape& tape, const ModelConfig& config, const nn::Matrix& patches,
                         const nn::Matrix* positions = nullptr);

/// Position table used by forward(): fixed or learned depending on config.
nn::Matrix position_table(const nn::ParamStore& params, const ModelConfig& config);

DetectionSet to_detection_set(const nn::Matrix& class_logits, const nn::Matrix& joints);

/// Full network on one image. Read-only on params.
DetectionSet forward(const nn::ParamStore& params, const Image& image, const ModelConfig& config);

/// Maps a UVD pose into the 63 regression targets of the joint head.
std::array<double, kJointValues> normalize_joints(const JointSetUVD& pose,
                                                  const ModelConfig& config);
/// Inverse of normalize_joints for a given image extent.
JointSetUVD denormalize_joints(std::span<const double, kJointValues> joints_norm,
                               const ModelConfig& config);

struct DecodedHand {
  HandSide side = HandSide::Left;
  JointSetUVD uvd;
  std::size_t query = 0;
  double confidence = 0.0;  // softmax probability of `side` for the chosen query
  bool predicted_present = false;  // the chosen query's argmax class is `side`
};

/// Per side, the query with the highest probability of that side (ties go to
/// the lowest index), un-normalized to pixels and millimeters.
std::array<DecodedHand, 2> decode_predictions(const DetectionSet& detections,
                                              const ModelConfig& config);

}  // namespace setpose
