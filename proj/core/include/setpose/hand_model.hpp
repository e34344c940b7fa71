#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <utility>

#include <nlohmann/json.hpp>

#include "setpose/geometry.hpp"

namespace setpose {

/// Parent/child joint pairs of the 21-joint hand tree.
///
/// Joint 0 is the wrist; joints 1-4, 5-8, 9-12, 13-16 and 17-20 are the
/// thumb, index, middle, ring and pinky chains, proximal to distal.
struct SkeletonTopology {
  std::array<std::pair<std::size_t, std::size_t>, kNumJoints - 1> edges{};

  static SkeletonTopology standard();
  /// Throws ConfigError unless edges form a tree rooted at joint 0.
  void validate() const;
};

inline constexpr std::size_t kNumFingers = 5;
inline constexpr std::size_t kJointsPerFinger = 4;

/// Per-side mean hand scale of a training set.
struct ScaleStats {
  double mean_scale_left = 0.0;
  double mean_scale_right = 0.0;
  std::size_t n_left = 0;
  std::size_t n_right = 0;

  double mean_for(HandSide side) const {
    return side == HandSide::Left ? mean_scale_left : mean_scale_right;
  }
  /// Count-weighted mean over both sides.
  double pooled_mean() const;

  friend bool operator==(const ScaleStats&, const ScaleStats&) = default;
};

/// {"mean_scale_left", "mean_scale_right", "n_left", "n_right"}.
void to_json(nlohmann::json& j, const ScaleStats& stats);
/// Throws FormatError on missing keys or non-positive means with samples.
void from_json(const nlohmann::json& j, ScaleStats& stats);

inline constexpr double kDegenerateScaleMm = 1e-6;

/// Mean bone length over the 20 skeleton edges (mm). Throws DegeneratePose
/// below kDegenerateScaleMm.
double hand_scale(const JointSet3D& pose, const SkeletonTopology& topo);

struct SidedPose {
  HandSide side;
  JointSet3D pose;
};

/// Throws EmptySide when either side has no samples.
ScaleStats compute_mean_scale(std::span<const SidedPose> poses, const SkeletonTopology& topo);

/// Multiplies every depth by target_scale / hand_scale(uvd_to_xyz(pose)).
/// (u, v) are copied untouched, so the result reprojects identically and
/// its 3D hand scale equals target_scale.
JointSetUVD rescale_depth(const JointSetUVD& pose, const CameraIntrinsics& cam,
                          double target_scale, const SkeletonTopology& topo);

}  // namespace setpose
