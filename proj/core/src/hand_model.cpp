#include "setpose/hand_model.hpp"

#include <string>

#include "setpose/error.hpp"

namespace setpose {

SkeletonTopology SkeletonTopology::standard() {
  SkeletonTopology topo;
  std::size_t e = 0;
  for (std::size_t finger = 0; finger < kNumFingers; ++finger) {
    std::size_t parent = 0;
    for (std::size_t k = 0; k < kJointsPerFinger; ++k) {
      const std::size_t child = 1 + finger * kJointsPerFinger + k;
      topo.edges[e++] = {parent, child};
      parent = child;
    }
  }
  return topo;
}

void SkeletonTopology::validate() const {
  std::array<int, kNumJoints> parent_count{};
  for (const auto& [parent, child] : edges) {
    if (parent >= kNumJoints || child >= kNumJoints || child == 0) {
      throw ConfigError("skeleton: invalid edge (" + std::to_string(parent) + ", " +
                        std::to_string(child) + ")");
    }
    ++parent_count[child];
  }
  for (std::size_t j = 1; j < kNumJoints; ++j) {
    if (parent_count[j] != 1) {
      throw ConfigError("skeleton: joint " + std::to_string(j) + " must have exactly one parent");
    }
  }
  // Every joint must reach the wrist without revisiting anything.
  std::array<std::size_t, kNumJoints> parent_of{};
  for (const auto& [parent, child] : edges) parent_of[child] = parent;
  for (std::size_t j = 1; j < kNumJoints; ++j) {
    std::size_t cur = j;
    std::size_t hops = 0;
    while (cur != 0) {
      cur = parent_of[cur];
      if (++hops > kNumJoints) throw ConfigError("skeleton: cycle detected");
    }
  }
}

double ScaleStats::pooled_mean() const {
  const double n = static_cast<double>(n_left + n_right);
  if (n == 0.0) return 0.0;
  return (static_cast<double>(n_left) * mean_scale_left +
          static_cast<double>(n_right) * mean_scale_right) /
         n;
}

double hand_scale(const JointSet3D& pose, const SkeletonTopology& topo) {
  double total = 0.0;
  for (const auto& [parent, child] : topo.edges) {
    total += norm(pose.joints[child] - pose.joints[parent]);
  }
  const double scale = total / static_cast<double>(topo.edges.size());
  if (!(scale >= kDegenerateScaleMm)) {
    throw DegeneratePose("hand_scale: pose is degenerate (scale " + std::to_string(scale) +
                         " mm)");
  }
  return scale;
}

ScaleStats compute_mean_scale(std::span<const SidedPose> poses, const SkeletonTopology& topo) {
  std::array<double, 2> sum{};
  std::array<std::size_t, 2> count{};
  for (const auto& [side, pose] : poses) {
    sum[index_of(side)] += hand_scale(pose, topo);
    ++count[index_of(side)];
  }
  for (HandSide side : kHandSides) {
    if (count[index_of(side)] == 0) {
      throw EmptySide("compute_mean_scale: no " + std::string(to_string(side)) + " hands");
    }
  }
  ScaleStats stats;
  stats.n_left = count[0];
  stats.n_right = count[1];
  stats.mean_scale_left = sum[0] / static_cast<double>(count[0]);
  stats.mean_scale_right = sum[1] / static_cast<double>(count[1]);
  return stats;
}

JointSetUVD rescale_depth(const JointSetUVD& pose, const CameraIntrinsics& cam,
                          double target_scale, const SkeletonTopology& topo) {
  if (!(target_scale > 0.0)) {
    throw NonPositiveScale("rescale_depth: target scale must be positive");
  }
  const double current = hand_scale(uvd_to_xyz(pose, cam), topo);
  const double k = target_scale / current;
  JointSetUVD out = pose;
  for (auto& joint : out.joints) joint.z *= k;
  return out;
}

void to_json(nlohmann::json& j, const ScaleStats& stats) {
  j = {{"mean_scale_left", stats.mean_scale_left},
       {"mean_scale_right", stats.mean_scale_right},
       {"n_left", stats.n_left},
       {"n_right", stats.n_right}};
}

void from_json(const nlohmann::json& j, ScaleStats& stats) {
  try {
    stats.mean_scale_left = j.at("mean_scale_left").get<double>();
    stats.mean_scale_right = j.at("mean_scale_right").get<double>();
    stats.n_left = j.at("n_left").get<std::size_t>();
    stats.n_right = j.at("n_right").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("scale stats: ") + e.what());
  }
  if ((stats.n_left > 0 && !(stats.mean_scale_left > 0.0)) ||
      (stats.n_right > 0 && !(stats.mean_scale_right > 0.0))) {
    throw FormatError("scale stats: means must be positive for sides with samples");
  }
}

}  // namespace setpose
