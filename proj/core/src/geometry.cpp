#include "setpose/geometry.hpp"

#include <string>

#include "setpose/error.hpp"

namespace setpose {

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw ConfigError("camera intrinsics: focal lengths must be positive");
  }
  if (!(width > 0.0) || !(height > 0.0)) {
    throw ConfigError("camera intrinsics: image extent must be positive");
  }
  if (cx < 0.0 || cx > width || cy < 0.0 || cy > height) {
    throw ConfigError("camera intrinsics: principal point outside the image");
  }
}

std::string_view to_string(HandSide side) {
  return side == HandSide::Left ? "left" : "right";
}

HandSide hand_side_from_string(std::string_view name) {
  if (name == "left") return HandSide::Left;
  if (name == "right") return HandSide::Right;
  throw FormatError("unknown hand side '" + std::string(name) + "'");
}

JointSet3D uvd_to_xyz(const JointSetUVD& pose, const CameraIntrinsics& cam) {
  JointSet3D out;
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    const Vec3& p = pose.joints[j];
    if (!(p.z > 0.0)) {
      throw NonPositiveDepth("uvd_to_xyz: joint " + std::to_string(j) + " has depth " +
                             std::to_string(p.z));
    }
    out.joints[j] = {(p.x - cam.cx) * p.z / cam.fx, (p.y - cam.cy) * p.z / cam.fy, p.z};
  }
  return out;
}

JointSetUVD xyz_to_uvd(const JointSet3D& pose, const CameraIntrinsics& cam) {
  JointSetUVD out;
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    const Vec3& p = pose.joints[j];
    if (!(p.z > 0.0)) {
      throw NonPositiveDepth("xyz_to_uvd: joint " + std::to_string(j) + " has z " +
                             std::to_string(p.z));
    }
    out.joints[j] = {cam.fx * p.x / p.z + cam.cx, cam.fy * p.y / p.z + cam.cy, p.z};
  }
  return out;
}

double mpjpe(const JointSet3D& pred, const JointSet3D& gt) {
  double total = 0.0;
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    total += norm(pred.joints[j] - gt.joints[j]);
  }
  return total / static_cast<double>(kNumJoints);
}

std::pair<JointSetUVD, HandSide> hflip_uvd(const JointSetUVD& pose, HandSide side,
                                           double image_width) {
  JointSetUVD out = pose;
  for (auto& joint : out.joints) joint.x = image_width - joint.x;
  return {out, opposite(side)};
}

}  // namespace setpose
