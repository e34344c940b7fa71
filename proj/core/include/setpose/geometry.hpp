#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <string_view>
#include <utility>

namespace setpose {

inline constexpr std::size_t kNumJoints = 21;

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend constexpr Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend constexpr Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend constexpr Vec3 operator*(double k, Vec3 a) { return {k * a.x, k * a.y, k * a.z}; }
  friend constexpr bool operator==(Vec3, Vec3) = default;
};

inline double norm(Vec3 a) { return std::sqrt(a.x * a.x + a.y * a.y + a.z * a.z); }

/// Pinhole intrinsics. Focal lengths and principal point are in pixels.
struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  double width = 0.0;
  double height = 0.0;

  /// Throws ConfigError when fx/fy are not positive or the principal point
  /// falls outside the image.
  void validate() const;

  friend bool operator==(const CameraIntrinsics&, const CameraIntrinsics&) = default;
};

/// 21 joints as (u px, v px, d mm).
struct JointSetUVD {
  std::array<Vec3, kNumJoints> joints{};
  friend bool operator==(const JointSetUVD&, const JointSetUVD&) = default;
};

/// 21 joints as camera-frame (x, y, z) in millimeters.
struct JointSet3D {
  std::array<Vec3, kNumJoints> joints{};
  friend bool operator==(const JointSet3D&, const JointSet3D&) = default;
};

enum class HandSide { Left = 0, Right = 1 };

inline constexpr std::array<HandSide, 2> kHandSides{HandSide::Left, HandSide::Right};

constexpr HandSide opposite(HandSide side) {
  return side == HandSide::Left ? HandSide::Right : HandSide::Left;
}
constexpr std::size_t index_of(HandSide side) { return static_cast<std::size_t>(side); }
std::string_view to_string(HandSide side);
/// Accepts "left" / "right"; throws FormatError otherwise.
HandSide hand_side_from_string(std::string_view name);

/// x = (u - cx) d / fx, y = (v - cy) d / fy, z = d. Throws NonPositiveDepth.
JointSet3D uvd_to_xyz(const JointSetUVD& pose, const CameraIntrinsics& cam);

/// u = fx x / z + cx, v = fy y / z + cy, d = z. Throws NonPositiveDepth.
JointSetUVD xyz_to_uvd(const JointSet3D& pose, const CameraIntrinsics& cam);

/// Mean per-joint Euclidean distance in mm. No root or scale alignment of
/// any kind is applied: this is the global error.
double mpjpe(const JointSet3D& pred, const JointSet3D& gt);

/// Mirrors u about the vertical line u = W/2 and swaps the side label.
std::pair<JointSetUVD, HandSide> hflip_uvd(const JointSetUVD& pose, HandSide side,
                                           double image_width);

}  // namespace setpose
