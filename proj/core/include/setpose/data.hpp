#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "setpose/geometry.hpp"
#include "setpose/hand_model.hpp"
#include "setpose/image.hpp"

namespace setpose {

class Rng;

/// Synthetic two-hand scene generator settings.
struct GenConfig {
  std::uint64_t seed = 0;
  std::size_t n_samples = 512;
  std::size_t image_height = 32;
  std::size_t image_width = 32;
  /// Defaults to fx = fy = 0.8 W with the principal point at the image center.
  std::optional<CameraIntrinsics> intrinsics;
  /// Every joint of every generated hand lies inside [depth_min, depth_max] mm.
  double depth_min = 300.0;
  double depth_max = 700.0;
  double rotation_jitter_deg = 20.0;
  double subject_scale_factor = 1.0;
  double scale_jitter_min = 0.85;
  double scale_jitter_max = 1.15;
  double hand_presence = 0.9;
  /// Adds one gray rectangle per image as an occluder.
  bool distractor = false;

  CameraIntrinsics camera() const;
  /// Throws ConfigError.
  void validate() const;

  friend bool operator==(const GenConfig&, const GenConfig&) = default;
};

void to_json(nlohmann::json& j, const GenConfig& cfg);
void from_json(const nlohmann::json& j, GenConfig& cfg);

struct HandAnnotation {
  HandSide side = HandSide::Left;
  JointSetUVD uvd;
  std::optional<JointSet3D> xyz;
  /// Set by horizontal flipping: xyz no longer matches uvd and is not used
  /// for supervision or evaluation until flipped back.
  bool mirrored = false;

  const JointSet3D* valid_xyz() const { return (xyz && !mirrored) ? &*xyz : nullptr; }

  friend bool operator==(const HandAnnotation&, const HandAnnotation&) = default;
};

struct SceneSample {
  std::uint64_t id = 0;
  Image image;
  std::vector<HandAnnotation> hands;  // at most one per side
  CameraIntrinsics camera;

  const HandAnnotation* hand(HandSide side) const;

  friend bool operator==(const SceneSample&, const SceneSample&) = default;
};

struct Dataset {
  GenConfig config;
  std::string split = "train";
  std::vector<SceneSample> samples;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Canonical right hand: wrist at the origin, five straight finger chains
/// fanned in the z = 0 plane, pointing towards -y (up in the image).
JointSet3D template_hand(const SkeletonTopology& topo);
/// Right template mirrored across x = 0.
JointSet3D template_left_hand(const SkeletonTopology& topo);

/// Per-finger bone lengths (mm), proximal to distal: thumb..pinky.
inline constexpr std::array<std::array<double, 4>, 5> kTemplateBoneLengths{{
    {45.0, 35.0, 28.0, 25.0},
    {90.0, 40.0, 25.0, 22.0},
    {85.0, 45.0, 28.0, 24.0},
    {80.0, 42.0, 26.0, 23.0},
    {75.0, 32.0, 20.0, 20.0},
}};
/// Fan angles (deg) from -y towards +x, thumb..pinky.
inline constexpr std::array<double, 5> kTemplateFingerAnglesDeg{-40.0, -15.0, 0.0, 15.0, 35.0};

/// Deterministic in (cfg, topo); sample i draws from Rng::stream(cfg.seed, i).
Dataset generate_dataset(const GenConfig& cfg, const SkeletonTopology& topo,
                         const std::string& split = "train");
SceneSample generate_sample(const GenConfig& cfg, const SkeletonTopology& topo, std::uint64_t index);

/// Draws both hands of a sample into an image: left hand into channel 0,
/// right into channel 1, both into channel 2.
Image render_hands(const GenConfig& cfg, const SkeletonTopology& topo,
                   const std::vector<HandAnnotation>& hands);

/// Mirrors the image column-wise (c -> W-1-c), swaps the left/right colour
/// channels and flips every hand with hflip_uvd; sides swap and xyz is
/// marked mirrored.
SceneSample flip_sample(const SceneSample& sample);
/// flip_sample with probability 0.5, otherwise a copy.
SceneSample augment(const SceneSample& sample, Rng& rng);

inline constexpr std::uint32_t kDatasetFormatVersion = 1;
inline constexpr std::uint32_t kImageFormatVersion = 1;

/// Writes meta.json, samples.jsonl and images/<id>.imgf under `dir`.
void write_dataset(const std::filesystem::path& dir, const Dataset& dataset);
/// Throws IoError for unreadable files and FormatError (naming the file) for
/// bad magic, versions, truncation or malformed records.
Dataset read_dataset(const std::filesystem::path& dir);

std::string encode_imgf(const Image& image);
Image decode_imgf(const std::string& bytes, const std::string& name);

}  // namespace setpose
