#include "setpose/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "json_util.hpp"
#include "setpose/error.hpp"
#include "setpose/rng.hpp"

namespace setpose {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

// Wrist placement box as fractions of the image; left hands favour the left
// half, right hands the right half, both enter from the lower part of an
// egocentric frame. The two boxes mirror onto each other under hflip.
constexpr double kWristULeftLo = 0.15;
constexpr double kWristULeftHi = 0.60;
constexpr double kWristVLo = 0.60;
constexpr double kWristVHi = 0.92;

// Physical stroke widths as fractions of the hand scale.
constexpr double kBoneWidthFrac = 0.2;
constexpr double kJointSigmaFrac = 0.3;
constexpr double kMinBoneHalfWidthPx = 0.35;
constexpr double kMinJointSigmaPx = 0.6;
constexpr float kBoneIntensity = 0.7f;
constexpr float kDistractorIntensity = 0.35f;

struct Mat3 {
  std::array<double, 9> m{};
  Vec3 operator*(Vec3 v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }
  Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k) r.m[3 * i + j] += m[3 * i + k] * o.m[3 * k + j];
    return r;
  }
};

Mat3 rotation_xyz(double ax, double ay, double az) {
  const double cx = std::cos(ax), sx = std::sin(ax);
  const double cy = std::cos(ay), sy = std::sin(ay);
  const double cz = std::cos(az), sz = std::sin(az);
  const Mat3 rx{{1, 0, 0, 0, cx, -sx, 0, sx, cx}};
  const Mat3 ry{{cy, 0, sy, 0, 1, 0, -sy, 0, cy}};
  const Mat3 rz{{cz, -sz, 0, sz, cz, 0, 0, 0, 1}};
  return rz * (ry * rx);
}

struct HandDraws {
  bool present;
  double jitter;
  double ax, ay, az;
  double u_frac, v_frac, depth_frac;
};

HandDraws draw_hand(const GenConfig& cfg, Rng& rng) {
  // Always consume the same number of draws so hand presence does not shift
  // the stream for the other side.
  HandDraws d{};
  d.present = rng.bernoulli(cfg.hand_presence);
  d.jitter = rng.uniform(cfg.scale_jitter_min, cfg.scale_jitter_max);
  const double r = cfg.rotation_jitter_deg * kDegToRad;
  d.ax = rng.uniform(-r, r);
  d.ay = rng.uniform(-r, r);
  d.az = rng.uniform(-r, r);
  d.u_frac = rng.uniform();
  d.v_frac = rng.uniform();
  d.depth_frac = rng.uniform();
  return d;
}

double segment_distance(double px, double py, Vec3 a, Vec3 b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp(((px - a.x) * dx + (py - a.y) * dy) / len2, 0.0, 1.0);
  const double ex = px - (a.x + t * dx);
  const double ey = py - (a.y + t * dy);
  return std::sqrt(ex * ex + ey * ey);
}

struct PixelBox {
  std::size_t x0, x1, y0, y1;  // half-open
  bool empty() const { return x0 >= x1 || y0 >= y1; }
};

PixelBox clip_box(double xmin, double xmax, double ymin, double ymax, std::size_t w,
                  std::size_t h) {
  auto clampi = [](double v, std::size_t hi) {
    if (v <= 0.0) return std::size_t{0};
    if (v >= static_cast<double>(hi)) return hi;
    return static_cast<std::size_t>(v);
  };
  return {clampi(std::floor(xmin), w), clampi(std::ceil(xmax) + 1.0, w),
          clampi(std::floor(ymin), h), clampi(std::ceil(ymax) + 1.0, h)};
}

void draw_hand_layer(std::vector<float>& layer, std::size_t w, std::size_t h,
                     const JointSetUVD& uvd, const SkeletonTopology& topo, double half_width,
                     double sigma) {
  auto plot = [&](std::size_t x, std::size_t y, double value) {
    float& dst = layer[y * w + x];
    dst = std::max(dst, static_cast<float>(value));
  };
  for (const auto& [parent, child] : topo.edges) {
    const Vec3 a = uvd.joints[parent];
    const Vec3 b = uvd.joints[child];
    const double reach = half_width + 1.0;
    const PixelBox box = clip_box(std::min(a.x, b.x) - reach, std::max(a.x, b.x) + reach,
                                  std::min(a.y, b.y) - reach, std::max(a.y, b.y) + reach, w, h);
    if (box.empty()) continue;
    for (std::size_t y = box.y0; y < box.y1; ++y)
      for (std::size_t x = box.x0; x < box.x1; ++x) {
        const double dist = segment_distance(static_cast<double>(x) + 0.5,
                                             static_cast<double>(y) + 0.5, a, b);
        const double coverage = std::clamp(half_width + 0.5 - dist, 0.0, 1.0);
        if (coverage > 0.0) plot(x, y, kBoneIntensity * coverage);
      }
  }
  const double reach = 3.0 * sigma;
  for (const Vec3& p : uvd.joints) {
    const PixelBox box = clip_box(p.x - reach, p.x + reach, p.y - reach, p.y + reach, w, h);
    if (box.empty()) continue;
    for (std::size_t y = box.y0; y < box.y1; ++y)
      for (std::size_t x = box.x0; x < box.x1; ++x) {
        const double dx = static_cast<double>(x) + 0.5 - p.x;
        const double dy = static_cast<double>(y) + 0.5 - p.y;
        plot(x, y, std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma)));
      }
  }
}

}  // namespace

CameraIntrinsics GenConfig::camera() const {
  if (intrinsics) return *intrinsics;
  const double w = static_cast<double>(image_width);
  const double h = static_cast<double>(image_height);
  return {0.8 * w, 0.8 * w, 0.5 * w, 0.5 * h, w, h};
}

void GenConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("data config: " + msg); };
  if (image_height == 0 || image_width == 0) fail("image size must be positive");
  camera().validate();
  if (camera().width != static_cast<double>(image_width) ||
      camera().height != static_cast<double>(image_height)) {
    fail("intrinsics width/height must match the image size");
  }
  if (!(depth_min > 0.0) || !(depth_max > depth_min)) fail("need 0 < depth_min < depth_max");
  if (!(rotation_jitter_deg >= 0.0) || rotation_jitter_deg > 90.0) {
    fail("rotation_jitter_deg must lie in [0, 90]");
  }
  if (!(subject_scale_factor > 0.0)) fail("subject_scale_factor must be positive");
  if (!(scale_jitter_min > 0.0) || !(scale_jitter_max >= scale_jitter_min)) {
    fail("need 0 < scale_jitter_min <= scale_jitter_max");
  }
  if (!(hand_presence >= 0.0) || hand_presence > 1.0) fail("hand_presence must lie in [0, 1]");
}

void to_json(nlohmann::json& j, const GenConfig& cfg) {
  j = {{"seed", cfg.seed},
       {"n_samples", cfg.n_samples},
       {"image_height", cfg.image_height},
       {"image_width", cfg.image_width},
       {"depth_min", cfg.depth_min},
       {"depth_max", cfg.depth_max},
       {"rotation_jitter_deg", cfg.rotation_jitter_deg},
       {"subject_scale_factor", cfg.subject_scale_factor},
       {"scale_jitter_min", cfg.scale_jitter_min},
       {"scale_jitter_max", cfg.scale_jitter_max},
       {"hand_presence", cfg.hand_presence},
       {"distractor", cfg.distractor}};
  if (cfg.intrinsics) {
    const auto& c = *cfg.intrinsics;
    j["intrinsics"] = {{"fx", c.fx}, {"fy", c.fy},         {"cx", c.cx},
                       {"cy", c.cy}, {"width", c.width}, {"height", c.height}};
  }
}

void from_json(const nlohmann::json& j, GenConfig& cfg) {
  detail::ObjectReader r(j, "data");
  r.read("seed", cfg.seed);
  r.read("n_samples", cfg.n_samples);
  r.read("image_height", cfg.image_height);
  r.read("image_width", cfg.image_width);
  r.read("depth_min", cfg.depth_min);
  r.read("depth_max", cfg.depth_max);
  r.read("rotation_jitter_deg", cfg.rotation_jitter_deg);
  r.read("subject_scale_factor", cfg.subject_scale_factor);
  r.read("scale_jitter_min", cfg.scale_jitter_min);
  r.read("scale_jitter_max", cfg.scale_jitter_max);
  r.read("hand_presence", cfg.hand_presence);
  r.read("distractor", cfg.distractor);
  nlohmann::json intr;
  if (r.read("intrinsics", intr)) {
    detail::ObjectReader ir(intr, "data.intrinsics");
    CameraIntrinsics c;
    ir.read("fx", c.fx);
    ir.read("fy", c.fy);
    ir.read("cx", c.cx);
    ir.read("cy", c.cy);
    ir.read("width", c.width);
    ir.read("height", c.height);
    ir.finish();
    cfg.intrinsics = c;
  }
  r.finish();
}

const HandAnnotation* SceneSample::hand(HandSide side) const {
  for (const auto& h : hands)
    if (h.side == side) return &h;
  return nullptr;
}

JointSet3D template_hand(const SkeletonTopology& topo) {
  JointSet3D pose;  // wrist at the origin
  for (const auto& [parent, child] : topo.edges) {
    const std::size_t finger = (child - 1) / kJointsPerFinger;
    const std::size_t bone = (child - 1) % kJointsPerFinger;
    const double angle = kTemplateFingerAnglesDeg[finger] * kDegToRad;
    const Vec3 dir{std::sin(angle), -std::cos(angle), 0.0};
    pose.joints[child] = pose.joints[parent] + kTemplateBoneLengths[finger][bone] * dir;
  }
  return pose;
}

JointSet3D template_left_hand(const SkeletonTopology& topo) {
  JointSet3D pose = template_hand(topo);
  for (auto& j : pose.joints) j.x = -j.x;
  return pose;
}

SceneSample generate_sample(const GenConfig& cfg, const SkeletonTopology& topo,
                            std::uint64_t index) {
  Rng rng = Rng::stream(cfg.seed, index);
  const CameraIntrinsics cam = cfg.camera();
  const double w = static_cast<double>(cfg.image_width);
  const double h = static_cast<double>(cfg.image_height);

  SceneSample sample;
  sample.id = index;
  sample.camera = cam;
  for (HandSide side : kHandSides) {
    const HandDraws d = draw_hand(cfg, rng);
    if (!d.present) continue;
    const JointSet3D base =
        side == HandSide::Right ? template_hand(topo) : template_left_hand(topo);
    const Mat3 rot = rotation_xyz(d.ax, side == HandSide::Right ? d.ay : -d.ay,
                                  side == HandSide::Right ? d.az : -d.az);
    const double s = cfg.subject_scale_factor * d.jitter;

    std::array<Vec3, kNumJoints> offsets{};
    double zlo = 0.0, zhi = 0.0;
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      offsets[j] = rot * (s * base.joints[j]);
      zlo = std::min(zlo, offsets[j].z);
      zhi = std::max(zhi, offsets[j].z);
    }
    const double wrist_lo = cfg.depth_min - zlo;
    const double wrist_hi = cfg.depth_max - zhi;
    if (!(wrist_hi > wrist_lo)) {
      throw ConfigError("data config: depth range too narrow for the hand extent");
    }
    const double wrist_d = wrist_lo + d.depth_frac * (wrist_hi - wrist_lo);
    const double u_lo = side == HandSide::Left ? kWristULeftLo : 1.0 - kWristULeftHi;
    const double u_hi = side == HandSide::Left ? kWristULeftHi : 1.0 - kWristULeftLo;
    const double wrist_u = (u_lo + d.u_frac * (u_hi - u_lo)) * w;
    const double wrist_v = (kWristVLo + d.v_frac * (kWristVHi - kWristVLo)) * h;
    const Vec3 wrist{(wrist_u - cam.cx) * wrist_d / cam.fx, (wrist_v - cam.cy) * wrist_d / cam.fy,
                     wrist_d};

    HandAnnotation hand;
    hand.side = side;
    JointSet3D xyz;
    for (std::size_t j = 0; j < kNumJoints; ++j) xyz.joints[j] = wrist + offsets[j];
    hand.uvd = xyz_to_uvd(xyz, cam);
    hand.xyz = xyz;
    sample.hands.push_back(hand);
  }
  sample.image = render_hands(cfg, topo, sample.hands);

  if (cfg.distractor) {
    const double bw = rng.uniform(0.1, 0.3) * w;
    const double bh = rng.uniform(0.1, 0.3) * h;
    const double x0 = rng.uniform(0.0, w - bw);
    const double y0 = rng.uniform(0.0, h - bh);
    const PixelBox box = clip_box(x0, x0 + bw - 1.0, y0, y0 + bh - 1.0, cfg.image_width,
                                  cfg.image_height);
    for (std::size_t y = box.y0; y < box.y1; ++y)
      for (std::size_t x = box.x0; x < box.x1; ++x)
        for (std::size_t c = 0; c < kImageChannels; ++c) {
          float& px = sample.image.at(y, x, c);
          px = std::max(px, kDistractorIntensity);
        }
  }
  return sample;
}

Image render_hands(const GenConfig& cfg, const SkeletonTopology& topo,
                   const std::vector<HandAnnotation>& hands) {
  const std::size_t w = cfg.image_width;
  const std::size_t h = cfg.image_height;
  const CameraIntrinsics cam = cfg.camera();
  Image image(h, w);
  for (const auto& hand : hands) {
    // Stroke widths follow the hand's own metric size, so the image carries
    // no depth cue beyond the apparent size of the hand.
    const JointSet3D xyz = hand.xyz ? *hand.xyz : uvd_to_xyz(hand.uvd, cam);
    const double px_per_mm = cam.fx / xyz.joints[0].z;
    const double scale_mm = hand_scale(xyz, topo);
    const double half_width = std::max(kMinBoneHalfWidthPx, 0.5 * kBoneWidthFrac * scale_mm * px_per_mm);
    const double sigma = std::max(kMinJointSigmaPx, kJointSigmaFrac * scale_mm * px_per_mm);
    std::vector<float> layer(w * h, 0.0f);
    draw_hand_layer(layer, w, h, hand.uvd, topo, half_width, sigma);
    const std::size_t channel = index_of(hand.side);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const float v = layer[y * w + x];
        image.at(y, x, channel) = std::max(image.at(y, x, channel), v);
        image.at(y, x, 2) = std::max(image.at(y, x, 2), v);
      }
  }
  return image;
}

Dataset generate_dataset(const GenConfig& cfg, const SkeletonTopology& topo,
                         const std::string& split) {
  cfg.validate();
  topo.validate();
  Dataset ds;
  ds.config = cfg;
  ds.split = split;
  ds.samples.reserve(cfg.n_samples);
  for (std::size_t i = 0; i < cfg.n_samples; ++i) ds.samples.push_back(generate_sample(cfg, topo, i));
  return ds;
}

SceneSample flip_sample(const SceneSample& sample) {
  SceneSample out = sample;
  const std::size_t w = sample.image.width;
  // Side is colour-coded, so mirroring the appearance of a hand means
  // swapping the left/right channels along with the columns.
  auto source_channel = [](std::size_t c) -> std::size_t { return c < 2 ? 1 - c : c; };
  for (std::size_t y = 0; y < sample.image.height; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < sample.image.channels; ++c)
        out.image.at(y, x, c) = sample.image.at(y, w - 1 - x, source_channel(c));
  for (auto& hand : out.hands) {
    auto [uvd, side] = hflip_uvd(hand.uvd, hand.side, static_cast<double>(w));
    hand.uvd = uvd;
    hand.side = side;
    hand.mirrored = !hand.mirrored;
  }
  return out;
}

SceneSample augment(const SceneSample& sample, Rng& rng) {
  if (rng.bernoulli(0.5)) return flip_sample(sample);
  return sample;
}

}  // namespace setpose
