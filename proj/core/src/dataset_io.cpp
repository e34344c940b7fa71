#include <cstdio>
#include <sstream>

#include "binary_io.hpp"
#include "file_io.hpp"
#include "setpose/data.hpp"
#include "setpose/error.hpp"

namespace setpose {

namespace {

constexpr char kImageMagic[4] = {'I', 'M', 'G', 'F'};
constexpr std::size_t kImageHeaderBytes = 4 + 4 * 4;

std::string image_name(std::uint64_t id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "images/%06llu.imgf", static_cast<unsigned long long>(id));
  return buf;
}

nlohmann::json joints_to_json(const std::array<Vec3, kNumJoints>& joints) {
  nlohmann::json out = nlohmann::json::array();
  for (const Vec3& p : joints) out.push_back({p.x, p.y, p.z});
  return out;
}

std::array<Vec3, kNumJoints> joints_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != kNumJoints) {
    throw FormatError("expected " + std::to_string(kNumJoints) + " joints");
  }
  std::array<Vec3, kNumJoints> out{};
  for (std::size_t i = 0; i < kNumJoints; ++i) {
    const auto& t = j[i];
    if (!t.is_array() || t.size() != 3) throw FormatError("joint entries must be triples");
    out[i] = {t[0].get<double>(), t[1].get<double>(), t[2].get<double>()};
  }
  return out;
}

nlohmann::json camera_to_json(const CameraIntrinsics& c) {
  return {{"fx", c.fx}, {"fy", c.fy},       {"cx", c.cx},
          {"cy", c.cy}, {"width", c.width}, {"height", c.height}};
}

CameraIntrinsics camera_from_json(const nlohmann::json& j) {
  return {j.at("fx").get<double>(),    j.at("fy").get<double>(),
          j.at("cx").get<double>(),    j.at("cy").get<double>(),
          j.at("width").get<double>(), j.at("height").get<double>()};
}

}  // namespace

std::string encode_imgf(const Image& image) {
  std::string out(kImageMagic, 4);
  detail::put_u32(out, kImageFormatVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(image.height));
  detail::put_u32(out, static_cast<std::uint32_t>(image.width));
  detail::put_u32(out, static_cast<std::uint32_t>(image.channels));
  out.reserve(out.size() + 4 * image.pixels.size());
  for (float v : image.pixels) detail::put_f32(out, v);
  return out;
}

Image decode_imgf(const std::string& bytes, const std::string& name) {
  if (bytes.size() < kImageHeaderBytes || bytes.compare(0, 4, kImageMagic, 4) != 0) {
    throw FormatError("'" + name + "': bad IMGF magic or truncated header");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (detail::get_u32(p + 4) != kImageFormatVersion) {
    throw FormatError("'" + name + "': unsupported IMGF version");
  }
  Image image(detail::get_u32(p + 8), detail::get_u32(p + 12), detail::get_u32(p + 16));
  const std::size_t expected = kImageHeaderBytes + 4 * image.pixels.size();
  if (bytes.size() != expected) {
    throw FormatError("'" + name + "': expected " + std::to_string(expected) + " bytes, found " +
                      std::to_string(bytes.size()) + " (truncated or corrupt)");
  }
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    image.pixels[i] = detail::get_f32(p + kImageHeaderBytes + 4 * i);
  }
  return image;
}

void write_dataset(const std::filesystem::path& dir, const Dataset& dataset) {
  detail::make_dirs(dir / "images");
  std::size_t n_left = 0;
  std::size_t n_right = 0;
  std::string lines;
  for (const auto& s : dataset.samples) {
    nlohmann::json hands = nlohmann::json::array();
    for (const auto& h : s.hands) {
      nlohmann::json jh = {{"side", std::string(to_string(h.side))}, {"uvd", joints_to_json(h.uvd.joints)}};
      if (h.xyz) jh["xyz"] = joints_to_json(h.xyz->joints);
      if (h.mirrored) jh["mirrored"] = true;
      hands.push_back(std::move(jh));
      ++(h.side == HandSide::Left ? n_left : n_right);
    }
    const std::string img = image_name(s.id);
    lines += nlohmann::json{{"id", s.id}, {"image", img}, {"hands", hands}}.dump() + "\n";
    detail::write_file(dir / img, encode_imgf(s.image));
  }
  const CameraIntrinsics cam =
      dataset.samples.empty() ? dataset.config.camera() : dataset.samples.front().camera;
  const nlohmann::json meta = {
      {"format_version", kDatasetFormatVersion},
      {"split", dataset.split},
      {"generator", dataset.config},
      {"intrinsics", camera_to_json(cam)},
      {"counts", {{"samples", dataset.samples.size()}, {"left", n_left}, {"right", n_right}}}};
  detail::write_file(dir / "samples.jsonl", lines);
  detail::write_file(dir / "meta.json", meta.dump(2) + "\n");
}

Dataset read_dataset(const std::filesystem::path& dir) {
  const auto meta_path = dir / "meta.json";
  if (!std::filesystem::exists(meta_path)) {
    throw IoError("dataset meta not found: '" + meta_path.string() + "'");
  }
  Dataset ds;
  CameraIntrinsics cam;
  std::size_t expected_samples = 0;
  try {
    const auto meta = nlohmann::json::parse(detail::read_file(meta_path));
    if (!meta.contains("format_version") ||
        meta.at("format_version").get<std::uint32_t>() != kDatasetFormatVersion) {
      throw FormatError("'" + meta_path.string() + "': unsupported dataset format version");
    }
    ds.split = meta.at("split").get<std::string>();
    ds.config = meta.at("generator").get<GenConfig>();
    cam = camera_from_json(meta.at("intrinsics"));
    expected_samples = meta.at("counts").at("samples").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("'" + meta_path.string() + "': " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError("'" + meta_path.string() + "': " + e.what());
  }

  const auto samples_path = dir / "samples.jsonl";
  std::istringstream lines(detail::read_file(samples_path));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (line.empty()) continue;
    SceneSample s;
    std::string img;
    try {
      const auto j = nlohmann::json::parse(line);
      s.id = j.at("id").get<std::uint64_t>();
      img = j.at("image").get<std::string>();
      for (const auto& jh : j.at("hands")) {
        HandAnnotation h;
        h.side = hand_side_from_string(jh.at("side").get<std::string>());
        h.uvd.joints = joints_from_json(jh.at("uvd"));
        if (jh.contains("xyz")) h.xyz = JointSet3D{joints_from_json(jh.at("xyz"))};
        h.mirrored = jh.value("mirrored", false);
        s.hands.push_back(h);
      }
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("'" + samples_path.string() + "' line " + std::to_string(line_no) + ": " +
                        e.what());
    } catch (const FormatError& e) {
      throw FormatError("'" + samples_path.string() + "' line " + std::to_string(line_no) + ": " +
                        e.what());
    }
    const auto img_path = dir / img;
    s.image = decode_imgf(detail::read_file(img_path), img_path.string());
    s.camera = cam;
    ds.samples.push_back(std::move(s));
  }
  if (ds.samples.size() != expected_samples) {
    throw FormatError("'" + samples_path.string() + "': " + std::to_string(ds.samples.size()) +
                      " records, meta.json declares " + std::to_string(expected_samples));
  }
  return ds;
}

}  // namespace setpose
