#include "setpose/evaluate.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "file_io.hpp"
#include "parallel.hpp"
#include "setpose/error.hpp"

namespace setpose {

namespace {

nlohmann::json joints_json(const std::array<Vec3, kNumJoints>& joints) {
  nlohmann::json out = nlohmann::json::array();
  for (const Vec3& p : joints) out.push_back({p.x, p.y, p.z});
  return out;
}

std::array<Vec3, kNumJoints> joints_from(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != kNumJoints) throw FormatError("expected 21 joints");
  std::array<Vec3, kNumJoints> out{};
  for (std::size_t i = 0; i < kNumJoints; ++i) {
    out[i] = {j[i].at(0).get<double>(), j[i].at(1).get<double>(), j[i].at(2).get<double>()};
  }
  return out;
}

double ratio(std::size_t num, std::size_t den) {
  return den ? static_cast<double>(num) / static_cast<double>(den)
             : std::numeric_limits<double>::quiet_NaN();
}

std::string fixed(double v, int precision) {
  if (std::isnan(v)) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

}  // namespace

std::vector<FramePrediction> predict(const nn::ParamStore& params, const ModelConfig& config,
                                     const Dataset& dataset, std::size_t threads) {
  std::vector<FramePrediction> out(dataset.samples.size());
  detail::parallel_for(out.size(), threads, [&](std::size_t i) {
    const SceneSample& s = dataset.samples[i];
    if (s.image.height != config.image_height || s.image.width != config.image_width) {
      throw ShapeError("frame " + std::to_string(s.id) + " is " + std::to_string(s.image.height) +
                       "x" + std::to_string(s.image.width) + ", model expects " +
                       std::to_string(config.image_height) + "x" + std::to_string(config.image_width));
    }
    out[i].id = s.id;
    out[i].hands = decode_predictions(forward(params, s.image, config), config);
  });
  return out;
}

void write_predictions(const std::filesystem::path& path, std::span<const FramePrediction> preds,
                       const Dataset& dataset) {
  std::unordered_map<std::uint64_t, const SceneSample*> by_id;
  for (const auto& s : dataset.samples) by_id.emplace(s.id, &s);
  std::string lines;
  for (const auto& frame : preds) {
    auto it = by_id.find(frame.id);
    if (it == by_id.end()) throw FormatError("prediction for unknown frame " + std::to_string(frame.id));
    nlohmann::json hands = nlohmann::json::array();
    for (const auto& hand : frame.hands) {
      hands.push_back({{"side", std::string(to_string(hand.side))},
                       {"query", hand.query},
                       {"confidence", hand.confidence},
                       {"present", hand.predicted_present},
                       {"uvd", joints_json(hand.uvd.joints)},
                       {"xyz", joints_json(uvd_to_xyz(hand.uvd, it->second->camera).joints)}});
    }
    lines += nlohmann::json{{"id", frame.id}, {"hands", hands}}.dump() + "\n";
  }
  detail::write_file(path, lines);
}

std::vector<FramePrediction> read_predictions(const std::filesystem::path& path) {
  std::istringstream in(detail::read_file(path));
  std::vector<FramePrediction> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      FramePrediction frame;
      frame.id = j.at("id").get<std::uint64_t>();
      const auto& hands = j.at("hands");
      if (!hands.is_array() || hands.size() != 2) throw FormatError("expected two hands");
      std::array<bool, 2> seen{};
      for (const auto& jh : hands) {
        DecodedHand hand;
        hand.side = hand_side_from_string(jh.at("side").get<std::string>());
        hand.query = jh.at("query").get<std::size_t>();
        hand.confidence = jh.at("confidence").get<double>();
        hand.predicted_present = jh.at("present").get<bool>();
        hand.uvd.joints = joints_from(jh.at("uvd"));
        if (seen[index_of(hand.side)]) throw FormatError("duplicate side");
        seen[index_of(hand.side)] = true;
        frame.hands[index_of(hand.side)] = hand;
      }
      out.push_back(frame);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("'" + path.string() + "' line " + std::to_string(line_no) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError("'" + path.string() + "' line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

EvalReport evaluate_predictions(std::span<const FramePrediction> preds, const Dataset& dataset,
                                const EvalOptions& options, const SkeletonTopology& topo) {
  if (options.rescale && !options.scale_stats) {
    throw MissingScaleStats("rescaling requested without scale stats");
  }
  std::unordered_map<std::uint64_t, const FramePrediction*> by_id;
  for (const auto& p : preds) by_id.emplace(p.id, &p);

  EvalReport report;
  report.rescaling_applied = options.rescale;
  std::array<double, 2> sum{};
  std::array<std::size_t, 2> count{};
  std::array<std::size_t, 2> correct{};
  for (const auto& sample : dataset.samples) {
    auto it = by_id.find(sample.id);
    if (it == by_id.end()) throw FormatError("no prediction for frame " + std::to_string(sample.id));
    const FramePrediction& frame = *it->second;
    for (HandSide side : kHandSides) {
      const HandAnnotation* gt = sample.hand(side);
      const DecodedHand& pred = frame.hands[index_of(side)];
      if (pred.predicted_present == (gt != nullptr)) ++correct[index_of(side)];
      if (!gt || !gt->valid_xyz()) continue;

      FrameRecord rec;
      rec.frame_id = sample.id;
      rec.side = side;
      JointSetUVD uvd = pred.uvd;
      try {
        rec.predicted_scale = hand_scale(uvd_to_xyz(uvd, sample.camera), topo);
        if (options.rescale) {
          const double target = options.pooled_scale ? options.scale_stats->pooled_mean()
                                                     : options.scale_stats->mean_for(side);
          uvd = rescale_depth(uvd, sample.camera, target, topo);
          rec.rescale_factor = target / rec.predicted_scale;
        }
      } catch (const DegeneratePose& e) {
        throw DegeneratePose("frame " + std::to_string(sample.id) + " " +
                             std::string(to_string(side)) + ": " + e.what());
      }
      rec.mpjpe = mpjpe(uvd_to_xyz(uvd, sample.camera), *gt->valid_xyz());
      sum[index_of(side)] += rec.mpjpe;
      ++count[index_of(side)];
      report.records.push_back(rec);
    }
  }
  const std::size_t frames = dataset.samples.size();
  report.n_frames_left = count[0];
  report.n_frames_right = count[1];
  report.mpjpe_left = count[0] ? sum[0] / static_cast<double>(count[0])
                               : std::numeric_limits<double>::quiet_NaN();
  report.mpjpe_right = count[1] ? sum[1] / static_cast<double>(count[1])
                                : std::numeric_limits<double>::quiet_NaN();
  report.class_accuracy_left = ratio(correct[0], frames);
  report.class_accuracy_right = ratio(correct[1], frames);
  return report;
}

EvalReport evaluate(const nn::ParamStore& params, const ModelConfig& config,
                    const Dataset& dataset, const EvalOptions& options, std::size_t threads) {
  if (options.rescale && !options.scale_stats) {
    throw MissingScaleStats("rescaling requested without scale stats");
  }
  const auto preds = predict(params, config, dataset, threads);
  return evaluate_predictions(preds, dataset, options);
}

nlohmann::json to_json(const EvalReport& report, bool with_records) {
  nlohmann::json j = {{"units", "mm"},
                      {"mpjpe_left", report.mpjpe_left},
                      {"mpjpe_right", report.mpjpe_right},
                      {"n_frames_left", report.n_frames_left},
                      {"n_frames_right", report.n_frames_right},
                      {"rescaling_applied", report.rescaling_applied},
                      {"class_accuracy_left", report.class_accuracy_left},
                      {"class_accuracy_right", report.class_accuracy_right}};
  if (with_records) {
    nlohmann::json records = nlohmann::json::array();
    for (const auto& r : report.records) {
      records.push_back({{"frame", r.frame_id},
                         {"side", std::string(to_string(r.side))},
                         {"mpjpe", r.mpjpe},
                         {"predicted_scale", r.predicted_scale},
                         {"rescale_factor", r.rescale_factor}});
    }
    j["records"] = std::move(records);
  }
  return j;
}

std::string format_report(const EvalReport& report) {
  std::ostringstream out;
  out << "rescaling: " << (report.rescaling_applied ? "on" : "off") << "\n";
  out << "side    frames  MPJPE (mm)  class acc\n";
  char line[96];
  for (HandSide side : kHandSides) {
    const bool left = side == HandSide::Left;
    std::snprintf(line, sizeof(line), "%-6s  %6zu  %10s  %9s\n",
                  std::string(to_string(side)).c_str(),
                  left ? report.n_frames_left : report.n_frames_right,
                  fixed(report.mpjpe(side), 2).c_str(),
                  fixed(left ? report.class_accuracy_left : report.class_accuracy_right, 3).c_str());
    out << line;
  }
  return out.str();
}

}  // namespace setpose
