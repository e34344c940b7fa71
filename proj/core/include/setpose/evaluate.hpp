#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "setpose/data.hpp"
#include "setpose/hand_model.hpp"
#include "setpose/model.hpp"

namespace setpose {

/// Decoded output of the network for one frame, both sides.
struct FramePrediction {
  std::uint64_t id = 0;
  std::array<DecodedHand, 2> hands;  // indexed by index_of(side)
};

std::vector<FramePrediction> predict(const nn::ParamStore& params, const ModelConfig& config,
                                     const Dataset& dataset, std::size_t threads = 1);

/// One JSON line per frame: id and, per side, query, confidence, present
/// flag, uvd and the matching xyz under the frame's camera.
void write_predictions(const std::filesystem::path& path, std::span<const FramePrediction> preds,
                       const Dataset& dataset);
/// Throws IoError / FormatError.
std::vector<FramePrediction> read_predictions(const std::filesystem::path& path);

struct EvalOptions {
  bool rescale = false;
  std::optional<ScaleStats> scale_stats;
  /// Rescale toward the count-weighted mean of both sides instead of the
  /// predicted side's own mean.
  bool pooled_scale = false;
};

struct FrameRecord {
  std::uint64_t frame_id = 0;
  HandSide side = HandSide::Left;
  double mpjpe = 0.0;             // mm
  double predicted_scale = 0.0;   // mm, before rescaling
  double rescale_factor = 1.0;    // multiplier applied to every depth
};

struct EvalReport {
  /// NaN when the side has no annotated frames.
  double mpjpe_left = 0.0;
  double mpjpe_right = 0.0;
  std::size_t n_frames_left = 0;
  std::size_t n_frames_right = 0;
  bool rescaling_applied = false;
  /// Fraction of frames whose per-side presence decision matches the ground truth.
  double class_accuracy_left = 0.0;
  double class_accuracy_right = 0.0;
  std::vector<FrameRecord> records;

  double mpjpe(HandSide side) const { return side == HandSide::Left ? mpjpe_left : mpjpe_right; }
  double mean_mpjpe() const { return 0.5 * (mpjpe_left + mpjpe_right); }
};

/// Per frame and per annotated side: the side's decoded pose, optionally
/// depth-rescaled toward the training mean, lifted to 3D and compared to the
/// ground truth without any alignment. Hands whose xyz is missing or
/// mirrored are skipped.
///
/// Throws MissingScaleStats when rescaling is requested without stats,
/// FormatError when a frame has no prediction, and DegeneratePose naming
/// the frame when a predicted pose has no scale.
EvalReport evaluate_predictions(std::span<const FramePrediction> preds, const Dataset& dataset,
                                const EvalOptions& options,
                                const SkeletonTopology& topo = SkeletonTopology::standard());

EvalReport evaluate(const nn::ParamStore& params, const ModelConfig& config,
                    const Dataset& dataset, const EvalOptions& options, std::size_t threads = 1);

nlohmann::json to_json(const EvalReport& report, bool with_records = true);
/// Aligned plain-text summary table.
std::string format_report(const EvalReport& report);

}  // namespace setpose
