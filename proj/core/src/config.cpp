#include "setpose/config.hpp"

#include <array>

#include "file_io.hpp"
#include "json_util.hpp"
#include "setpose/error.hpp"

namespace setpose {

namespace {

constexpr std::array<std::string_view, 4> kSplitNames{"train", "val", "test", "test-shifted"};
// Golden-ratio stride keeps split seeds far apart for any base seed.
constexpr std::uint64_t kSplitSeedStride = 0x9E3779B97F4A7C15ULL;

}  // namespace

std::string_view to_string(Split split) { return kSplitNames[static_cast<std::size_t>(split)]; }

Split split_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kSplitNames.size(); ++i) {
    if (kSplitNames[i] == name) return static_cast<Split>(i);
  }
  throw ConfigError("unknown split '" + std::string(name) +
                    "' (expected train, val, test or test-shifted)");
}

GenConfig DataConfig::for_split(Split split) const {
  GenConfig out = gen;
  out.seed = gen.seed + static_cast<std::uint64_t>(split) * kSplitSeedStride;
  if (split == Split::TestShifted) out.subject_scale_factor = shifted_subject_scale_factor;
  return out;
}

void to_json(nlohmann::json& j, const DataConfig& cfg) {
  j = cfg.gen;
  j["shifted_subject_scale_factor"] = cfg.shifted_subject_scale_factor;
}

void from_json(const nlohmann::json& j, DataConfig& cfg) {
  if (!j.is_object()) throw ConfigError("config section 'data' must be an object");
  nlohmann::json rest = j;
  if (auto it = rest.find("shifted_subject_scale_factor"); it != rest.end()) {
    if (!it->is_number()) {
      throw ConfigError("config key 'data.shifted_subject_scale_factor' must be a number");
    }
    cfg.shifted_subject_scale_factor = it->get<double>();
    rest.erase(it);
  }
  from_json(rest, cfg.gen);
}

void to_json(nlohmann::json& j, const EvalConfig& cfg) {
  j = {{"rescale", cfg.rescale}, {"scale_stats", cfg.scale_stats}, {"pooled_scale", cfg.pooled_scale}};
}

void from_json(const nlohmann::json& j, EvalConfig& cfg) {
  detail::ObjectReader r(j, "eval");
  r.read("rescale", cfg.rescale);
  r.read("scale_stats", cfg.scale_stats);
  r.read("pooled_scale", cfg.pooled_scale);
  r.finish();
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  data.gen.validate();
  if (!(data.shifted_subject_scale_factor > 0.0)) {
    throw ConfigError("data.shifted_subject_scale_factor must be positive");
  }
}

void to_json(nlohmann::json& j, const RunConfig& cfg) {
  j = {{"model", cfg.model}, {"train", cfg.train}, {"data", cfg.data}, {"eval", cfg.eval}};
}

void from_json(const nlohmann::json& j, RunConfig& cfg) {
  detail::ObjectReader r(j, "config");
  nlohmann::json section;
  if (r.read("model", section)) cfg.model = section.get<ModelConfig>();
  if (r.read("train", section)) cfg.train = section.get<TrainConfig>();
  if (r.read("data", section)) cfg.data = section.get<DataConfig>();
  if (r.read("eval", section)) cfg.eval = section.get<EvalConfig>();
  r.finish();
}

RunConfig load_run_config(const std::filesystem::path& path) {
  const std::string text = detail::read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
  RunConfig cfg = j.get<RunConfig>();
  cfg.validate();
  return cfg;
}

}  // namespace setpose
