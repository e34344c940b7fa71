#include "setpose/ablate.hpp"

#include <cstdio>
#include <sstream>

#include "setpose/error.hpp"
#include "setpose/evaluate.hpp"

namespace setpose {

namespace {

const char* mode_label(DepthMode mode) {
  return mode == DepthMode::AbsolutePerJoint ? "absolute" : "relative";
}

Dataset make_split(const AblationConfig& cfg, Split split, std::size_t size, std::size_t n) {
  DataConfig data = cfg.data;
  data.gen.image_height = size;
  data.gen.image_width = size;
  data.gen.intrinsics.reset();  // intrinsics follow the image size
  data.gen.n_samples = n;
  return generate_dataset(data.for_split(split), SkeletonTopology::standard(),
                          std::string(to_string(split)));
}

ScaleStats train_scale_stats(const Dataset& train) {
  std::vector<SidedPose> poses;
  for (const auto& s : train.samples) {
    for (const auto& h : s.hands) {
      if (const JointSet3D* xyz = h.valid_xyz()) poses.push_back({h.side, *xyz});
    }
  }
  return compute_mean_scale(poses, SkeletonTopology::standard());
}

SideErrors side_errors(const EvalReport& report) {
  return {report.mpjpe_left, report.mpjpe_right};
}

std::string cell(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

std::vector<AblationVariant> AblationConfig::variants() const {
  auto label = [](std::size_t size, DepthMode mode) {
    return std::to_string(size) + "px/" + mode_label(mode);
  };
  return {{label(small_size, DepthMode::RootPlusRelative), small_size, DepthMode::RootPlusRelative},
          {label(small_size, DepthMode::AbsolutePerJoint), small_size, DepthMode::AbsolutePerJoint},
          {label(large_size, DepthMode::AbsolutePerJoint), large_size, DepthMode::AbsolutePerJoint}};
}

void AblationConfig::validate() const {
  if (seeds.empty()) throw ConfigError("ablate: at least one seed is required");
  if (small_size >= large_size) throw ConfigError("ablate: small size must be below large size");
  if (n_train == 0 || n_val == 0 || n_test == 0) throw ConfigError("ablate: split sizes must be positive");
  train.validate();
  for (const auto& v : variants()) {
    ModelConfig m = model;
    m.image_height = m.image_width = v.image_size;
    m.depth_mode = v.depth_mode;
    m.validate();
  }
}

AblationTable ablate(const AblationConfig& config,
                     const std::function<void(const std::string&)>& progress) {
  config.validate();
  AblationTable table;
  table.seeds = config.seeds;
  table.shifted_subject_scale_factor = config.data.shifted_subject_scale_factor;
  auto say = [&](const std::string& msg) {
    if (progress) progress(msg);
  };

  for (const auto& variant : config.variants()) {
    const Dataset train_set = make_split(config, Split::Train, variant.image_size, config.n_train);
    const Dataset val = make_split(config, Split::Val, variant.image_size, config.n_val);
    const Dataset test = make_split(config, Split::Test, variant.image_size, config.n_test);
    const Dataset shifted =
        make_split(config, Split::TestShifted, variant.image_size, config.n_test);
    const ScaleStats stats = train_scale_stats(train_set);

    ModelConfig model = config.model;
    model.image_height = model.image_width = variant.image_size;
    model.depth_mode = variant.depth_mode;

    AblationRow off{variant, false, {}, {}, {}};
    AblationRow on{variant, true, {}, {}, {}};
    for (std::uint64_t seed : config.seeds) {
      TrainConfig tc = config.train;
      tc.seed = seed;
      TrainOptions opts;
      opts.validation = &val;
      opts.threads = config.threads;
      say("train " + variant.name + " seed " + std::to_string(seed));
      const TrainResult trained = train(model, tc, train_set, opts);
      const auto& params = trained.best.params;

      const auto test_preds = predict(params, model, test, config.threads);
      const auto shifted_preds = predict(params, model, shifted, config.threads);
      for (AblationRow* row : {&off, &on}) {
        EvalOptions eo;
        eo.rescale = row->rescale;
        eo.scale_stats = stats;
        AblationRun run;
        run.seed = seed;
        run.steps = trained.log.steps.size();
        run.test = side_errors(evaluate_predictions(test_preds, test, eo));
        run.shifted = side_errors(evaluate_predictions(shifted_preds, shifted, eo));
        row->runs.push_back(run);
      }
    }
    for (AblationRow* row : {&off, &on}) {
      const double inv = 1.0 / static_cast<double>(row->runs.size());
      for (const auto& run : row->runs) {
        row->test.left += run.test.left * inv;
        row->test.right += run.test.right * inv;
        row->shifted.left += run.shifted.left * inv;
        row->shifted.right += run.shifted.right * inv;
      }
      table.rows.push_back(*row);
    }
  }
  return table;
}

nlohmann::json to_json(const AblationTable& table) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : table.rows) {
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& run : row.runs) {
      runs.push_back({{"seed", run.seed},
                      {"steps", run.steps},
                      {"test", {{"left", run.test.left}, {"right", run.test.right}}},
                      {"shifted", {{"left", run.shifted.left}, {"right", run.shifted.right}}}});
    }
    rows.push_back({{"variant", row.variant.name},
                    {"image_size", row.variant.image_size},
                    {"depth_mode", mode_label(row.variant.depth_mode)},
                    {"rescaling", row.rescale},
                    {"test", {{"left", row.test.left}, {"right", row.test.right}}},
                    {"shifted", {{"left", row.shifted.left}, {"right", row.shifted.right}}},
                    {"runs", std::move(runs)}});
  }
  return {{"units", "mm"},
          {"metric", "mpjpe"},
          {"seeds", table.seeds},
          {"shifted_subject_scale_factor", table.shifted_subject_scale_factor},
          {"rows", std::move(rows)}};
}

std::string format_table(const AblationTable& table) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-16s %-9s %10s %10s %12s %12s\n", "variant", "rescaling",
                "test L", "test R", "shifted L", "shifted R");
  out << line;
  for (const auto& row : table.rows) {
    std::snprintf(line, sizeof(line), "%-16s %-9s %10s %10s %12s %12s\n", row.variant.name.c_str(),
                  row.rescale ? "on" : "off", cell(row.test.left).c_str(),
                  cell(row.test.right).c_str(), cell(row.shifted.left).c_str(),
                  cell(row.shifted.right).c_str());
    out << line;
  }
  out << "MPJPE in mm, mean over " << table.seeds.size() << " seed(s); shifted split uses subject scale x"
      << table.shifted_subject_scale_factor << "\n";
  return out.str();
}

}  // namespace setpose
