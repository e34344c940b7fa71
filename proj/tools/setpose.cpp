#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "setpose/ablate.hpp"
#include "setpose/config.hpp"
#include "setpose/error.hpp"
#include "setpose/evaluate.hpp"
#include "setpose/nn/checkpoint.hpp"
#include "setpose/train.hpp"

namespace fs = std::filesystem;
using namespace setpose;

namespace {

/// Claims output paths for one command and deletes them again unless the
/// command completes.
class Outputs {
 public:
  explicit Outputs(bool force) : force_(force) {}
  Outputs(const Outputs&) = delete;
  Outputs& operator=(const Outputs&) = delete;
  ~Outputs() {
    if (committed_) return;
    for (const auto& p : claimed_) {
      std::error_code ec;
      fs::remove_all(p, ec);
    }
  }

  void claim(const fs::path& path) {
    if (fs::exists(path)) {
      if (!force_) throw IoError("output '" + path.string() + "' exists (use --force to replace it)");
      std::error_code ec;
      fs::remove_all(path, ec);
      if (ec) throw IoError("cannot remove '" + path.string() + "': " + ec.message());
    }
    claimed_.push_back(path);
  }
  void commit() { committed_ = true; }

 private:
  bool force_;
  bool committed_ = false;
  std::vector<fs::path> claimed_;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path() && !fs::exists(path.parent_path())) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create '" + path.parent_path().string() + "': " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("'" + path.string() + "': " + e.what());
  }
}

RunConfig load_config(const std::string& path) {
  return path.empty() ? RunConfig{} : load_run_config(path);
}

ScaleStats load_scale_stats(const fs::path& path) { return read_json(path).get<ScaleStats>(); }

std::size_t resolve_threads(std::size_t flag, bool flag_given) {
  if (flag_given) return std::max<std::size_t>(flag, 1);
  if (const char* env = std::getenv("SETPOSE_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    throw ConfigError(std::string("SETPOSE_THREADS must be a positive integer, got '") + env + "'");
  }
  return 1;
}

struct LoadedModel {
  nn::ParamStore params;
  ModelConfig config;
};

LoadedModel load_model(const fs::path& dir) {
  nn::Checkpoint ckpt = nn::load_checkpoint(dir);
  ModelConfig cfg = model_config_from_checkpoint(ckpt);
  return {std::move(ckpt.params), cfg};
}

// ---- commands -------------------------------------------------------------

struct GenDataArgs {
  std::string config;
  std::string out;
  std::string split = "train";
  std::optional<std::size_t> n_samples;
  bool force = false;
};

void cmd_gen_data(const GenDataArgs& a) {
  const RunConfig cfg = load_config(a.config);
  GenConfig gen = cfg.data.for_split(split_from_string(a.split));
  if (a.n_samples) gen.n_samples = *a.n_samples;
  gen.validate();
  Outputs outputs(a.force);
  outputs.claim(a.out);
  const Dataset ds = generate_dataset(gen, SkeletonTopology::standard(), a.split);
  write_dataset(a.out, ds);
  outputs.commit();
  std::cout << "wrote " << ds.samples.size() << " " << a.split << " samples to " << a.out << "\n";
}

struct ScaleStatsArgs {
  std::string data;
  std::string out;
  bool force = false;
};

void cmd_scale_stats(const ScaleStatsArgs& a) {
  const Dataset ds = read_dataset(a.data);
  std::vector<SidedPose> poses;
  for (const auto& s : ds.samples) {
    for (const auto& h : s.hands) {
      if (const JointSet3D* xyz = h.valid_xyz()) poses.push_back({h.side, *xyz});
    }
  }
  const ScaleStats stats = compute_mean_scale(poses, SkeletonTopology::standard());
  Outputs outputs(a.force);
  outputs.claim(a.out);
  write_text(a.out, nlohmann::json(stats).dump(2) + "\n");
  outputs.commit();
  std::cout << "mean scale left " << stats.mean_scale_left << " mm (" << stats.n_left
            << "), right " << stats.mean_scale_right << " mm (" << stats.n_right << ")\n";
}

struct TrainArgs {
  std::string config;
  std::string data;
  std::string val;
  std::string out;
  TrainConfig defaults;
  std::size_t max_steps = 0;
  bool force = false;
  bool quiet = false;
};

void cmd_train(const TrainArgs& a, const CLI::App& sub, std::size_t threads) {
  RunConfig cfg = load_config(a.config);
  TrainConfig& tc = cfg.train;
  if (sub.count("--epochs")) tc.total_epochs = a.defaults.total_epochs;
  if (sub.count("--lr-drop-epoch")) tc.lr_drop_epoch = a.defaults.lr_drop_epoch;
  if (sub.count("--lr-transformer")) tc.lr_transformer = a.defaults.lr_transformer;
  if (sub.count("--lr-backbone")) tc.lr_backbone = a.defaults.lr_backbone;
  if (sub.count("--batch-size")) tc.batch_size = a.defaults.batch_size;
  if (sub.count("--seed")) tc.seed = a.defaults.seed;
  cfg.validate();

  const Dataset train_set = read_dataset(a.data);
  std::optional<Dataset> val;
  if (!a.val.empty()) val = read_dataset(a.val);

  Outputs outputs(a.force);
  outputs.claim(a.out);
  const fs::path out(a.out);
  fs::create_directories(out);
  write_text(out / "config.json", nlohmann::json(cfg).dump(2) + "\n");

  TrainOptions opts;
  opts.validation = val ? &*val : nullptr;
  opts.checkpoint_dir = out;
  opts.log_path = out / "train_log.jsonl";
  opts.threads = threads;
  opts.max_steps = a.max_steps;
  if (!a.quiet) {
    opts.on_epoch = [](const EpochRecord& e) {
      std::cerr << "epoch " << e.epoch << " loss " << e.train_loss;
      if (e.val_mpjpe_left) {
        std::cerr << " val mpjpe L " << *e.val_mpjpe_left << " R " << *e.val_mpjpe_right;
      }
      std::cerr << "\n";
    };
  }
  const TrainResult result = train(cfg.model, tc, train_set, opts);
  outputs.commit();
  std::cout << "trained " << result.log.steps.size() << " steps; checkpoints in " << (out / "last").string()
            << " and " << (out / "best").string() << "\n";
}

struct EvalArgs {
  std::string config;
  std::string checkpoint;
  std::string predictions;
  std::string data;
  std::string out;
  std::string scale_stats;
  bool rescale = false;
  bool pooled_scale = false;
  bool records = false;
  bool force = false;
};

void cmd_eval(const EvalArgs& a, std::size_t threads) {
  const RunConfig cfg = load_config(a.config);
  if (a.checkpoint.empty() == a.predictions.empty()) {
    throw ConfigError("eval needs exactly one of --checkpoint or --predictions");
  }
  EvalOptions eo;
  eo.rescale = a.rescale || cfg.eval.rescale;
  eo.pooled_scale = a.pooled_scale || cfg.eval.pooled_scale;
  const std::string stats_path = a.scale_stats.empty() ? cfg.eval.scale_stats : a.scale_stats;
  if (eo.rescale) {
    if (stats_path.empty()) throw MissingScaleStats("--rescale requires --scale-stats");
    eo.scale_stats = load_scale_stats(stats_path);
  }
  const Dataset ds = read_dataset(a.data);
  std::vector<FramePrediction> preds;
  if (!a.checkpoint.empty()) {
    const LoadedModel model = load_model(a.checkpoint);
    preds = predict(model.params, model.config, ds, threads);
  } else {
    preds = read_predictions(a.predictions);
  }
  const EvalReport report = evaluate_predictions(preds, ds, eo);
  Outputs outputs(a.force);
  if (!a.out.empty()) {
    outputs.claim(a.out);
    write_text(a.out, to_json(report, a.records).dump(2) + "\n");
  }
  outputs.commit();
  std::cout << format_report(report);
}

struct PredictArgs {
  std::string checkpoint;
  std::string data;
  std::string out;
  bool force = false;
};

void cmd_predict(const PredictArgs& a, std::size_t threads) {
  const LoadedModel model = load_model(a.checkpoint);
  const Dataset ds = read_dataset(a.data);
  const auto preds = predict(model.params, model.config, ds, threads);
  Outputs outputs(a.force);
  outputs.claim(a.out);
  write_predictions(a.out, preds, ds);
  outputs.commit();
  std::cout << "wrote " << preds.size() << " frame predictions to " << a.out << "\n";
}

struct AblateArgs {
  std::string config;
  std::string out;
  AblationConfig defaults;
  bool force = false;
  bool quiet = false;
};

void cmd_ablate(const AblateArgs& a, std::size_t threads) {
  const RunConfig cfg = load_config(a.config);
  AblationConfig ac = a.defaults;
  ac.model = cfg.model;
  ac.train = cfg.train;
  ac.data = cfg.data;
  ac.threads = threads;
  ac.validate();
  Outputs outputs(a.force);
  if (!a.out.empty()) outputs.claim(a.out);
  const AblationTable table = ablate(ac, [&](const std::string& msg) {
    if (!a.quiet) std::cerr << msg << "\n";
  });
  if (!a.out.empty()) write_text(a.out, to_json(table).dump(2) + "\n");
  outputs.commit();
  std::cout << format_table(table);
}

int run(int argc, char** argv) {
  CLI::App app{"Set-prediction 3D two-hand pose estimation on synthetic scenes", "setpose"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");
  std::size_t threads_flag = 1;
  app.add_option("--threads", threads_flag,
                 "Worker cap (falls back to SETPOSE_THREADS; 1 = fully deterministic)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic dataset split");
  gen_cmd->add_option("--config", gen.config, "Run config JSON (data section)")
      ->check(CLI::ExistingFile);
  gen_cmd->add_option("--out", gen.out, "Output dataset directory")->required();
  gen_cmd->add_option("--split", gen.split, "train, val, test or test-shifted")
      ->capture_default_str()
      ->check(CLI::IsMember({"train", "val", "test", "test-shifted"}));
  gen_cmd->add_option("--n-samples", gen.n_samples,
                      "Override data.n_samples (default " +
                          std::to_string(GenConfig{}.n_samples) + ")");
  gen_cmd->add_flag("--force", gen.force, "Replace an existing output");

  ScaleStatsArgs ss;
  auto* ss_cmd = app.add_subcommand("scale-stats", "Per-side mean hand scale of a dataset");
  ss_cmd->add_option("--data", ss.data, "Dataset directory")->required();
  ss_cmd->add_option("--out", ss.out, "Output JSON file")->required();
  ss_cmd->add_flag("--force", ss.force, "Replace an existing output");

  TrainArgs tr;
  auto* tr_cmd = app.add_subcommand("train", "Train a model");
  tr_cmd->add_option("--config", tr.config, "Run config JSON")->check(CLI::ExistingFile);
  tr_cmd->add_option("--data", tr.data, "Training dataset directory")->required();
  tr_cmd->add_option("--val", tr.val, "Validation dataset directory (selects the best checkpoint)");
  tr_cmd->add_option("--out", tr.out, "Output run directory")->required();
  tr_cmd->add_option("--epochs", tr.defaults.total_epochs, "Override train.total_epochs")
      ->capture_default_str();
  tr_cmd->add_option("--lr-drop-epoch", tr.defaults.lr_drop_epoch, "Override train.lr_drop_epoch")
      ->capture_default_str();
  tr_cmd->add_option("--lr-transformer", tr.defaults.lr_transformer,
                     "Override train.lr_transformer")
      ->capture_default_str();
  tr_cmd->add_option("--lr-backbone", tr.defaults.lr_backbone, "Override train.lr_backbone")
      ->capture_default_str();
  tr_cmd->add_option("--batch-size", tr.defaults.batch_size, "Override train.batch_size")
      ->capture_default_str();
  tr_cmd->add_option("--seed", tr.defaults.seed, "Override train.seed")->capture_default_str();
  tr_cmd->add_option("--max-steps", tr.max_steps, "Stop after this many steps (0 = full schedule)")
      ->capture_default_str();
  tr_cmd->add_flag("--quiet", tr.quiet, "No per-epoch progress on stderr");
  tr_cmd->add_flag("--force", tr.force, "Replace an existing output");

  EvalArgs ev;
  auto* ev_cmd = app.add_subcommand("eval", "Per-side MPJPE of a checkpoint or prediction dump");
  ev_cmd->add_option("--config", ev.config, "Run config JSON (eval section)")
      ->check(CLI::ExistingFile);
  ev_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint directory");
  ev_cmd->add_option("--predictions", ev.predictions, "Prediction dump from `predict`");
  ev_cmd->add_option("--data", ev.data, "Dataset directory with xyz ground truth")->required();
  ev_cmd->add_flag("--rescale", ev.rescale, "Rescale predicted depths toward the training mean scale");
  ev_cmd->add_option("--scale-stats", ev.scale_stats, "Scale stats JSON from `scale-stats`");
  ev_cmd->add_flag("--pooled-scale", ev.pooled_scale,
                   "Use the pooled mean of both sides instead of per-side means");
  ev_cmd->add_option("--out", ev.out, "Write the report as JSON");
  ev_cmd->add_flag("--records", ev.records, "Include per-frame records in the JSON report");
  ev_cmd->add_flag("--force", ev.force, "Replace an existing output");

  PredictArgs pr;
  auto* pr_cmd = app.add_subcommand("predict", "Dump per-frame predicted UVD/XYZ as JSON lines");
  pr_cmd->add_option("--checkpoint", pr.checkpoint, "Checkpoint directory")->required();
  pr_cmd->add_option("--data", pr.data, "Dataset directory")->required();
  pr_cmd->add_option("--out", pr.out, "Output JSON-lines file")->required();
  pr_cmd->add_flag("--force", pr.force, "Replace an existing output");

  AblateArgs ab;
  auto* ab_cmd = app.add_subcommand("ablate", "Resolution / depth-mode / rescaling ablation grid");
  ab_cmd->add_option("--config", ab.config, "Run config JSON (model, train, data)")
      ->check(CLI::ExistingFile);
  ab_cmd->add_option("--out", ab.out, "Write the table as JSON");
  ab_cmd->add_option("--seeds", ab.defaults.seeds, "Training seeds")->capture_default_str();
  ab_cmd->add_option("--small-size", ab.defaults.small_size, "Small image size (px)")
      ->capture_default_str();
  ab_cmd->add_option("--large-size", ab.defaults.large_size, "Large image size (px)")
      ->capture_default_str();
  ab_cmd->add_option("--n-train", ab.defaults.n_train, "Train split size")->capture_default_str();
  ab_cmd->add_option("--n-val", ab.defaults.n_val, "Validation split size")->capture_default_str();
  ab_cmd->add_option("--n-test", ab.defaults.n_test, "Test split sizes")->capture_default_str();
  ab_cmd->add_flag("--quiet", ab.quiet, "No progress on stderr");
  ab_cmd->add_flag("--force", ab.force, "Replace an existing output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : exit_code(ErrorCategory::Config);
  }

  const std::size_t threads = resolve_threads(threads_flag, app.count("--threads") > 0);
  if (*gen_cmd) cmd_gen_data(gen);
  if (*ss_cmd) cmd_scale_stats(ss);
  if (*tr_cmd) cmd_train(tr, *tr_cmd, threads);
  if (*ev_cmd) cmd_eval(ev, threads);
  if (*pr_cmd) cmd_predict(pr, threads);
  if (*ab_cmd) cmd_ablate(ab, threads);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.category());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(ErrorCategory::Io);
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
