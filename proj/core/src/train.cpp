#include "setpose/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>

#include "file_io.hpp"
#include "json_util.hpp"
#include "parallel.hpp"
#include "setpose/error.hpp"
#include "setpose/evaluate.hpp"
#include "setpose/nn/adamw.hpp"
#include "setpose/rng.hpp"

namespace setpose {

namespace {

// Salts that separate the RNG streams drawn from one training seed.
constexpr std::uint64_t kShuffleSalt = 0x53485546464c4531ULL;
constexpr std::uint64_t kAugmentSalt = 0x4155474d454e5431ULL;

bool is_backbone(std::string_view name) { return name.starts_with(kBackbonePrefix); }

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = Rng::stream(seed ^ kShuffleSalt, epoch);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

struct SampleResult {
  LossBreakdown loss;
  nn::Gradients grads;
};

SampleResult sample_step(const nn::ParamStore& params, const ModelConfig& model_cfg,
                         const LossWeights& weights, const SceneSample& sample) {
  const auto targets = make_targets(sample, model_cfg);
  const nn::Matrix patches = patchify(sample.image, model_cfg.patch_size);
  LossBreakdown breakdown;
  auto result = nn::forward_backward(params, [&](nn::Tape& tape) {
    const ModelGraph graph = forward_graph(tape, model_cfg, patches);
    const DetectionSet det = to_detection_set(graph.class_logits.value(), graph.joints.value());
    const Assignment assignment = match(targets, det, weights);
    SetLossGraph loss = set_loss_graph(graph.class_logits, graph.joints, targets, assignment,
                                       weights);
    breakdown = loss.breakdown;
    return loss.total;
  });
  return {breakdown, std::move(result.grads)};
}

class JsonLines {
 public:
  explicit JsonLines(const std::optional<std::filesystem::path>& path) {
    if (!path) return;
    out_.open(*path, std::ios::binary | std::ios::trunc);
    if (!out_) throw IoError("cannot open '" + path->string() + "' for writing");
  }
  void write(const nlohmann::json& j) {
    if (!out_.is_open()) return;
    out_ << j.dump() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("train config: " + msg); };
  if (!(lr_transformer > 0.0)) fail("lr_transformer must be positive");
  // Zero freezes the backbone.
  if (!(lr_backbone >= 0.0) || !std::isfinite(lr_backbone)) fail("lr_backbone must be non-negative");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be non-negative");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    fail("adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) fail("adam_eps must be positive");
  if (batch_size == 0) fail("batch_size must be positive");
  if (total_epochs == 0) fail("total_epochs must be positive");
  if (!(lr_drop_factor > 0.0)) fail("lr_drop_factor must be positive");
  if (!(lambda_cls >= 0.0) || !(lambda_l1 >= 0.0) || !(w_noobj >= 0.0)) {
    fail("loss weights must be non-negative");
  }
}

double TrainConfig::lr_transformer_at(std::size_t epoch) const {
  return epoch >= lr_drop_epoch ? lr_transformer / lr_drop_factor : lr_transformer;
}

double TrainConfig::lr_backbone_at(std::size_t epoch) const {
  return epoch >= lr_drop_epoch ? lr_backbone / lr_drop_factor : lr_backbone;
}

void to_json(nlohmann::json& j, const TrainConfig& cfg) {
  j = {{"lr_transformer", cfg.lr_transformer},
       {"lr_backbone", cfg.lr_backbone},
       {"weight_decay", cfg.weight_decay},
       {"adam_beta1", cfg.adam_beta1},
       {"adam_beta2", cfg.adam_beta2},
       {"adam_eps", cfg.adam_eps},
       {"batch_size", cfg.batch_size},
       {"total_epochs", cfg.total_epochs},
       {"lr_drop_epoch", cfg.lr_drop_epoch},
       {"lr_drop_factor", cfg.lr_drop_factor},
       {"steps_per_epoch", cfg.steps_per_epoch},
       {"lambda_cls", cfg.lambda_cls},
       {"lambda_l1", cfg.lambda_l1},
       {"w_noobj", cfg.w_noobj},
       {"hflip", cfg.hflip},
       {"seed", cfg.seed},
       {"deterministic", cfg.deterministic}};
}

void from_json(const nlohmann::json& j, TrainConfig& cfg) {
  detail::ObjectReader r(j, "train");
  r.read("lr_transformer", cfg.lr_transformer);
  r.read("lr_backbone", cfg.lr_backbone);
  r.read("weight_decay", cfg.weight_decay);
  r.read("adam_beta1", cfg.adam_beta1);
  r.read("adam_beta2", cfg.adam_beta2);
  r.read("adam_eps", cfg.adam_eps);
  r.read("batch_size", cfg.batch_size);
  r.read("total_epochs", cfg.total_epochs);
  r.read("lr_drop_epoch", cfg.lr_drop_epoch);
  r.read("lr_drop_factor", cfg.lr_drop_factor);
  r.read("steps_per_epoch", cfg.steps_per_epoch);
  r.read("lambda_cls", cfg.lambda_cls);
  r.read("lambda_l1", cfg.lambda_l1);
  r.read("w_noobj", cfg.w_noobj);
  r.read("hflip", cfg.hflip);
  r.read("seed", cfg.seed);
  r.read("deterministic", cfg.deterministic);
  r.finish();
}

nlohmann::json to_json(const StepRecord& record) {
  return {{"type", "step"},
          {"step", record.step},
          {"epoch", record.epoch},
          {"loss", record.loss.total},
          {"cls_loss", record.loss.cls_loss},
          {"l1_loss", record.loss.l1_loss},
          {"lr_transformer", record.lr_transformer},
          {"lr_backbone", record.lr_backbone}};
}

nlohmann::json to_json(const EpochRecord& record) {
  nlohmann::json j = {{"type", "epoch"}, {"epoch", record.epoch}, {"train_loss", record.train_loss}};
  if (record.val_mpjpe_left) j["val_mpjpe_left"] = *record.val_mpjpe_left;
  if (record.val_mpjpe_right) j["val_mpjpe_right"] = *record.val_mpjpe_right;
  return j;
}

std::vector<HandTarget> make_targets(const SceneSample& sample, const ModelConfig& model_cfg) {
  if (sample.image.height != model_cfg.image_height || sample.image.width != model_cfg.image_width) {
    throw ShapeError("sample " + std::to_string(sample.id) + " is " +
                     std::to_string(sample.image.height) + "x" + std::to_string(sample.image.width) +
                     ", model expects " + std::to_string(model_cfg.image_height) + "x" +
                     std::to_string(model_cfg.image_width));
  }
  std::vector<HandTarget> targets;
  targets.reserve(sample.hands.size());
  for (const auto& hand : sample.hands) {
    targets.push_back({hand.side, normalize_joints(hand.uvd, model_cfg)});
  }
  return targets;
}

nlohmann::json checkpoint_metadata(const ModelConfig& model_cfg, const TrainConfig& train_cfg) {
  return {{"model", model_cfg}, {"train", train_cfg}};
}

ModelConfig model_config_from_checkpoint(const nn::Checkpoint& checkpoint) {
  if (!checkpoint.metadata.contains("model")) {
    throw FormatError("checkpoint metadata has no model config");
  }
  try {
    ModelConfig cfg = checkpoint.metadata.at("model").get<ModelConfig>();
    cfg.validate();
    return cfg;
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint model config: ") + e.what());
  }
}

TrainResult train(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                  const Dataset& dataset, const TrainOptions& options) {
  model_cfg.validate();
  train_cfg.validate();
  if (dataset.samples.empty()) throw EmptySide("train: dataset has no samples");

  const std::size_t n = dataset.samples.size();
  const std::size_t batch = train_cfg.batch_size;
  const std::size_t steps_per_epoch =
      train_cfg.steps_per_epoch ? train_cfg.steps_per_epoch : (n + batch - 1) / batch;
  const std::size_t threads = train_cfg.deterministic ? 1 : std::max<std::size_t>(options.threads, 1);
  const LossWeights weights = train_cfg.loss_weights();

  nn::ParamStore params =
      options.initial_params ? *options.initial_params : build_model(model_cfg, train_cfg.seed);
  nn::OptimState state = nn::OptimState::zeros_like(params);
  nn::AdamWOptions adam;
  adam.beta1 = train_cfg.adam_beta1;
  adam.beta2 = train_cfg.adam_beta2;
  adam.eps = train_cfg.adam_eps;
  adam.weight_decay = train_cfg.weight_decay;

  const nlohmann::json metadata = checkpoint_metadata(model_cfg, train_cfg);
  if (options.checkpoint_dir) detail::make_dirs(*options.checkpoint_dir);
  JsonLines log_file(options.log_path);

  TrainResult result;
  result.best.metadata = metadata;
  double best_val = std::numeric_limits<double>::infinity();
  bool have_best = false;

  std::size_t step = 0;
  std::size_t cursor = 0;
  std::vector<std::size_t> order;
  std::size_t order_epoch = 0;
  bool stop = false;

  for (std::size_t epoch = 0; epoch < train_cfg.total_epochs && !stop; ++epoch) {
    const double lr_t = train_cfg.lr_transformer_at(epoch);
    const double lr_b = train_cfg.lr_backbone_at(epoch);
    const nn::LrSchedule lr_for = [lr_t, lr_b](std::string_view name) {
      return is_backbone(name) ? lr_b : lr_t;
    };
    double epoch_loss = 0.0;
    std::size_t epoch_steps = 0;

    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      if (options.max_steps && step >= options.max_steps) {
        stop = true;
        break;
      }
      ++step;
      std::vector<SceneSample> inputs(batch);
      for (std::size_t k = 0; k < batch; ++k) {
        if (cursor >= order.size()) {
          order = epoch_order(n, train_cfg.seed, order_epoch++);
          cursor = 0;
        }
        const std::size_t index = order[cursor++];
        if (train_cfg.hflip) {
          Rng rng = Rng::stream(train_cfg.seed ^ kAugmentSalt, (step - 1) * batch + k);
          inputs[k] = augment(dataset.samples[index], rng);
        } else {
          inputs[k] = dataset.samples[index];
        }
      }

      std::vector<std::optional<SampleResult>> per_sample(batch);
      try {
        detail::parallel_for(batch, threads, [&](std::size_t k) {
          per_sample[k] = sample_step(params, model_cfg, weights, inputs[k]);
        });
      } catch (const NonFiniteLoss&) {
        log_file.write({{"type", "error"}, {"step", step}, {"error", "non-finite loss"}});
        throw NonFiniteLoss("train: non-finite loss at step " + std::to_string(step) +
                            " (epoch " + std::to_string(epoch) + ")");
      }

      nn::Gradients grads = nn::Gradients::zeros_like(params);
      StepRecord record;
      record.step = step;
      record.epoch = epoch;
      record.lr_transformer = lr_t;
      record.lr_backbone = lr_b;
      record.loss.weights = weights;
      const double inv = 1.0 / static_cast<double>(batch);
      for (const auto& r : per_sample) {
        grads.accumulate(r->grads);
        record.loss.cls_loss += r->loss.cls_loss * inv;
        record.loss.l1_loss += r->loss.l1_loss * inv;
        record.loss.total += r->loss.total * inv;
      }
      grads.scale(inv);
      nn::adamw_step(params, grads, state, adam, lr_for);

      epoch_loss += record.loss.total;
      ++epoch_steps;
      result.log.steps.push_back(record);
      log_file.write(to_json(record));
      if (options.on_step) options.on_step(record);
    }
    if (epoch_steps == 0) break;

    EpochRecord epoch_record;
    epoch_record.epoch = epoch;
    epoch_record.train_loss = epoch_loss / static_cast<double>(epoch_steps);
    double score = static_cast<double>(epoch);  // without validation the latest epoch wins
    if (options.validation) {
      const EvalReport report = evaluate(params, model_cfg, *options.validation, {}, threads);
      epoch_record.val_mpjpe_left = report.mpjpe_left;
      epoch_record.val_mpjpe_right = report.mpjpe_right;
      score = report.mean_mpjpe();
    }
    const bool improved = options.validation ? (!have_best || score < best_val) : true;

    result.last.params = params;
    result.last.optimizer_step = state.step;
    result.last.metadata = metadata;
    result.last.metadata["epoch"] = epoch;
    if (improved) {
      best_val = score;
      have_best = true;
      result.best = result.last;
    }
    if (options.checkpoint_dir) {
      nn::save_checkpoint(*options.checkpoint_dir / "last", result.last);
      if (improved) nn::save_checkpoint(*options.checkpoint_dir / "best", result.best);
    }
    result.log.epochs.push_back(epoch_record);
    log_file.write(to_json(epoch_record));
    if (options.on_epoch) options.on_epoch(epoch_record);
  }
  if (!have_best) {
    result.last.params = params;
    result.last.optimizer_step = state.step;
    result.last.metadata = metadata;
    result.best = result.last;
  }
  return result;
}

}  // namespace setpose
