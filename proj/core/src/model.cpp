#include "setpose/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "json_util.hpp"
#include "setpose/error.hpp"
#include "setpose/nn/layers.hpp"
#include "setpose/rng.hpp"

namespace setpose {

using nn::Matrix;
using nn::Tape;
using nn::Var;

namespace {

std::string layer_prefix(const char* stack, std::size_t i) {
  return std::string(stack) + "." + std::to_string(i);
}

constexpr std::size_t kClassHeadLayers = 2;
constexpr std::size_t kJointHeadLayers = 3;

const char* depth_mode_name(DepthMode mode) {
  return mode == DepthMode::AbsolutePerJoint ? "absolute" : "relative";
}

DepthMode depth_mode_from(const std::string& name) {
  if (name == "absolute") return DepthMode::AbsolutePerJoint;
  if (name == "relative") return DepthMode::RootPlusRelative;
  throw ConfigError("model.depth_mode must be 'absolute' or 'relative', got '" + name + "'");
}

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
  if (patch_size == 0) fail("patch_size must be positive");
  if (image_height == 0 || image_width == 0) fail("image size must be positive");
  if (image_height % patch_size != 0 || image_width % patch_size != 0) {
    fail("image dims must be divisible by patch_size");
  }
  if (embed_dim == 0 || embed_dim % 4 != 0) fail("embed_dim must be a positive multiple of 4");
  if (n_heads == 0 || embed_dim % n_heads != 0) fail("embed_dim must be divisible by n_heads");
  if (n_encoder_layers == 0 || n_decoder_layers == 0) fail("layer counts must be positive");
  if (ffn_dim == 0) fail("ffn_dim must be positive");
  if (n_queries < 2) fail("n_queries must be at least 2");
  if (!(z_min > 0.0)) fail("z_min must be positive");
  if (!(z_max > z_min)) fail("z_max must exceed z_min");
  if (!(relative_depth_half_range > 0.0)) fail("relative_depth_half_range must be positive");
}

ModelConfig ModelConfig::tiny() {
  ModelConfig cfg;
  cfg.image_height = 32;
  cfg.image_width = 32;
  cfg.patch_size = 8;
  cfg.embed_dim = 16;
  cfg.n_heads = 2;
  cfg.n_encoder_layers = 1;
  cfg.n_decoder_layers = 1;
  cfg.ffn_dim = 32;
  cfg.n_queries = 3;
  return cfg;
}

void to_json(nlohmann::json& j, const ModelConfig& cfg) {
  j = {{"image_height", cfg.image_height},
       {"image_width", cfg.image_width},
       {"patch_size", cfg.patch_size},
       {"embed_dim", cfg.embed_dim},
       {"n_heads", cfg.n_heads},
       {"n_encoder_layers", cfg.n_encoder_layers},
       {"n_decoder_layers", cfg.n_decoder_layers},
       {"ffn_dim", cfg.ffn_dim},
       {"n_queries", cfg.n_queries},
       {"depth_mode", depth_mode_name(cfg.depth_mode)},
       {"z_min", cfg.z_min},
       {"z_max", cfg.z_max},
       {"relative_depth_half_range", cfg.relative_depth_half_range},
       {"position_encoding",
        cfg.position_encoding == PositionEncoding::Sinusoidal ? "sinusoidal" : "learned"}};
}

void from_json(const nlohmann::json& j, ModelConfig& cfg) {
  detail::ObjectReader r(j, "model");
  r.read("image_height", cfg.image_height);
  r.read("image_width", cfg.image_width);
  r.read("patch_size", cfg.patch_size);
  r.read("embed_dim", cfg.embed_dim);
  r.read("n_heads", cfg.n_heads);
  r.read("n_encoder_layers", cfg.n_encoder_layers);
  r.read("n_decoder_layers", cfg.n_decoder_layers);
  r.read("ffn_dim", cfg.ffn_dim);
  r.read("n_queries", cfg.n_queries);
  std::string mode;
  if (r.read("depth_mode", mode)) cfg.depth_mode = depth_mode_from(mode);
  r.read("z_min", cfg.z_min);
  r.read("z_max", cfg.z_max);
  r.read("relative_depth_half_range", cfg.relative_depth_half_range);
  std::string pe;
  if (r.read("position_encoding", pe)) {
    if (pe == "sinusoidal") {
      cfg.position_encoding = PositionEncoding::Sinusoidal;
    } else if (pe == "learned") {
      cfg.position_encoding = PositionEncoding::Learned;
    } else {
      throw ConfigError("model.position_encoding must be 'sinusoidal' or 'learned'");
    }
  }
  r.finish();
}

nn::ParamStore build_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  nn::ParamStore params;
  const std::size_t d = config.embed_dim;

  nn::init_linear(params, "backbone.patch_embed", config.patch_values(), d, rng);
  if (config.position_encoding == PositionEncoding::Learned) {
    params.add("pos_embed", nn::xavier_uniform(config.num_patches(), d, rng));
  }
  const std::array<std::size_t, 3> ffn_dims{d, config.ffn_dim, d};
  for (std::size_t i = 0; i < config.n_encoder_layers; ++i) {
    const std::string p = layer_prefix("encoder", i);
    nn::init_attention(params, p + ".self_attn", d, rng);
    nn::init_layer_norm(params, p + ".norm1", d);
    nn::init_mlp(params, p + ".ffn", ffn_dims, rng);
    nn::init_layer_norm(params, p + ".norm2", d);
  }
  params.add("query_embed", nn::xavier_uniform(config.n_queries, d, rng));
  for (std::size_t i = 0; i < config.n_decoder_layers; ++i) {
    const std::string p = layer_prefix("decoder", i);
    nn::init_attention(params, p + ".self_attn", d, rng);
    nn::init_layer_norm(params, p + ".norm1", d);
    nn::init_attention(params, p + ".cross_attn", d, rng);
    nn::init_layer_norm(params, p + ".norm2", d);
    nn::init_mlp(params, p + ".ffn", ffn_dims, rng);
    nn::init_layer_norm(params, p + ".norm3", d);
  }
  const std::array<std::size_t, kClassHeadLayers + 1> class_dims{d, d, kNumClasses};
  nn::init_mlp(params, "head.class", class_dims, rng);
  const std::array<std::size_t, kJointHeadLayers + 1> joint_dims{d, d, d, kJointValues};
  nn::init_mlp(params, "head.joints", joint_dims, rng);
  return params;
}

Matrix patchify(const Image& image, std::size_t patch_size) {
  if (image.channels != kImageChannels || patch_size == 0 || image.height % patch_size != 0 ||
      image.width % patch_size != 0) {
    throw ShapeError("patchify: image " + std::to_string(image.height) + "x" +
                     std::to_string(image.width) + "x" + std::to_string(image.channels) +
                     " incompatible with patch size " + std::to_string(patch_size));
  }
  const std::size_t rows = image.height / patch_size;
  const std::size_t cols = image.width / patch_size;
  Matrix out(rows * cols, patch_size * patch_size * image.channels);
  for (std::size_t pr = 0; pr < rows; ++pr) {
    for (std::size_t pc = 0; pc < cols; ++pc) {
      auto dst = out.row(pr * cols + pc);
      std::size_t k = 0;
      for (std::size_t dy = 0; dy < patch_size; ++dy)
        for (std::size_t dx = 0; dx < patch_size; ++dx)
          for (std::size_t c = 0; c < image.channels; ++c)
            dst[k++] = image.at(pr * patch_size + dy, pc * patch_size + dx, c);
    }
  }
  return out;
}

Matrix sinusoidal_position_encoding(const ModelConfig& config) {
  const std::size_t rows = config.image_height / config.patch_size;
  const std::size_t cols = config.image_width / config.patch_size;
  const std::size_t quarter = config.embed_dim / 4;
  Matrix pe(rows * cols, config.embed_dim);
  constexpr double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double y = (static_cast<double>(r) + 0.5) / static_cast<double>(rows) * two_pi;
      const double x = (static_cast<double>(c) + 0.5) / static_cast<double>(cols) * two_pi;
      auto dst = pe.row(r * cols + c);
      for (std::size_t i = 0; i < quarter; ++i) {
        const double freq =
            std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(quarter));
        dst[i] = std::sin(y * freq);
        dst[quarter + i] = std::cos(y * freq);
        dst[2 * quarter + i] = std::sin(x * freq);
        dst[3 * quarter + i] = std::cos(x * freq);
      }
    }
  }
  return pe;
}

Matrix position_table(const nn::ParamStore& params, const ModelConfig& config) {
  if (config.position_encoding == PositionEncoding::Learned) return params.at("pos_embed");
  return sinusoidal_position_encoding(config);
}

ModelGraph forward_graph(Tape& tape, const ModelConfig& config, const Matrix& patches,
                         const Matrix* positions) {
  if (patches.rows() != config.num_patches() || patches.cols() != config.patch_values()) {
    throw ShapeError("forward_graph: patch matrix does not match the config");
  }
  if (positions != nullptr && (positions->rows() != patches.rows() ||
                               positions->cols() != config.embed_dim)) {
    throw ShapeError("forward_graph: position table does not match the patches");
  }
  const std::size_t heads = config.n_heads;
  Var pos;
  if (positions != nullptr) {
    pos = tape.constant(*positions);
  } else if (config.position_encoding == PositionEncoding::Learned) {
    pos = tape.param("pos_embed");
  } else {
    pos = tape.constant(sinusoidal_position_encoding(config));
  }

  Var x = nn::add(nn::linear(tape, tape.constant(patches), "backbone.patch_embed"), pos);
  for (std::size_t i = 0; i < config.n_encoder_layers; ++i) {
    const std::string p = layer_prefix("encoder", i);
    Var attn = nn::multi_head_attention(tape, x, x, x, heads, p + ".self_attn");
    x = nn::layer_norm(tape, nn::add(x, attn), p + ".norm1");
    Var ff = nn::mlp(tape, x, p + ".ffn", 2);
    x = nn::layer_norm(tape, nn::add(x, ff), p + ".norm2");
  }
  Var memory = x;
  Var memory_keys = nn::add(memory, pos);

  Var query_pos = tape.param("query_embed");
  Var tgt = query_pos;
  for (std::size_t i = 0; i < config.n_decoder_layers; ++i) {
    const std::string p = layer_prefix("decoder", i);
    Var q = nn::add(tgt, query_pos);
    Var self_attn = nn::multi_head_attention(tape, q, q, tgt, heads, p + ".self_attn");
    tgt = nn::layer_norm(tape, nn::add(tgt, self_attn), p + ".norm1");
    Var cross = nn::multi_head_attention(tape, nn::add(tgt, query_pos), memory_keys, memory,
                                         heads, p + ".cross_attn");
    tgt = nn::layer_norm(tape, nn::add(tgt, cross), p + ".norm2");
    Var ff = nn::mlp(tape, tgt, p + ".ffn", 2);
    tgt = nn::layer_norm(tape, nn::add(tgt, ff), p + ".norm3");
  }

  ModelGraph out;
  out.class_logits = nn::mlp(tape, tgt, "head.class", kClassHeadLayers);
  out.joints = nn::sigmoid(nn::mlp(tape, tgt, "head.joints", kJointHeadLayers));
  return out;
}

DetectionSet to_detection_set(const Matrix& class_logits, const Matrix& joints) {
  if (class_logits.cols() != kNumClasses || joints.cols() != kJointValues ||
      class_logits.rows() != joints.rows()) {
    throw ShapeError("to_detection_set: unexpected head shapes");
  }
  DetectionSet out(class_logits.rows());
  for (std::size_t q = 0; q < out.size(); ++q) {
    std::copy_n(class_logits.row(q).begin(), kNumClasses, out[q].class_logits.begin());
    std::copy_n(joints.row(q).begin(), kJointValues, out[q].joints_norm.begin());
  }
  return out;
}

DetectionSet forward(const nn::ParamStore& params, const Image& image, const ModelConfig& config) {
  if (image.height != config.image_height || image.width != config.image_width) {
    throw ShapeError("forward: image is " + std::to_string(image.height) + "x" +
                     std::to_string(image.width) + ", model expects " +
                     std::to_string(config.image_height) + "x" +
                     std::to_string(config.image_width));
  }
  Tape tape(params);
  ModelGraph g = forward_graph(tape, config, patchify(image, config.patch_size));
  return to_detection_set(g.class_logits.value(), g.joints.value());
}

std::array<double, kJointValues> normalize_joints(const JointSetUVD& pose,
                                                  const ModelConfig& config) {
  std::array<double, kJointValues> out{};
  const double w = static_cast<double>(config.image_width);
  const double h = static_cast<double>(config.image_height);
  const double span = config.z_max - config.z_min;
  const double wrist_d = pose.joints[0].z;
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    const Vec3& p = pose.joints[j];
    out[3 * j] = p.x / w;
    out[3 * j + 1] = p.y / h;
    if (config.depth_mode == DepthMode::AbsolutePerJoint || j == 0) {
      out[3 * j + 2] = (p.z - config.z_min) / span;
    } else {
      out[3 * j + 2] = 0.5 + (p.z - wrist_d) / (2.0 * config.relative_depth_half_range);
    }
  }
  return out;
}

JointSetUVD denormalize_joints(std::span<const double, kJointValues> joints_norm,
                               const ModelConfig& config) {
  // Relative mode can reach z_min - delta; depth is kept strictly positive so
  // the pose stays projectable.
  constexpr double kMinDepthMm = 1e-3;
  JointSetUVD out;
  const double w = static_cast<double>(config.image_width);
  const double h = static_cast<double>(config.image_height);
  const double span = config.z_max - config.z_min;
  const double wrist_d = config.z_min + joints_norm[2] * span;
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    double d = 0.0;
    if (config.depth_mode == DepthMode::AbsolutePerJoint || j == 0) {
      d = config.z_min + joints_norm[3 * j + 2] * span;
    } else {
      d = wrist_d + (2.0 * joints_norm[3 * j + 2] - 1.0) * config.relative_depth_half_range;
    }
    out.joints[j] = {joints_norm[3 * j] * w, joints_norm[3 * j + 1] * h, std::max(d, kMinDepthMm)};
  }
  return out;
}

std::array<DecodedHand, 2> decode_predictions(const DetectionSet& detections,
                                              const ModelConfig& config) {
  if (detections.empty()) throw ShapeError("decode_predictions: empty detection set");
  // The denominator is summed in sorted order so that queries whose logits
  // are permutations of each other tie exactly and the lower index wins.
  Matrix probs(detections.size(), kNumClasses);
  for (std::size_t q = 0; q < detections.size(); ++q) {
    const auto& z = detections[q].class_logits;
    const double top = *std::max_element(z.begin(), z.end());
    std::array<double, kNumClasses> e{};
    for (std::size_t k = 0; k < kNumClasses; ++k) e[k] = std::exp(z[k] - top);
    std::array<double, kNumClasses> sorted = e;
    std::sort(sorted.begin(), sorted.end());
    double total = 0.0;
    for (double v : sorted) total += v;
    for (std::size_t k = 0; k < kNumClasses; ++k) probs(q, k) = e[k] / total;
  }

  std::array<DecodedHand, 2> out;
  for (HandSide side : kHandSides) {
    const std::size_t cls = index_of(side);
    std::size_t best = 0;
    for (std::size_t q = 1; q < detections.size(); ++q) {
      if (probs(q, cls) > probs(best, cls)) best = q;
    }
    const auto row = probs.row(best);
    const auto argmax = static_cast<std::size_t>(
        std::distance(row.begin(), std::max_element(row.begin(), row.end())));
    DecodedHand& hand = out[cls];
    hand.side = side;
    hand.query = best;
    hand.confidence = probs(best, cls);
    hand.predicted_present = argmax == cls;
    hand.uvd = denormalize_joints(detections[best].joints_norm, config);
  }
  return out;
}

}  // namespace setpose
