#pragma once

#include <cstdint>
#include <functional>
#include <string_view>

#include "setpose/nn/params.hpp"

namespace setpose::nn {

struct AdamWOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct OptimState {
  NamedTensors m;
  NamedTensors v;
  std::uint64_t step = 0;

  static OptimState zeros_like(const ParamStore& params);
};

/// Per-parameter learning rate; when empty, AdamWOptions::lr applies to all.
using LrSchedule = std::function<double(std::string_view name)>;

/// One AdamW update with decoupled weight decay:
///   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
///   theta <- theta - lr (m_hat / (sqrt(v_hat) + eps) + wd theta)
/// Throws KeyMismatch when params, grads and state disagree on keys/shapes.
void adamw_step(ParamStore& params, const Gradients& grads, OptimState& state,
                const AdamWOptions& options, const LrSchedule& lr_for = {});

}  // namespace setpose::nn
