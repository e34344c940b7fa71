#include "setpose/nn/adamw.hpp"

#include <cmath>

#include "setpose/error.hpp"

namespace setpose::nn {

OptimState OptimState::zeros_like(const ParamStore& params) {
  OptimState state;
  for (const auto& [name, p] : params) {
    state.m.add(name, Matrix(p.rows(), p.cols()));
    state.v.add(name, Matrix(p.rows(), p.cols()));
  }
  return state;
}

void adamw_step(ParamStore& params, const Gradients& grads, OptimState& state,
                const AdamWOptions& options, const LrSchedule& lr_for) {
  if (!params.same_keys_and_shapes(grads) || !params.same_keys_and_shapes(state.m) ||
      !params.same_keys_and_shapes(state.v)) {
    throw KeyMismatch("adamw_step: params, gradients and optimizer state disagree");
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(options.beta1, t);
  const double bias2 = 1.0 - std::pow(options.beta2, t);

  auto g_it = grads.begin();
  auto m_it = state.m.begin();
  auto v_it = state.v.begin();
  for (auto p_it = params.begin(); p_it != params.end(); ++p_it, ++g_it, ++m_it, ++v_it) {
    const double lr = lr_for ? lr_for(p_it->first) : options.lr;
    auto theta = p_it->second.values();
    auto g = g_it->second.values();
    auto m = m_it->second.values();
    auto v = v_it->second.values();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = options.beta1 * m[i] + (1.0 - options.beta1) * g[i];
      v[i] = options.beta2 * v[i] + (1.0 - options.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      theta[i] -= lr * (m_hat / (std::sqrt(v_hat) + options.eps) + options.weight_decay * theta[i]);
    }
  }
}

}  // namespace setpose::nn
