#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "setpose/nn/ops.hpp"
#include "setpose/nn/params.hpp"

namespace setpose {
class Rng;
}

namespace setpose::nn {

// Layers are stateless: parameters live in a ParamStore under a name prefix,
// created by the matching init_* function and read back through Tape::param.

inline constexpr double kLayerNormEps = 1e-9;

/// <prefix>.weight (in x out), <prefix>.bias (1 x out). y = x W + b.
void init_linear(ParamStore& params, const std::string& prefix, std::size_t in, std::size_t out,
                 Rng& rng);
Var linear(Tape& tape, Var x, const std::string& prefix);

/// <prefix>.gamma = 1, <prefix>.beta = 0.
void init_layer_norm(ParamStore& params, const std::string& prefix, std::size_t dim);
Var layer_norm(Tape& tape, Var x, const std::string& prefix, double eps = kLayerNormEps);

/// Q/K/V/output projections <prefix>.{q,k,v,out}, each dim x dim.
void init_attention(ParamStore& params, const std::string& prefix, std::size_t dim, Rng& rng);

/// Per head: softmax(Q_h K_h^T / sqrt(d_head)) V_h; heads concatenated and
/// projected. queries (n x dim), keys/values (m x dim) -> (n x dim).
/// When `weights_out` is non-null it receives the n x m weights of each head.
Var multi_head_attention(Tape& tape, Var queries, Var keys, Var values, std::size_t n_heads,
                         const std::string& prefix, std::vector<Matrix>* weights_out = nullptr);

/// Linear layers with ReLU between them and none after the last.
/// dims = {in, hidden..., out}; parameters <prefix>.<i>.
void init_mlp(ParamStore& params, const std::string& prefix, std::span<const std::size_t> dims,
              Rng& rng);
Var mlp(Tape& tape, Var x, const std::string& prefix, std::size_t n_layers);

}  // namespace setpose::nn
