#include "setpose/nn/layers.hpp"

#include <cmath>

#include "setpose/error.hpp"

namespace setpose::nn {

void init_linear(ParamStore& params, const std::string& prefix, std::size_t in, std::size_t out,
                 Rng& rng) {
  params.add(prefix + ".weight", xavier_uniform(in, out, rng));
  params.add(prefix + ".bias", Matrix(1, out));
}

Var linear(Tape& tape, Var x, const std::string& prefix) {
  return add_row(matmul(x, tape.param(prefix + ".weight")), tape.param(prefix + ".bias"));
}

void init_layer_norm(ParamStore& params, const std::string& prefix, std::size_t dim) {
  params.add(prefix + ".gamma", Matrix(1, dim, 1.0));
  params.add(prefix + ".beta", Matrix(1, dim));
}

Var layer_norm(Tape& tape, Var x, const std::string& prefix, double eps) {
  return layer_norm(x, tape.param(prefix + ".gamma"), tape.param(prefix + ".beta"), eps);
}

void init_attention(ParamStore& params, const std::string& prefix, std::size_t dim, Rng& rng) {
  for (const char* proj : {".q", ".k", ".v", ".out"}) {
    init_linear(params, prefix + proj, dim, dim, rng);
  }
}

Var multi_head_attention(Tape& tape, Var queries, Var keys, Var values, std::size_t n_heads,
                         const std::string& prefix, std::vector<Matrix>* weights_out) {
  const std::size_t dim = queries.cols();
  if (n_heads == 0 || dim % n_heads != 0) {
    throw ShapeError("multi_head_attention: embed dim " + std::to_string(dim) +
                     " not divisible by " + std::to_string(n_heads) + " heads");
  }
  if (keys.cols() != dim || values.cols() != dim || keys.rows() != values.rows()) {
    throw ShapeError("multi_head_attention: inconsistent query/key/value shapes");
  }
  const std::size_t d_head = dim / n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d_head));

  Var q = linear(tape, queries, prefix + ".q");
  Var k = linear(tape, keys, prefix + ".k");
  Var v = linear(tape, values, prefix + ".v");

  std::vector<Var> heads;
  heads.reserve(n_heads);
  if (weights_out != nullptr) weights_out->clear();
  for (std::size_t h = 0; h < n_heads; ++h) {
    Var qh = slice_cols(q, h * d_head, d_head);
    Var kh = slice_cols(k, h * d_head, d_head);
    Var vh = slice_cols(v, h * d_head, d_head);
    Var weights = softmax(scale(matmul_nt(qh, kh), inv_sqrt));
    if (weights_out != nullptr) weights_out->push_back(weights.value());
    heads.push_back(matmul(weights, vh));
  }
  Var merged = n_heads == 1 ? heads.front() : concat_cols(heads);
  return linear(tape, merged, prefix + ".out");
}

void init_mlp(ParamStore& params, const std::string& prefix, std::span<const std::size_t> dims,
              Rng& rng) {
  if (dims.size() < 2) throw ShapeError("init_mlp: need at least input and output dims");
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    init_linear(params, prefix + "." + std::to_string(i), dims[i], dims[i + 1], rng);
  }
}

Var mlp(Tape& tape, Var x, const std::string& prefix, std::size_t n_layers) {
  Var h = x;
  for (std::size_t i = 0; i < n_layers; ++i) {
    h = linear(tape, h, prefix + "." + std::to_string(i));
    if (i + 1 < n_layers) h = relu(h);
  }
  return h;
}

}  // namespace setpose::nn
