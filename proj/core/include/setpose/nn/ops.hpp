#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "setpose/nn/tape.hpp"

namespace setpose::nn {

// Differentiable primitives. All operands must live on the same tape.

Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product.
Var mul(Var a, Var b);
Var scale(Var a, double factor);
/// a (n x m) + row (1 x m) broadcast over rows.
Var add_row(Var a, Var row);

Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);

Var relu(Var a);
Var sigmoid(Var a);
Var abs(Var a);

Var softmax(Var a);
Var log_softmax(Var a);

/// Row-wise normalization followed by gamma * x_hat + beta (gamma, beta 1 x m).
Var layer_norm(Var x, Var gamma, Var beta, double eps);

Var slice_cols(Var a, std::size_t start, std::size_t count);
Var concat_cols(const std::vector<Var>& parts);
Var gather_rows(Var a, std::span<const std::size_t> rows);

/// Scalar (1x1) reductions.
Var sum(Var a);
Var mean(Var a);

/// (1/N) * sum_i weight_i * -log softmax(logits_i)[target_i] over the N rows.
Var weighted_cross_entropy(Var logits, std::span<const std::size_t> targets,
                           std::span<const double> weights);

}  // namespace setpose::nn
