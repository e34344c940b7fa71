#include "setpose/nn/ops.hpp"

#include <cmath>
#include <string>

#include "setpose/error.hpp"

namespace setpose::nn {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

Matrix map(const Matrix& a, auto fn) {
  Matrix out(a.rows(), a.cols());
  auto src = a.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = fn(src[i]);
  return out;
}

Matrix zip(const Matrix& a, const Matrix& b, auto fn) {
  Matrix out(a.rows(), a.cols());
  auto x = a.values();
  auto y = b.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < x.size(); ++i) dst[i] = fn(x[i], y[i]);
  return out;
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  Matrix out = zip(a.value(), b.value(), [](double x, double y) { return x + y; });
  return a.tape().record(std::move(out), {a, b},
                         [ia = a.id(), ib = b.id()](Tape& t, std::size_t self) {
                           const Matrix& g = t.grad(self);
                           t.accumulate(ia, g);
                           t.accumulate(ib, g);
                         });
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  Matrix out = zip(a.value(), b.value(), [](double x, double y) { return x - y; });
  return a.tape().record(std::move(out), {a, b},
                         [ia = a.id(), ib = b.id()](Tape& t, std::size_t self) {
                           const Matrix& g = t.grad(self);
                           t.accumulate(ia, g);
                           if (t.needs_grad(ib)) t.accumulate(ib, map(g, [](double v) { return -v; }));
                         });
}

Var mul(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mul");
  Matrix out = zip(a.value(), b.value(), [](double x, double y) { return x * y; });
  return a.tape().record(
      std::move(out), {a, b}, [ia = a.id(), ib = b.id()](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        if (t.needs_grad(ia)) t.accumulate(ia, zip(g, t.value(ib), [](double x, double y) { return x * y; }));
        if (t.needs_grad(ib)) t.accumulate(ib, zip(g, t.value(ia), [](double x, double y) { return x * y; }));
      });
}

Var scale(Var a, double factor) {
  Matrix out = map(a.value(), [factor](double x) { return factor * x; });
  return a.tape().record(std::move(out), {a}, [ia = a.id(), factor](Tape& t, std::size_t self) {
    t.accumulate(ia, map(t.grad(self), [factor](double v) { return factor * v; }));
  });
}

Var add_row(Var a, Var row) {
  const Matrix& x = a.value();
  const Matrix& r = row.value();
  if (r.rows() != 1 || r.cols() != x.cols()) throw ShapeError("add_row: row must be 1 x cols");
  Matrix out = x;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto o = out.row(i);
    for (std::size_t j = 0; j < o.size(); ++j) o[j] += r(0, j);
  }
  return a.tape().record(std::move(out), {a, row},
                         [ia = a.id(), ir = row.id()](Tape& t, std::size_t self) {
                           const Matrix& g = t.grad(self);
                           t.accumulate(ia, g);
                           if (t.needs_grad(ir)) {
                             Matrix gr(1, g.cols());
                             for (std::size_t i = 0; i < g.rows(); ++i)
                               for (std::size_t j = 0; j < g.cols(); ++j) gr(0, j) += g(i, j);
                             t.accumulate(ir, gr);
                           }
                         });
}

Var matmul(Var a, Var b) {
  Matrix out = nn::matmul(a.value(), b.value());
  return a.tape().record(std::move(out), {a, b},
                         [ia = a.id(), ib = b.id()](Tape& t, std::size_t self) {
                           const Matrix& g = t.grad(self);
                           if (t.needs_grad(ia)) t.accumulate(ia, matmul_nt(g, t.value(ib)));
                           if (t.needs_grad(ib)) t.accumulate(ib, matmul_tn(t.value(ia), g));
                         });
}

Var matmul_nt(Var a, Var b) {
  Matrix out = nn::matmul_nt(a.value(), b.value());
  return a.tape().record(std::move(out), {a, b},
                         [ia = a.id(), ib = b.id()](Tape& t, std::size_t self) {
                           const Matrix& g = t.grad(self);
                           // out = a b^T: da = g b, db = g^T a
                           if (t.needs_grad(ia)) t.accumulate(ia, nn::matmul(g, t.value(ib)));
                           if (t.needs_grad(ib)) t.accumulate(ib, matmul_tn(g, t.value(ia)));
                         });
}

Var relu(Var a) {
  Matrix out = map(a.value(), [](double x) { return x > 0.0 ? x : 0.0; });
  return a.tape().record(std::move(out), {a}, [ia = a.id()](Tape& t, std::size_t self) {
    t.accumulate(ia, zip(t.grad(self), t.value(ia),
                         [](double g, double x) { return x > 0.0 ? g : 0.0; }));
  });
}

Var sigmoid(Var a) {
  Matrix out = map(a.value(), [](double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  return a.tape().record(std::move(out), {a}, [ia = a.id()](Tape& t, std::size_t self) {
    t.accumulate(ia, zip(t.grad(self), t.value(self),
                         [](double g, double y) { return g * y * (1.0 - y); }));
  });
}

Var abs(Var a) {
  Matrix out = map(a.value(), [](double x) { return std::fabs(x); });
  return a.tape().record(std::move(out), {a}, [ia = a.id()](Tape& t, std::size_t self) {
    t.accumulate(ia, zip(t.grad(self), t.value(ia), [](double g, double x) {
                   return x > 0.0 ? g : (x < 0.0 ? -g : 0.0);
                 }));
  });
}

Var softmax(Var a) {
  Matrix out = softmax_rows(a.value());
  return a.tape().record(std::move(out), {a}, [ia = a.id()](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& y = t.value(self);
    Matrix dz(y.rows(), y.cols());
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) dot += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) dz(r, c) = y(r, c) * (g(r, c) - dot);
    }
    t.accumulate(ia, dz);
  });
}

Var log_softmax(Var a) {
  const Matrix& z = a.value();
  Matrix probs = softmax_rows(z);
  Matrix out(z.rows(), z.cols());
  for (std::size_t r = 0; r < z.rows(); ++r) {
    double peak = z(r, 0);
    for (std::size_t c = 1; c < z.cols(); ++c) peak = std::max(peak, z(r, c));
    double total = 0.0;
    for (std::size_t c = 0; c < z.cols(); ++c) total += std::exp(z(r, c) - peak);
    const double log_norm = peak + std::log(total);
    for (std::size_t c = 0; c < z.cols(); ++c) out(r, c) = z(r, c) - log_norm;
  }
  return a.tape().record(std::move(out), {a},
                         [ia = a.id(), probs = std::move(probs)](Tape& t, std::size_t self) {
                           const Matrix& g = t.grad(self);
                           Matrix dz(g.rows(), g.cols());
                           for (std::size_t r = 0; r < g.rows(); ++r) {
                             double gsum = 0.0;
                             for (std::size_t c = 0; c < g.cols(); ++c) gsum += g(r, c);
                             for (std::size_t c = 0; c < g.cols(); ++c)
                               dz(r, c) = g(r, c) - probs(r, c) * gsum;
                           }
                           t.accumulate(ia, dz);
                         });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Matrix& in = x.value();
  const std::size_t n = in.rows();
  const std::size_t m = in.cols();
  if (gamma.rows() != 1 || gamma.cols() != m || beta.rows() != 1 || beta.cols() != m) {
    throw ShapeError("layer_norm: gamma/beta must be 1 x cols");
  }
  Matrix x_hat(n, m);
  std::vector<double> inv_std(n);
  Matrix out(n, m);
  const Matrix& g = gamma.value();
  const Matrix& b = beta.value();
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = in.row(r);
    double mu = 0.0;
    for (double v : row) mu += v;
    mu /= static_cast<double>(m);
    double var = 0.0;
    for (double v : row) var += (v - mu) * (v - mu);
    var /= static_cast<double>(m);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < m; ++c) {
      x_hat(r, c) = (row[c] - mu) * inv_std[r];
      out(r, c) = g(0, c) * x_hat(r, c) + b(0, c);
    }
  }
  return x.tape().record(
      std::move(out), {x, gamma, beta},
      [ix = x.id(), ig = gamma.id(), ib = beta.id(), x_hat = std::move(x_hat),
       inv_std = std::move(inv_std)](Tape& t, std::size_t self) {
        const Matrix& grad = t.grad(self);
        const Matrix& gam = t.value(ig);
        const std::size_t rows = grad.rows();
        const std::size_t cols = grad.cols();
        if (t.needs_grad(ig) || t.needs_grad(ib)) {
          Matrix dg(1, cols);
          Matrix db(1, cols);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) {
              dg(0, c) += grad(r, c) * x_hat(r, c);
              db(0, c) += grad(r, c);
            }
          t.accumulate(ig, dg);
          t.accumulate(ib, db);
        }
        if (t.needs_grad(ix)) {
          Matrix dx(rows, cols);
          const double inv_m = 1.0 / static_cast<double>(cols);
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_d = 0.0;
            double mean_dx = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
              const double d = grad(r, c) * gam(0, c);
              mean_d += d;
              mean_dx += d * x_hat(r, c);
            }
            mean_d *= inv_m;
            mean_dx *= inv_m;
            for (std::size_t c = 0; c < cols; ++c) {
              const double d = grad(r, c) * gam(0, c);
              dx(r, c) = inv_std[r] * (d - mean_d - x_hat(r, c) * mean_dx);
            }
          }
          t.accumulate(ix, dx);
        }
      });
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  const Matrix& in = a.value();
  if (start + count > in.cols()) throw ShapeError("slice_cols: range out of bounds");
  Matrix out(in.rows(), count);
  for (std::size_t r = 0; r < in.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = in(r, start + c);
  return a.tape().record(std::move(out), {a},
                         [ia = a.id(), start, count](Tape& t, std::size_t self) {
                           const Matrix& g = t.grad(self);
                           Matrix& dst = t.grad_buffer(ia);
                           for (std::size_t r = 0; r < g.rows(); ++r)
                             for (std::size_t c = 0; c < count; ++c) dst(r, start + c) += g(r, c);
                         });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row count mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::size_t offset = 0;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> offsets;
  for (const Var& p : parts) {
    const Matrix& v = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < v.cols(); ++c) out(r, offset + c) = v(r, c);
    ids.push_back(p.id());
    offsets.push_back(offset);
    offset += v.cols();
  }
  return parts.front().tape().record(
      std::move(out), parts,
      [ids = std::move(ids), offsets = std::move(offsets)](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (!t.needs_grad(ids[k])) continue;
          Matrix& dst = t.grad_buffer(ids[k]);
          for (std::size_t r = 0; r < dst.rows(); ++r)
            for (std::size_t c = 0; c < dst.cols(); ++c) dst(r, c) += g(r, offsets[k] + c);
        }
      });
}

Var gather_rows(Var a, std::span<const std::size_t> rows) {
  const Matrix& in = a.value();
  Matrix out(rows.size(), in.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= in.rows()) throw ShapeError("gather_rows: row index out of range");
    for (std::size_t c = 0; c < in.cols(); ++c) out(i, c) = in(rows[i], c);
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return a.tape().record(std::move(out), {a},
                         [ia = a.id(), idx = std::move(idx)](Tape& t, std::size_t self) {
                           const Matrix& g = t.grad(self);
                           Matrix& dst = t.grad_buffer(ia);
                           for (std::size_t i = 0; i < idx.size(); ++i)
                             for (std::size_t c = 0; c < g.cols(); ++c) dst(idx[i], c) += g(i, c);
                         });
}

Var sum(Var a) {
  double total = 0.0;
  for (double v : a.value().values()) total += v;
  return a.tape().record(Matrix(1, 1, total), {a}, [ia = a.id()](Tape& t, std::size_t self) {
    const double g = t.grad(self)(0, 0);
    Matrix& dst = t.grad_buffer(ia);
    for (double& v : dst.values()) v += g;
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0.0) throw ShapeError("mean: empty input");
  return scale(sum(a), 1.0 / n);
}

Var weighted_cross_entropy(Var logits, std::span<const std::size_t> targets,
                           std::span<const double> weights) {
  const Matrix& z = logits.value();
  if (targets.size() != z.rows() || weights.size() != z.rows()) {
    throw ShapeError("weighted_cross_entropy: targets/weights must match the row count");
  }
  Matrix probs = softmax_rows(z);
  const double inv_n = 1.0 / static_cast<double>(z.rows());
  double loss = 0.0;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    if (targets[r] >= z.cols()) throw ShapeError("weighted_cross_entropy: target out of range");
    double peak = z(r, 0);
    for (std::size_t c = 1; c < z.cols(); ++c) peak = std::max(peak, z(r, c));
    double total = 0.0;
    for (std::size_t c = 0; c < z.cols(); ++c) total += std::exp(z(r, c) - peak);
    const double log_p = z(r, targets[r]) - peak - std::log(total);
    loss -= weights[r] * log_p;
  }
  loss *= inv_n;
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  std::vector<double> w(weights.begin(), weights.end());
  return logits.tape().record(
      Matrix(1, 1, loss), {logits},
      [il = logits.id(), probs = std::move(probs), tgt = std::move(tgt), w = std::move(w),
       inv_n](Tape& t, std::size_t self) {
        const double g = t.grad(self)(0, 0);
        Matrix dz(probs.rows(), probs.cols());
        for (std::size_t r = 0; r < probs.rows(); ++r) {
          const double k = g * w[r] * inv_n;
          for (std::size_t c = 0; c < probs.cols(); ++c) {
            dz(r, c) = k * (probs(r, c) - (c == tgt[r] ? 1.0 : 0.0));
          }
        }
        t.accumulate(il, dz);
      });
}

}  // namespace setpose::nn
