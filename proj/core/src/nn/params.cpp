#include "setpose/nn/params.hpp"

#include <cmath>

#include "setpose/error.hpp"
#include "setpose/rng.hpp"

namespace setpose::nn {

void NamedTensors::add(std::string name, Matrix value) {
  if (contains(name)) throw KeyMismatch("duplicate tensor name '" + name + "'");
  tensors_.emplace(std::move(name), std::move(value));
}

const Matrix& NamedTensors::at(std::string_view name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw KeyMismatch("unknown tensor '" + std::string(name) + "'");
  return it->second;
}

Matrix& NamedTensors::at(std::string_view name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw KeyMismatch("unknown tensor '" + std::string(name) + "'");
  return it->second;
}

std::size_t NamedTensors::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& [name, m] : tensors_) n += m.size();
  return n;
}

bool NamedTensors::same_keys_and_shapes(const NamedTensors& other) const {
  if (size() != other.size()) return false;
  auto a = begin();
  auto b = other.begin();
  for (; a != end(); ++a, ++b) {
    if (a->first != b->first || !a->second.same_shape(b->second)) return false;
  }
  return true;
}

Gradients Gradients::zeros_like(const ParamStore& params) {
  Gradients g;
  for (const auto& [name, m] : params) g.add(name, Matrix(m.rows(), m.cols()));
  return g;
}

void Gradients::accumulate(const Gradients& other) {
  if (!same_keys_and_shapes(other)) throw KeyMismatch("Gradients::accumulate: key/shape mismatch");
  auto b = other.begin();
  for (auto a = begin(); a != end(); ++a, ++b) {
    auto dst = a->second.values();
    auto src = b->second.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
}

void Gradients::scale(double factor) {
  for (auto& [name, m] : *this)
    for (double& v : m.values()) v *= factor;
}

Matrix xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix m(fan_in, fan_out);
  for (double& v : m.values()) v = rng.uniform(-limit, limit);
  return m;
}

}  // namespace setpose::nn
