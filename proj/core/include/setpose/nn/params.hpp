#pragma once

#include <cstddef>
#include <map>
#include <string>

#include "setpose/nn/matrix.hpp"

namespace setpose {
class Rng;
}

namespace setpose::nn {

/// Name -> matrix map iterated in lexicographic name order.
class NamedTensors {
 public:
  using Map = std::map<std::string, Matrix, std::less<>>;

  /// Throws KeyMismatch if the name already exists.
  void add(std::string name, Matrix value);
  bool contains(std::string_view name) const { return tensors_.find(name) != tensors_.end(); }
  /// Throws KeyMismatch for unknown names.
  const Matrix& at(std::string_view name) const;
  Matrix& at(std::string_view name);

  std::size_t size() const noexcept { return tensors_.size(); }
  /// Total number of scalars across all tensors.
  std::size_t scalar_count() const noexcept;
  bool same_keys_and_shapes(const NamedTensors& other) const;

  Map::const_iterator begin() const { return tensors_.begin(); }
  Map::const_iterator end() const { return tensors_.end(); }
  Map::iterator begin() { return tensors_.begin(); }
  Map::iterator end() { return tensors_.end(); }

  friend bool operator==(const NamedTensors&, const NamedTensors&) = default;

 private:
  Map tensors_;
};

class ParamStore : public NamedTensors {};

/// Same keys and shapes as the ParamStore it differentiates.
class Gradients : public NamedTensors {
 public:
  static Gradients zeros_like(const ParamStore& params);
  /// this += other, key by key (KeyMismatch on any difference).
  void accumulate(const Gradients& other);
  void scale(double factor);
};

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Matrix xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

}  // namespace setpose::nn
