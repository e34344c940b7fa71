#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <map>
#include <string>
#include <vector>

#include "setpose/nn/matrix.hpp"
#include "setpose/nn/params.hpp"

namespace setpose::nn {

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode recorder. Each op computes its value eagerly and pushes a
/// closure that maps the node's output gradient onto its inputs. Nodes are
/// stored in creation order, which is a valid topological order, so the
/// backward sweep is a single reverse pass.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  /// Parameters are looked up lazily by name through param().
  explicit Tape(const ParamStore& params) : params_(&params) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// A differentiable leaf not backed by the ParamStore.
  Var variable(Matrix value);
  /// Leaf bound to a named parameter; repeated calls return the same node.
  Var param(std::string_view name);

  /// Records an op. `backward` is dropped when no input needs a gradient.
  Var record(Matrix value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(Matrix value, const std::vector<Var>& inputs, BackwardFn backward);

  /// Seeds d(root)/d(root) = 1 and sweeps backwards. root must be 1x1.
  void backward(Var root);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  /// Gradient accumulated so far; a zero matrix if nothing reached the node.
  const Matrix& grad(std::size_t id);
  void accumulate(std::size_t id, const Matrix& g);
  /// Mutable gradient buffer, zero-initialized on first access.
  Matrix& grad_buffer(std::size_t id);

  /// Gradients for every parameter of the bound store; unused ones are zero.
  Gradients param_gradients();
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    bool has_grad = false;
    BackwardFn backward;
  };

  Var push(Matrix value, bool needs_grad, BackwardFn backward);

  std::vector<Node> nodes_;
  const ParamStore* params_ = nullptr;
  std::map<std::string, std::size_t, std::less<>> param_ids_;
};

struct LossAndGradients {
  double loss = 0.0;
  Gradients grads;
};

/// Builds the graph on a fresh tape, checks the scalar loss is finite
/// (NonFiniteLoss otherwise) and returns exact parameter gradients.
LossAndGradients forward_backward(const ParamStore& params,
                                  const std::function<Var(Tape&)>& graph);

}  // namespace setpose::nn
