#include "setpose/nn/tape.hpp"

#include <cmath>

#include "setpose/error.hpp"

namespace setpose::nn {

const Matrix& Var::value() const { return tape_->value(id_); }

Var Tape::push(Matrix value, bool needs_grad, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  node.needs_grad = needs_grad;
  if (needs_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

Var Tape::variable(Matrix value) { return push(std::move(value), true, nullptr); }

Var Tape::param(std::string_view name) {
  if (params_ == nullptr) throw KeyMismatch("Tape::param: no ParamStore bound");
  if (auto it = param_ids_.find(name); it != param_ids_.end()) return Var(this, it->second);
  Var v = variable(params_->at(name));
  param_ids_.emplace(std::string(name), v.id());
  return v;
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, BackwardFn backward) {
  bool needs = false;
  for (const Var& in : inputs) needs = needs || nodes_[in.id()].needs_grad;
  return push(std::move(value), needs, std::move(backward));
}

Var Tape::record(Matrix value, const std::vector<Var>& inputs, BackwardFn backward) {
  bool needs = false;
  for (const Var& in : inputs) needs = needs || nodes_[in.id()].needs_grad;
  return push(std::move(value), needs, std::move(backward));
}

Matrix& Tape::grad_buffer(std::size_t id) {
  Node& node = nodes_[id];
  if (!node.has_grad) {
    node.grad = Matrix(node.value.rows(), node.value.cols());
    node.has_grad = true;
  }
  return node.grad;
}

const Matrix& Tape::grad(std::size_t id) { return grad_buffer(id); }

void Tape::accumulate(std::size_t id, const Matrix& g) {
  if (!nodes_[id].needs_grad) return;
  Matrix& dst = grad_buffer(id);
  if (!dst.same_shape(g)) throw ShapeError("Tape::accumulate: gradient shape mismatch");
  auto d = dst.values();
  auto s = g.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

void Tape::backward(Var root) {
  if (root.rows() != 1 || root.cols() != 1) throw ShapeError("Tape::backward: root must be 1x1");
  grad_buffer(root.id())(0, 0) = 1.0;
  for (std::size_t id = root.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (node.has_grad && node.backward) node.backward(*this, id);
  }
}

Gradients Tape::param_gradients() {
  Gradients out = Gradients::zeros_like(*params_);
  for (const auto& [name, id] : param_ids_) {
    if (nodes_[id].has_grad) out.at(name) = nodes_[id].grad;
  }
  return out;
}

LossAndGradients forward_backward(const ParamStore& params,
                                  const std::function<Var(Tape&)>& graph) {
  Tape tape(params);
  Var loss = graph(tape);
  const double value = loss.value()(0, 0);
  if (!std::isfinite(value)) throw NonFiniteLoss("forward_backward: loss is not finite");
  tape.backward(loss);
  return {value, tape.param_gradients()};
}

}  // namespace setpose::nn
