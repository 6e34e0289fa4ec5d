// Copyright 2026 uttenc authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef UTTENC_TENSOR_HPP_
#define UTTENC_TENSOR_HPP_

#include <Eigen/Core>

#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "uttenc/errors.hpp"

namespace uttenc {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline Index numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1},
                         std::multiplies<Index>());
}

inline std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

template <typename Scalar>
using ArrayX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowMatrix =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace detail {

template <typename Scalar>
struct Node {
  Shape shape;
  ArrayX<Scalar> value;
  ArrayX<Scalar> grad;  // allocated on first accumulation
  bool requires_grad = false;
  bool touched = false;
  // Propagates `self.grad` into the inputs captured by the closure.
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.size() != value.size()) grad = ArrayX<Scalar>::Zero(value.size());
  }
  template <typename Expr>
  void accumulate(const Expr& g) {
    ensure_grad();
    grad += g;
    touched = true;
  }
};

inline int& no_grad_depth() {
  thread_local int depth = 0;
  return depth;
}

}  // namespace detail

inline bool grad_enabled() { return detail::no_grad_depth() == 0; }

/// Disables tape recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard() { ++detail::no_grad_depth(); }
  ~NoGradGuard() { --detail::no_grad_depth(); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

template <typename Scalar>
class Tensor;

/// Ordered record of differentiable operations executed on this thread.
///
/// Every op whose result requires a gradient appends its node here. Reverse
/// replay is a valid topological order because inputs are always recorded
/// before the ops that consume them. One tape exists per thread and scalar
/// type; call reset() between optimisation steps.
template <typename Scalar>
class GradTape {
 public:
  static GradTape& current() {
    thread_local GradTape tape;
    return tape;
  }

  void record(std::shared_ptr<detail::Node<Scalar>> node) {
    ops_.push_back(std::move(node));
  }

  void reset() { ops_.clear(); }
  std::size_t size() const { return ops_.size(); }
  bool empty() const { return ops_.empty(); }

  /// Populates grad of every requires_grad leaf reachable from `loss`.
  /// Leaf gradients accumulate across calls; intermediate gradients are
  /// cleared at the start of each replay.
  void backward(const Tensor<Scalar>& loss);

  /// Number of nodes whose backward closure ran during the last replay.
  std::size_t last_visited() const { return last_visited_; }

 private:
  GradTape() = default;
  std::vector<std::shared_ptr<detail::Node<Scalar>>> ops_;
  std::size_t last_visited_ = 0;
};

/// Dense row-major tensor. Copies share storage; use clone() for a deep copy.
template <typename Scalar>
class Tensor {
 public:
  using Array = ArrayX<Scalar>;
  using Node = detail::Node<Scalar>;

  Tensor() : node_(std::make_shared<Node>()) { node_->shape = {0}; }

  Tensor(Shape shape, Array values, bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    if (numel(shape) != values.size()) {
      throw DimensionError("tensor data of length " +
                           std::to_string(values.size()) +
                           " does not fill shape " + to_string(shape));
    }
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const Index n = numel(shape);
    return Tensor(std::move(shape), Array::Zero(n), requires_grad);
  }
  static Tensor full(Shape shape, Scalar v, bool requires_grad = false) {
    const Index n = numel(shape);
    return Tensor(std::move(shape), Array::Constant(n, v), requires_grad);
  }
  static Tensor scalar(Scalar v, bool requires_grad = false) {
    return Tensor(Shape{}, Array::Constant(1, v), requires_grad);
  }
  /// Copies a (column-major) Eigen matrix into a rows x cols tensor.
  template <typename Derived>
  static Tensor from_matrix(const Eigen::MatrixBase<Derived>& m,
                            bool requires_grad = false) {
    RowMatrix<Scalar> rm = m.template cast<Scalar>();
    Array values = Eigen::Map<const Array>(rm.data(), rm.size());
    return Tensor({rm.rows(), rm.cols()}, std::move(values), requires_grad);
  }

  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  Index dim(int axis) const {
    return node_->shape.at(static_cast<std::size_t>(axis));
  }
  Index size() const { return node_->value.size(); }

  const Array& value() const { return node_->value; }
  /// Direct write access, used by optimisers and initialisers. Does not
  /// participate in differentiation.
  Array& mutable_value() { return node_->value; }
  Scalar item() const {
    if (size() != 1) {
      throw DimensionError("item() on tensor of shape " + to_string(shape()));
    }
    return node_->value(0);
  }
  Scalar operator[](Index flat) const { return node_->value(flat); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  /// Gradient buffer; zeros when nothing has been accumulated yet.
  Array grad() const {
    return has_grad() ? node_->grad : Array::Zero(node_->value.size());
  }
  void zero_grad() {
    if (node_->requires_grad) node_->grad = Array::Zero(node_->value.size());
  }

  /// Row-major 2-D view. Requires rank 2.
  Eigen::Map<const RowMatrix<Scalar>> matrix() const {
    if (rank() != 2) {
      throw DimensionError("matrix() on tensor of shape " +
                           to_string(shape()));
    }
    return {node_->value.data(), dim(0), dim(1)};
  }

  Tensor detach() const { return Tensor(shape(), value(), false); }
  Tensor clone() const { return Tensor(shape(), value(), requires_grad()); }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape(), value().template cast<Other>(), false);
  }

  void backward() const { GradTape<Scalar>::current().backward(*this); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

template <typename Scalar>
void GradTape<Scalar>::backward(const Tensor<Scalar>& loss) {
  if (loss.size() != 1) {
    throw DimensionError("backward() needs a scalar loss, got shape " +
                         to_string(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw std::logic_error("backward() on a loss that does not require grad");
  }
  for (auto& op : ops_) {
    if (op->grad.size()) op->grad.setZero();
    op->touched = false;
  }
  auto& root = *loss.node();
  root.accumulate(Tensor<Scalar>::Array::Ones(1));
  last_visited_ = 0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    auto& op = **it;
    if (!op.touched || !op.backward) continue;
    op.backward(op);
    ++last_visited_;
  }
}

namespace detail {

/// Builds the result of a differentiable op. When any input requires grad
/// (and recording is enabled) the node is put on the tape with `backward`.
template <typename Scalar, typename Fn>
Tensor<Scalar> make_op(Shape shape, ArrayX<Scalar> value,
                       std::initializer_list<Tensor<Scalar>> inputs,
                       Fn&& backward) {
  Tensor<Scalar> out(std::move(shape), std::move(value));
  if (!grad_enabled()) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  out.set_requires_grad(true);
  out.node()->backward = std::forward<Fn>(backward);
  GradTape<Scalar>::current().record(out.node());
  return out;
}

}  // namespace detail
}  // namespace uttenc

#endif  // UTTENC_TENSOR_HPP_
