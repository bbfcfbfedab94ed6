// SPDX-License-Identifier: Apache-2.0
//
// Dense double-precision tensors with a dynamic reverse-mode tape.
//
// A Tensor is a cheap handle onto a shared graph node. Operations in ops.hpp
// create new nodes that remember their parents and an adjoint closure; the
// closure is only recorded when at least one input requires a gradient and
// gradient recording is enabled. backward() walks the graph in reverse
// topological order exactly once per node and then releases the interior of
// the graph so that per-bag graphs do not outlive their step.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "jigsaw/error.hpp"

namespace jigsaw::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a gradient reaches this node
  bool requires_grad = false;
  std::string_view op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> adjoint;

  bool is_leaf() const { return op == "leaf"; }
  std::vector<double>& ensure_grad();
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor zeros(Shape shape);
  static Tensor filled(Shape shape, double value);
  static Tensor scalar(double value);
  /// A leaf that accumulates gradients (a learnable parameter or an input
  /// under gradient check).
  static Tensor parameter(Shape shape, std::vector<double> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->value.size(); }

  std::span<const double> values() const { return node_->value; }
  /// Mutable access is only permitted on leaves (parameter updates, tests).
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t flat) const { return node_->value.at(flat); }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  /// Same values, no history.
  Tensor detach() const;
  std::string_view op() const { return node_->op; }

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Interior nodes reachable from root in topological order (parents first).
std::vector<Node*> topological_order(const Tensor& root);

/// Accumulates d(root)/d(leaf) into every requires-grad leaf reachable from a
/// scalar root, then releases the graph interior.
void backward(const Tensor& root);

/// Disables graph recording for the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Used by primitive implementations in ops.cpp.
namespace detail {
Tensor make_result(std::string_view op, Shape shape, std::vector<double> value,
                   std::initializer_list<Tensor> inputs,
                   std::function<void(Node&)> adjoint);
Tensor make_result(std::string_view op, Shape shape, std::vector<double> value,
                   const std::vector<Tensor>& inputs,
                   std::function<void(Node&)> adjoint);
}  // namespace detail

}  // namespace jigsaw::ad
