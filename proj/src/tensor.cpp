// SPDX-License-Identifier: Apache-2.0

#include "jigsaw/tensor.hpp"

#include <numeric>
#include <sstream>
#include <unordered_set>

namespace jigsaw::ad {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::vector<double>& Node::ensure_grad() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

namespace {
std::shared_ptr<Node> make_leaf(Shape shape, std::vector<double> values,
                                bool requires_grad) {
  if (shape.empty()) shape = {1};
  for (auto extent : shape)
    if (extent == 0) throw ShapeError("tensor: zero extent in " + to_string(shape));
  if (numel(shape) != values.size())
    throw ShapeError("tensor: shape " + to_string(shape) + " holds " +
                     std::to_string(numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return node;
}
}  // namespace

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  return Tensor(make_leaf(std::move(shape), std::move(values), false));
}

Tensor Tensor::zeros(Shape shape) { return filled(std::move(shape), 0.0); }

Tensor Tensor::filled(Shape shape, double value) {
  const auto count = numel(shape.empty() ? Shape{1} : shape);
  return constant(std::move(shape), std::vector<double>(count, value));
}

Tensor Tensor::scalar(double value) { return constant({1}, {value}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  return Tensor(make_leaf(std::move(shape), std::move(values), true));
}

std::span<double> Tensor::mutable_values() {
  if (!node_->is_leaf())
    throw Error("tensor: values of a computed tensor are read-only");
  return node_->value;
}

double Tensor::item() const {
  if (node_->value.size() != 1)
    throw ShapeError("item: tensor of shape " + to_string(shape()) +
                     " is not a scalar");
  return node_->value[0];
}

Tensor Tensor::detach() const {
  return constant(node_->shape, node_->value);
}

std::vector<Node*> topological_order(const Tensor& root) {
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  // Iterative post-order DFS; recursion depth would otherwise scale with
  // graph depth.
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  visited.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second)
        stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

void backward(const Tensor& root) {
  if (!root.defined()) throw Error("backward: undefined root");
  if (root.size() != 1)
    throw ShapeError("backward: root must be scalar, got shape " +
                     to_string(root.shape()));
  if (!root.requires_grad()) return;
  Node* r = root.node();
  if (!r->is_leaf() && !r->adjoint)
    throw Error("backward: graph already released");

  auto order = topological_order(root);
  r->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->is_leaf() || !node->adjoint || node->grad.empty()) continue;
    node->adjoint(*node);
  }
  // Release the interior: leaves keep their accumulated gradient.
  for (Node* node : order) {
    if (node->is_leaf()) continue;
    node->adjoint = nullptr;
    node->parents.clear();
    node->grad.clear();
    node->grad.shrink_to_fit();
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

namespace detail {

Tensor make_result(std::string_view op, Shape shape, std::vector<double> value,
                   const std::vector<Tensor>& inputs,
                   std::function<void(Node&)> adjoint) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  bool needs = false;
  if (g_grad_enabled)
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (const auto& in : inputs) node->parents.push_back(in.shared());
    node->adjoint = std::move(adjoint);
  }
  return Tensor(std::move(node));
}

Tensor make_result(std::string_view op, Shape shape, std::vector<double> value,
                   std::initializer_list<Tensor> inputs,
                   std::function<void(Node&)> adjoint) {
  return make_result(op, std::move(shape), std::move(value),
                     std::vector<Tensor>(inputs), std::move(adjoint));
}

}  // namespace detail
}  // namespace jigsaw::ad
