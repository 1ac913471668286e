#include "ricnet/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_map>
#include <utility>

#include "ricnet/errors.hpp"

namespace ricnet {

namespace {
thread_local bool tls_grad_enabled = true;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ')';
  return out.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Buffer& detail::Node::ensure_grad() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  return grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor shape " + shape_str(shape) + " does not hold " +
                     std::to_string(values.size()) + " values");
  }
  node_ = std::make_shared<detail::Node>();
  node_->shape = std::move(shape);
  node_->value.assign(values.begin(), values.end());
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::numel() const { return node_->value.size(); }

std::size_t Tensor::dim(std::ptrdiff_t axis) const {
  const auto r = static_cast<std::ptrdiff_t>(rank());
  const auto a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape()));
  }
  return shape()[static_cast<std::size_t>(a)];
}

std::span<const double> Tensor::data() const { return node_->value; }
std::span<double> Tensor::data_mut() { return node_->value; }
std::vector<double> Tensor::to_vector() const { return {node_->value.begin(), node_->value.end()}; }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
  node_->requires_grad = flag;
  return *this;
}

bool Tensor::is_leaf() const { return node_->is_leaf(); }

std::span<const double> Tensor::grad() const { return node_->ensure_grad(); }
std::span<double> Tensor::grad_mut() { return node_->ensure_grad(); }

void Tensor::zero_grad() {
  if (node_) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  auto node = std::make_shared<detail::Node>();
  node->shape = shape();
  node->value = node_->value;
  return Tensor(std::move(node));
}

Tensor Tensor::from_op(Shape shape, Buffer values, const char* op, std::initializer_list<Tensor> inputs, detail::BackwardFn fn) {
  return from_op(std::move(shape), std::move(values), op, std::vector<Tensor>(inputs), std::move(fn));
}

Tensor Tensor::from_op(Shape shape, Buffer values, const char* op, const std::vector<Tensor>& inputs, detail::BackwardFn fn) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->op = op;
  const bool track =
      tls_grad_enabled && std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (track) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (const auto& t : inputs) node->inputs.push_back(t.node_ptr());
    node->backward_fn = std::move(fn);
  }
  return Tensor(std::move(node));
}

bool grad_enabled() { return tls_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(tls_grad_enabled) { tls_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { tls_grad_enabled = previous_; }

ComputationGraph ComputationGraph::trace(const Tensor& root) {
  ComputationGraph graph;
  if (!root.defined() || !root.requires_grad()) return graph;
  // Iterative post-order DFS; post-order of a DAG is a topological order.
  std::unordered_map<const detail::Node*, bool> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  seen[root.node()] = true;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node* child = node->inputs[next++].get();
      if (child->requires_grad && !seen[child]) {
        seen[child] = true;
        stack.emplace_back(child, 0);
      }
    } else {
      graph.order_.push_back(node);
      stack.pop_back();
    }
  }
  return graph;
}

std::vector<ComputationGraph::Record> ComputationGraph::records() const {
  std::unordered_map<const detail::Node*, std::size_t> ids;
  for (std::size_t i = 0; i < order_.size(); ++i) ids[order_[i]] = i;
  std::vector<Record> out;
  out.reserve(order_.size());
  for (std::size_t i = 0; i < order_.size(); ++i) {
    Record r{order_[i]->op, i, {}};
    for (const auto& in : order_[i]->inputs) {
      if (auto it = ids.find(in.get()); it != ids.end()) r.inputs.push_back(it->second);
    }
    out.push_back(std::move(r));
  }
  return out;
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1 || loss.rank() != 0) {
    throw ShapeError("backward() needs a scalar loss, got shape " +
                     (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) return;
  const auto graph = ComputationGraph::trace(loss);
  for (auto* node : graph.order()) {
    if (!node->is_leaf()) node->grad.assign(node->value.size(), 0.0);
  }
  loss.node()->ensure_grad()[0] += 1.0;
  const auto& order = graph.order();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->is_leaf() || !node->backward_fn) continue;
    for (auto& in : node->inputs) {
      if (in->requires_grad) in->ensure_grad();
    }
    node->backward_fn(*node);
  }
}

}  // namespace ricnet
