#include "alrgan/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <string_view>
#include <unordered_set>

#include "alrgan/errors.hpp"
#include "node.hpp"

namespace alrgan {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
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

namespace detail {

std::uint64_t next_sequence() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

std::vector<double>& grad_buffer(Node& node) {
  if (node.grad.size() != node.data.size()) node.grad.assign(node.data.size(), 0.0);
  return node.grad;
}

namespace {

std::shared_ptr<Node> new_node(Shape shape, std::vector<double> values, bool requires_grad) {
  for (auto e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + to_string(shape));
  }
  if (numel(shape) != values.size()) {
    throw DimensionError("shape " + to_string(shape) + " holds " + std::to_string(numel(shape)) +
                         " values, got " + std::to_string(values.size()));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  node->sequence = next_sequence();
  return node;
}

template <typename Inputs>
Tensor make_result_impl(const char* op, Shape shape, std::vector<double> values,
                        const Inputs& inputs, BackwardFn backward) {
  bool any = false;
  for (const auto& t : inputs) any = any || t.node()->requires_grad;
  auto node = new_node(std::move(shape), std::move(values), any);
  node->op = op;
  if (any) {
    for (const auto& t : inputs) {
      if (t.node()->released && !t.is_leaf()) {
        throw ContractError(std::string(op) + ": input graph was already released by backward()");
      }
      node->parents.push_back(t.node());
    }
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

}  // namespace

Tensor make_result(const char* op, Shape shape, std::vector<double> values,
                   std::initializer_list<Tensor> inputs, BackwardFn backward) {
  return make_result_impl(op, std::move(shape), std::move(values), inputs, std::move(backward));
}

Tensor make_result(const char* op, Shape shape, std::vector<double> values,
                   const std::vector<Tensor>& inputs, BackwardFn backward) {
  return make_result_impl(op, std::move(shape), std::move(values), inputs, std::move(backward));
}

}  // namespace detail

using detail::Node;

Tensor::Tensor() : node_(detail::new_node({}, {0.0}, false)) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = numel(shape);
  return Tensor(detail::new_node(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = numel(shape);
  return Tensor(detail::new_node(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  return Tensor(detail::new_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(detail::new_node({}, {value}, requires_grad));
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::size() const { return node_->data.size(); }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw IndexError("axis " + std::to_string(axis) + " out of range for shape " + to_string(shape()));
  }
  return node_->shape[axis];
}

std::span<const double> Tensor::data() const { return node_->data; }
std::span<double> Tensor::mutable_data() { return node_->data; }
std::vector<double> Tensor::values() const { return node_->data; }

std::span<const double> Tensor::grad() const { return detail::grad_buffer(*node_); }
std::span<double> Tensor::mutable_grad() { return detail::grad_buffer(*node_); }
bool Tensor::has_grad() const { return !node_->grad.empty(); }

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
void Tensor::set_requires_grad(bool on) { node_->requires_grad = on; }

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on tensor of shape " + to_string(shape()));
  return node_->data[0];
}

Tensor Tensor::detach() const { return Tensor(detail::new_node(shape(), node_->data, false)); }

Tensor Tensor::clone() const {
  return Tensor(detail::new_node(shape(), node_->data, node_->requires_grad));
}

const char* Tensor::op_name() const { return node_->op; }
bool Tensor::is_leaf() const { return std::string_view(node_->op) == "leaf"; }

void Tensor::backward() const {
  if (size() != 1) {
    throw ContractError("backward() needs a one-element loss, got shape " + to_string(shape()));
  }
  if (node_->released) throw ContractError("backward() called twice on the same graph");
  if (!node_->requires_grad) return;

  // Depth-first post-order gives a topological order (inputs before users).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && !visited.count(p)) {
        if (p->released) throw ContractError("backward() reached a graph already released");
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  detail::grad_buffer(*node_)[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    // A node no gradient reached contributes nothing upstream.
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
  for (Node* n : order) {
    if (n->backward || !n->parents.empty()) {
      n->backward = nullptr;
      n->parents.clear();
      n->released = true;
      if (n != node_.get()) std::vector<double>().swap(n->grad);
    }
  }
  node_->released = true;
}

}  // namespace alrgan
