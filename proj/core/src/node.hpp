#pragma once

#include <functional>
#include <initializer_list>
#include <memory>
#include <vector>

#include "alrgan/tensor.hpp"

namespace alrgan::detail {

struct Node;
using BackwardFn = std::function<void(const Node& out)>;

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  bool released = false;
  std::uint64_t sequence = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;
};

std::uint64_t next_sequence();

/// Gradient buffer of `node`, allocated as zeros on first use.
std::vector<double>& grad_buffer(Node& node);

inline std::vector<double>& grad_buffer(const Tensor& t) { return grad_buffer(*t.node()); }

inline bool needs_grad(const Tensor& t) { return t.node()->requires_grad; }

/// Builds the result of an operation. The backward closure is only retained
/// when at least one input requires gradients.
Tensor make_result(const char* op, Shape shape, std::vector<double> values,
                   std::initializer_list<Tensor> inputs, BackwardFn backward);
Tensor make_result(const char* op, Shape shape, std::vector<double> values,
                   const std::vector<Tensor>& inputs, BackwardFn backward);

}  // namespace alrgan::detail
