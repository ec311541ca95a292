#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace alrgan {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {
struct Node;
}

/// Dense row-major array of doubles with an optional gradient buffer.
///
/// A Tensor is a handle: copies share storage and graph position. Operations
/// on tensors that require gradients record themselves on an implicit tape
/// (each result keeps its inputs and a backward closure); `backward()` walks
/// that record in reverse topological order. Use `detach()` or `clone()` to
/// obtain an independent value snapshot, e.g. before handing a tensor to
/// another thread.
class Tensor {
 public:
  /// A rank-0 zero.
  Tensor();

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  std::size_t dim(std::size_t axis) const;

  std::span<const double> data() const;
  /// Writable view of the values. Mutating values of a tensor that already
  /// fed recorded operations invalidates their gradients; use it for leaves.
  std::span<double> mutable_data();
  std::vector<double> values() const;

  /// Gradient buffer; all zeros when no gradient has been accumulated.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  bool has_grad() const;
  void zero_grad();

  bool requires_grad() const;
  void set_requires_grad(bool on);

  /// The single value of a one-element tensor.
  double item() const;
  double operator[](std::size_t flat_index) const { return data()[flat_index]; }

  /// Same values, no graph history, no gradient requirement.
  Tensor detach() const;
  /// Independent copy of values that keeps the requires_grad flag as a leaf.
  Tensor clone() const;

  /// Reverse-mode differentiation from this one-element tensor. Gradients are
  /// accumulated into every reachable leaf that requires them. The recorded
  /// graph is released afterwards, so a second call on the same loss throws
  /// ContractError.
  void backward() const;

  /// Name of the operation that produced this tensor ("leaf" for inputs).
  const char* op_name() const;
  bool is_leaf() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

}  // namespace alrgan
