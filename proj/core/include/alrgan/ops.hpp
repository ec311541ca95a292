#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "alrgan/tensor.hpp"

// Differentiable operations. Every function returns a fresh tensor and, when an
// input requires gradients, records a backward closure for it.
//
// Subgradient conventions at non-differentiable points:
//   abs'(0) = 0, d|x|_F at x = 0 is 0, leaky_relu'(0) uses the negative slope,
//   max/min ties route the gradient to the lowest flat index.
//
// Image-like tensors are [channels, height, width]; feature maps [D, N] with
// N = height * width share that memory layout.

namespace alrgan {

// Elementwise, same shape.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double offset);
Tensor neg(const Tensor& x);

Tensor abs(const Tensor& x);
Tensor exp(const Tensor& x);
/// Natural log of x clamped to [lo, hi]; the gradient is zero where clamping
/// is active.
Tensor log_clamped(const Tensor& x, double lo, double hi);
Tensor sqrt(const Tensor& x);
/// ln(1 + e^x), evaluated as x + ln(1 + e^-x) for x > 0.
Tensor softplus(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double negative_slope = 0.2);

// Reductions to a rank-0 tensor.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor l1_norm(const Tensor& x);
Tensor frobenius_norm(const Tensor& x);
Tensor max_all(const Tensor& x);
Tensor min_all(const Tensor& x);

/// Reductions of a rank-2 tensor along `axis`; the reduced axis is dropped.
Tensor sum_axis(const Tensor& x, std::size_t axis);
Tensor max_axis(const Tensor& x, std::size_t axis);

/// Softmax along any axis, computed with max subtraction.
Tensor softmax_axis(const Tensor& x, std::size_t axis);
Tensor log_softmax_axis(const Tensor& x, std::size_t axis);

// Linear algebra on rank-2 tensors.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
/// x [n, in] times w [out, in] transposed plus bias [out] -> [n, out].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
/// Columns of x [D, n] scaled to unit Euclidean norm (norm floored at eps).
Tensor normalize_columns(const Tensor& x, double eps = 1e-8);
/// Diagonal of a square matrix.
Tensor diagonal(const Tensor& x);

// Shape manipulation.
Tensor reshape(const Tensor& x, Shape shape);
/// Concatenation along axis 0 (the channel axis). Trailing extents must match.
Tensor concat(const std::vector<Tensor>& parts);
/// Stacks equally shaped tensors along a new leading axis.
Tensor stack(const std::vector<Tensor>& parts);
/// Columns [begin, end) of a rank-2 tensor.
Tensor slice_columns(const Tensor& x, std::size_t begin, std::size_t end);
/// Rank-2 x [n, t] widened with zero columns to [n, width].
Tensor pad_columns(const Tensor& x, std::size_t width);

/// Rows `ids` of `table` [V, D], laid out as columns of a [D, ids.size()]
/// tensor. Throws IndexError for an id outside the table.
Tensor embedding(const Tensor& table, std::span<const std::size_t> ids);

/// x [C, N] times a per-column weight m with N entries (any shape), i.e. the
/// mask broadcast across channels.
Tensor mul_channelwise(const Tensor& x, const Tensor& m);

// Convolution family on [C, H, W].
/// 3x3 convolution, stride 1, zero "same" padding. w is [out, in, 3, 3],
/// b is [out].
Tensor conv3x3(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor upsample_nearest2x(const Tensor& x);
Tensor avg_pool2x2(const Tensor& x);

/// Operator sugar over the named functions.
inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double c, const Tensor& x) { return scale(x, c); }
inline Tensor operator*(const Tensor& x, double c) { return scale(x, c); }

namespace fault_injection {
/// Fault-injection switch for gradient-check self tests: when set, the
/// softplus backward pass flips the sign of its gradient.
void set_softplus_backward_sign_flip(bool on);
bool softplus_backward_sign_flip();
}  // namespace fault_injection

}  // namespace alrgan
