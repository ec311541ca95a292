#pragma once

#include <cstddef>
#include <vector>

#include "alrgan/tensor.hpp"

namespace alrgan {

/// Spatial extent of a feature grid; subregion k sits at row k / width,
/// column k % width.
struct GridDims {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t cells() const { return height * width; }
  bool operator==(const GridDims&) const = default;
};

/// Word-to-subregion similarity matrix: theta is [T, N] and every column is a
/// distribution over the T words for one subregion.
struct SemMatrix {
  Tensor theta;
  GridDims grid;

  std::size_t word_count() const { return theta.dim(0); }
  std::size_t subregions() const { return theta.dim(1); }
};

/// Per-subregion maximum of a SemMatrix column, laid out as [height, width].
struct LayoutMask {
  Tensor mask;
};

/// theta = softmax over words of W^T H. `words` is [D, T]; `features` is
/// [D, N] (grid given explicitly) or [D, h, w].
SemMatrix compute_ssm(const Tensor& words, const Tensor& features, GridDims grid);
SemMatrix compute_ssm(const Tensor& words, const Tensor& features);
/// As above with the softmax restricted to the words flagged in `active`
/// (e.g. the non-padding caption slots); the other rows of theta are zero.
/// Throws DataError when no word is active.
SemMatrix compute_ssm(const Tensor& words, const Tensor& features, const std::vector<bool>& active);

/// Text-vision matrix Q = W theta, [D, N]: column k is the theta-weighted
/// combination of the word vectors for subregion k.
Tensor compute_tvm(const SemMatrix& theta, const Tensor& words);

/// Column maxima of theta; gradient reaches the lowest-index maximiser.
LayoutMask layout_mask(const SemMatrix& theta);

}  // namespace alrgan
