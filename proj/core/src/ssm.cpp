#include "alrgan/ssm.hpp"

#include <algorithm>
#include <cmath>

#include "alrgan/errors.hpp"
#include "alrgan/ops.hpp"

namespace alrgan {

namespace {

GridDims infer_grid(const Tensor& features) {
  if (features.rank() == 3) return {features.dim(1), features.dim(2)};
  if (features.rank() == 2) {
    const auto n = features.dim(1);
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
    if (side * side == n) return {side, side};
    throw DimensionError("compute_ssm: cannot infer a square grid from " + to_string(features.shape()));
  }
  throw DimensionError("compute_ssm: features must be [D, N] or [D, h, w], got " + to_string(features.shape()));
}

}  // namespace

namespace {

Tensor similarity_scores(const Tensor& words, const Tensor& features, GridDims grid) {
  if (words.rank() != 2) throw DimensionError("compute_ssm: words must be [D, T], got " + to_string(words.shape()));
  if (features.rank() < 2 || features.dim(0) != words.dim(0)) {
    throw DimensionError("compute_ssm: feature dimension mismatch, words " + to_string(words.shape()) +
                         " vs features " + to_string(features.shape()));
  }
  const std::size_t d = features.dim(0);
  const std::size_t n = features.size() / d;
  if (grid.cells() != n) {
    throw DimensionError("compute_ssm: grid " + std::to_string(grid.height) + "x" + std::to_string(grid.width) +
                         " does not tile " + to_string(features.shape()));
  }
  Tensor flat = features.rank() == 2 ? features : reshape(features, {d, n});
  return matmul(transpose(words), flat);
}

}  // namespace

SemMatrix compute_ssm(const Tensor& words, const Tensor& features, GridDims grid) {
  return {softmax_axis(similarity_scores(words, features, grid), 0), grid};
}

SemMatrix compute_ssm(const Tensor& words, const Tensor& features, const std::vector<bool>& active) {
  const GridDims grid = infer_grid(features);
  Tensor scores = similarity_scores(words, features, grid);
  const std::size_t t = scores.dim(0), n = scores.dim(1);
  if (active.size() != t) throw DimensionError("compute_ssm: word mask has the wrong length");
  std::vector<double> bias(t * n, 0.0);
  bool any = false;
  for (std::size_t j = 0; j < t; ++j) {
    any = any || active[j];
    if (!active[j]) std::fill(bias.begin() + j * n, bias.begin() + (j + 1) * n, -1e4);
  }
  if (!any) throw DataError("compute_ssm: no active word");
  return {softmax_axis(add(scores, Tensor::from({t, n}, std::move(bias))), 0), grid};
}

SemMatrix compute_ssm(const Tensor& words, const Tensor& features) {
  return compute_ssm(words, features, infer_grid(features));
}

Tensor compute_tvm(const SemMatrix& theta, const Tensor& words) {
  if (words.rank() != 2 || words.dim(1) != theta.word_count()) {
    throw DimensionError("compute_tvm: theta " + to_string(theta.theta.shape()) + " does not match words " +
                         to_string(words.shape()));
  }
  return matmul(words, theta.theta);
}

LayoutMask layout_mask(const SemMatrix& theta) {
  return {reshape(max_axis(theta.theta, 0), {theta.grid.height, theta.grid.width})};
}

}  // namespace alrgan
