#pragma once

#include <cstddef>
#include <vector>

#include "alrgan/random.hpp"
#include "alrgan/ssm.hpp"
#include "alrgan/tensor.hpp"

namespace alrgan {

/// |theta* - theta| laid out [N, T] and partitioned at gamma: entries below
/// gamma are easy, entries at or above gamma are hard. easy + hard == r
/// exactly and their supports are disjoint.
struct ResidualSplit {
  Tensor r;
  Tensor easy;
  Tensor hard;
  double gamma = 0.2;
};

/// Throws DimensionError on mismatched shapes and ConfigError for gamma
/// outside [0, 1]. Gradients flow through r to both matrices; the partition
/// itself is treated as constant.
ResidualSplit split_residual(const SemMatrix& theta, const SemMatrix& theta_star, double gamma);

/// [N, T] -> [N, d] with zero columns appended.
Tensor pad_to_feature_space(const Tensor& x, std::size_t d);

/// Per-subregion weight network shared across the N grid cells:
/// affine d -> ceil(d/2), leaky rectifier (0.2), affine -> T, softplus.
/// The output layer starts at zero, so a fresh net emits ln 2 everywhere.
struct WeightNet {
  Tensor w1, b1, w2, b2;

  static WeightNet create(std::size_t feature_dim, std::size_t word_count, Rng& rng);
  std::vector<Tensor> parameters() const { return {w1, b1, w2, b2}; }
};

/// phi(pad(part) (.) H*^T): positive [N, T] weights. `h_star` is [D, N] or
/// [D, h, w].
Tensor weight_forward(const WeightNet& net, const Tensor& part, const Tensor& h_star);

/// The three pieces of the adaptive loss before the 1/(N D) factor.
struct AlrTerms {
  Tensor easy;   // |alpha (.) R_easy|_F
  Tensor hard;   // |beta (.) R_hard|_F
  Tensor order;  // softplus(max alpha - min beta)
  Tensor total;  // (easy + hard + order) / (N D)
};

AlrTerms alr_terms(const ResidualSplit& split, const Tensor& alpha, const Tensor& beta, std::size_t d);
Tensor alr_loss(const ResidualSplit& split, const Tensor& alpha, const Tensor& beta, std::size_t d);

/// Fixed-weight ablation: |theta - theta*|_F / (N D).
Tensor fixed_alr_loss(const SemMatrix& theta, const SemMatrix& theta_star, std::size_t d);

}  // namespace alrgan
