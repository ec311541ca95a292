#pragma once

#include "alrgan/ssm.hpp"
#include "alrgan/tensor.hpp"

namespace alrgan {

struct LvrWeights {
  double eta1 = 1.0;
  double eta2 = 1.0;
};

/// |mask (.) H - mask* (.) H*|_F / (N D), masks broadcast over channels.
/// Features are [D, N] or [D, h, w].
Tensor pr_loss(const LayoutMask& mask, const Tensor& h, const LayoutMask& mask_star, const Tensor& h_star);

/// F F^T for a [D, N] (or [D, h, w]) feature.
Tensor gram_matrix(const Tensor& f);

/// |G(mask (.) H) - G(mask* (.) H*)|_F / (N D). The Gram matrices themselves
/// are not normalised.
Tensor sr_loss(const LayoutMask& mask, const Tensor& h, const LayoutMask& mask_star, const Tensor& h_star);

Tensor lvr_loss(const LvrWeights& weights, const Tensor& pr, const Tensor& sr);
Tensor lvr_loss(const LvrWeights& weights, const LayoutMask& mask, const Tensor& h, const LayoutMask& mask_star,
                const Tensor& h_star);

}  // namespace alrgan
