#include "alrgan/lvr.hpp"

#include "alrgan/errors.hpp"
#include "alrgan/ops.hpp"

namespace alrgan {

namespace {

Tensor as_matrix(const Tensor& f) {
  if (f.rank() == 2) return f;
  if (f.rank() == 3) return reshape(f, {f.dim(0), f.dim(1) * f.dim(2)});
  throw DimensionError("expected a [D, N] or [D, h, w] feature, got " + to_string(f.shape()));
}

void check_pair(const char* op, const Tensor& h, const Tensor& h_star) {
  if (h.size() != h_star.size() || h.dim(0) != h_star.dim(0)) {
    throw DimensionError(std::string(op) + ": feature shapes differ, " + to_string(h.shape()) + " vs " +
                         to_string(h_star.shape()));
  }
}

double nd_of(const Tensor& h) { return static_cast<double>(h.size()); }

}  // namespace

Tensor pr_loss(const LayoutMask& mask, const Tensor& h, const LayoutMask& mask_star, const Tensor& h_star) {
  check_pair("pr_loss", h, h_star);
  Tensor diff = sub(mul_channelwise(as_matrix(h), mask.mask), mul_channelwise(as_matrix(h_star), mask_star.mask));
  return scale(frobenius_norm(diff), 1.0 / nd_of(h));
}

Tensor gram_matrix(const Tensor& f) {
  Tensor m = as_matrix(f);
  return matmul(m, transpose(m));
}

Tensor sr_loss(const LayoutMask& mask, const Tensor& h, const LayoutMask& mask_star, const Tensor& h_star) {
  check_pair("sr_loss", h, h_star);
  Tensor g = gram_matrix(mul_channelwise(as_matrix(h), mask.mask));
  Tensor g_star = gram_matrix(mul_channelwise(as_matrix(h_star), mask_star.mask));
  return scale(frobenius_norm(sub(g, g_star)), 1.0 / nd_of(h));
}

Tensor lvr_loss(const LvrWeights& weights, const Tensor& pr, const Tensor& sr) {
  if (weights.eta1 < 0 || weights.eta2 < 0) throw ConfigError("lvr_loss: eta weights must be non-negative");
  return add(scale(pr, weights.eta1), scale(sr, weights.eta2));
}

Tensor lvr_loss(const LvrWeights& weights, const LayoutMask& mask, const Tensor& h, const LayoutMask& mask_star,
                const Tensor& h_star) {
  return lvr_loss(weights, pr_loss(mask, h, mask_star, h_star), sr_loss(mask, h, mask_star, h_star));
}

}  // namespace alrgan
