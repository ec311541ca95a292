#include "alrgan/alr.hpp"

#include <cmath>
#include <string>

#include "alrgan/errors.hpp"
#include "alrgan/ops.hpp"

namespace alrgan {

ResidualSplit split_residual(const SemMatrix& theta, const SemMatrix& theta_star, double gamma) {
  if (theta.theta.shape() != theta_star.theta.shape()) {
    throw DimensionError("split_residual: shape mismatch " + to_string(theta.theta.shape()) + " vs " +
                         to_string(theta_star.theta.shape()));
  }
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw ConfigError("split_residual: gamma must lie in [0, 1], got " + std::to_string(gamma));
  }
  Tensor r = transpose(abs(sub(theta_star.theta, theta.theta)));
  std::vector<double> easy_mask(r.size()), hard_mask(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    const bool hard = r[i] >= gamma;
    hard_mask[i] = hard ? 1.0 : 0.0;
    easy_mask[i] = hard ? 0.0 : 1.0;
  }
  Tensor easy = mul(r, Tensor::from(r.shape(), std::move(easy_mask)));
  Tensor hard = mul(r, Tensor::from(r.shape(), std::move(hard_mask)));
  return {r, easy, hard, gamma};
}

Tensor pad_to_feature_space(const Tensor& x, std::size_t d) {
  if (x.rank() != 2) throw DimensionError("pad_to_feature_space: expected [N, T], got " + to_string(x.shape()));
  if (d < x.dim(1)) {
    throw DimensionError("pad_to_feature_space: feature width " + std::to_string(d) + " is smaller than " +
                         to_string(x.shape()));
  }
  return pad_columns(x, d);
}

WeightNet WeightNet::create(std::size_t feature_dim, std::size_t word_count, Rng& rng) {
  const std::size_t hidden = (feature_dim + 1) / 2;
  const double bound = 1.0 / std::sqrt(static_cast<double>(feature_dim));
  WeightNet net;
  net.w1 = rng.uniform_tensor({hidden, feature_dim}, -bound, bound);
  net.b1 = rng.uniform_tensor({hidden}, -bound, bound);
  net.w2 = Tensor::zeros({word_count, hidden});
  net.b2 = Tensor::zeros({word_count});
  for (auto* t : {&net.w1, &net.b1, &net.w2, &net.b2}) t->set_requires_grad(true);
  return net;
}

Tensor weight_forward(const WeightNet& net, const Tensor& part, const Tensor& h_star) {
  const std::size_t d = h_star.dim(0);
  const std::size_t n = h_star.size() / d;
  if (part.rank() != 2 || part.dim(0) != n) {
    throw DimensionError("weight_forward: residual part " + to_string(part.shape()) + " does not match feature " +
                         to_string(h_star.shape()));
  }
  if (net.w1.dim(1) != d || net.w2.dim(0) != part.dim(1)) {
    throw DimensionError("weight_forward: net expects " + to_string(net.w1.shape()) + " / " +
                         to_string(net.w2.shape()) + " but got part " + to_string(part.shape()) + " and feature " +
                         to_string(h_star.shape()));
  }
  Tensor cells = transpose(h_star.rank() == 2 ? h_star : reshape(h_star, {d, n}));
  Tensor x = mul(pad_to_feature_space(part, d), cells);
  Tensor hidden = leaky_relu(linear(x, net.w1, net.b1), 0.2);
  return softplus(linear(hidden, net.w2, net.b2));
}

AlrTerms alr_terms(const ResidualSplit& split, const Tensor& alpha, const Tensor& beta, std::size_t d) {
  if (alpha.shape() != split.r.shape() || beta.shape() != split.r.shape()) {
    throw DimensionError("alr_loss: weights " + to_string(alpha.shape()) + " / " + to_string(beta.shape()) +
                         " do not match residual " + to_string(split.r.shape()));
  }
  const double nd = static_cast<double>(split.r.dim(0) * d);
  AlrTerms t;
  t.easy = frobenius_norm(mul(alpha, split.easy));
  t.hard = frobenius_norm(mul(beta, split.hard));
  // A scalar's Frobenius norm is its absolute value.
  t.order = frobenius_norm(softplus(sub(max_all(alpha), min_all(beta))));
  t.total = scale(add(add(t.easy, t.hard), t.order), 1.0 / nd);
  return t;
}

Tensor alr_loss(const ResidualSplit& split, const Tensor& alpha, const Tensor& beta, std::size_t d) {
  return alr_terms(split, alpha, beta, d).total;
}

Tensor fixed_alr_loss(const SemMatrix& theta, const SemMatrix& theta_star, std::size_t d) {
  if (theta.theta.shape() != theta_star.theta.shape()) {
    throw DimensionError("fixed_alr_loss: shape mismatch " + to_string(theta.theta.shape()) + " vs " +
                         to_string(theta_star.theta.shape()));
  }
  const double nd = static_cast<double>(theta.subregions() * d);
  return scale(frobenius_norm(sub(theta.theta, theta_star.theta)), 1.0 / nd);
}

}  // namespace alrgan
