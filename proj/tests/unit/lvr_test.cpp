#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "alrgan/errors.hpp"
#include "alrgan/grad_check.hpp"
#include "alrgan/lvr.hpp"
#include "alrgan/ops.hpp"
#include "test_util.hpp"

using namespace alrgan;
using alrgan::test::expect_values_near;

namespace {

LayoutMask constant_mask(std::size_t h, std::size_t w, double v) { return {Tensor::full({h, w}, v)}; }

// Columns of a [D, N] tensor reordered by `perm`.
Tensor permute_columns(const Tensor& x, const std::vector<std::size_t>& perm) {
  const std::size_t d = x.dim(0), n = x.dim(1);
  std::vector<double> out(d * n);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t k = 0; k < n; ++k) out[i * n + k] = x.data()[i * n + perm[k]];
  return Tensor::from({d, n}, out);
}

LayoutMask permute_mask(const LayoutMask& m, const std::vector<std::size_t>& perm) {
  std::vector<double> out(perm.size());
  for (std::size_t k = 0; k < perm.size(); ++k) out[k] = m.mask.data()[perm[k]];
  return {Tensor::from(m.mask.shape(), out)};
}

}  // namespace

TEST(PrLoss, IdenticalInputsGiveZero) {
  Rng rng(1);
  Tensor h = rng.normal_tensor({3, 4});
  LayoutMask m{rng.uniform_tensor({2, 2}, 0.1, 1)};
  EXPECT_EQ(pr_loss(m, h, m, h).item(), 0.0);
}

TEST(PrLoss, SingleEntryDifference) {
  Tensor h = Tensor::zeros({2, 2});
  Tensor h_star = Tensor::from({2, 2}, {0, 0, 2, 0});
  LayoutMask ones = constant_mask(1, 2, 1.0);
  EXPECT_DOUBLE_EQ(pr_loss(ones, h, ones, h_star).item(), 0.5);
}

TEST(PrLoss, ZeroMasksAnnihilate) {
  Rng rng(2);
  LayoutMask zero = constant_mask(2, 3, 0.0);
  EXPECT_EQ(pr_loss(zero, rng.normal_tensor({4, 6}), zero, rng.normal_tensor({4, 6})).item(), 0.0);
}

TEST(PrLoss, MaskBroadcastsAcrossChannels) {
  Tensor h = Tensor::from({2, 2}, {1, 1, 1, 1});
  LayoutMask m{Tensor::from({1, 2}, {0.5, 0.0})};
  LayoutMask zero = constant_mask(1, 2, 0.0);
  // Masked H = [[0.5, 0], [0.5, 0]].
  EXPECT_NEAR(pr_loss(m, h, zero, h).item(), std::sqrt(0.5) / 4.0, 1e-15);
}

TEST(PrLoss, ShapeMismatchThrows) {
  LayoutMask m = constant_mask(2, 2, 1.0);
  EXPECT_THROW(pr_loss(m, Tensor::zeros({3, 4}), m, Tensor::zeros({2, 4})), DimensionError);
  EXPECT_THROW(sr_loss(m, Tensor::zeros({3, 4}), m, Tensor::zeros({3, 5})), DimensionError);
}

TEST(GramMatrix, Examples) {
  expect_values_near(gram_matrix(Tensor::from({2, 2}, {1, 0, 0, 1})), {1, 0, 0, 1}, 0.0);
  Tensor zero_gram = gram_matrix(Tensor::zeros({3, 2}));
  for (double v : zero_gram.data()) EXPECT_EQ(v, 0.0);
  expect_values_near(gram_matrix(Tensor::from({2, 2}, {1, 1, 0, 1})), {2, 1, 1, 1}, 0.0);
  EXPECT_EQ(gram_matrix(Tensor::zeros({3, 2, 2})).shape(), (Shape{3, 3}));
}

TEST(GramMatrixProperty, SymmetricAndPositiveSemidefinite) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 1 + rng.below(6), n = 1 + rng.below(9);
    Tensor g = gram_matrix(rng.normal_tensor({d, n}));
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) ASSERT_EQ(g.data()[i * d + j], g.data()[j * d + i]);
    for (int probe = 0; probe < 20; ++probe) {
      std::vector<double> v(d);
      for (double& x : v) x = rng.normal();
      double q = 0;
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) q += v[i] * g.data()[i * d + j] * v[j];
      ASSERT_GE(q, -1e-12);
    }
  }
}

TEST(SrLoss, IdenticalMaskedFeaturesGiveZero) {
  Rng rng(4);
  Tensor h = rng.normal_tensor({3, 4});
  LayoutMask m{rng.uniform_tensor({2, 2}, 0.1, 1)};
  EXPECT_EQ(sr_loss(m, h, m, h).item(), 0.0);
}

TEST(SrLoss, QuadraticScaling) {
  Rng rng(5);
  Tensor h = rng.normal_tensor({3, 4});
  LayoutMask m{rng.uniform_tensor({2, 2}, 0.1, 1)};
  const double g_norm = frobenius_norm(gram_matrix(mul_channelwise(h, m.mask))).item();
  EXPECT_NEAR(sr_loss(m, h, m, scale(h, 2.0)).item(), 3.0 * g_norm / 12.0, 1e-12);
}

TEST(SrLossProperty, PermutationInvariantUnlikePr) {
  Rng rng(6);
  int pr_changed = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = 2 + rng.below(4);
    Tensor h = rng.normal_tensor({d, 9});
    LayoutMask m{rng.uniform_tensor({3, 3}, 0.1, 1)};
    std::vector<std::size_t> perm(9);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng.engine());
    if (std::is_sorted(perm.begin(), perm.end())) std::swap(perm[0], perm[1]);
    Tensor hp = permute_columns(h, perm);
    LayoutMask mp = permute_mask(m, perm);
    ASSERT_NEAR(sr_loss(m, h, mp, hp).item(), 0.0, 1e-12);
    if (pr_loss(m, h, mp, hp).item() > 1e-6) ++pr_changed;
  }
  EXPECT_EQ(pr_changed, 50);
}

TEST(LvrProperty, SelfDistanceIsZero) {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor h = rng.normal_tensor({1 + rng.below(5), 2, 3});
    LayoutMask m{rng.uniform_tensor({2, 3}, 0, 1)};
    ASSERT_EQ(pr_loss(m, h, m, h).item(), 0.0);
    ASSERT_EQ(sr_loss(m, h, m, h).item(), 0.0);
  }
}

TEST(LvrLoss, LinearCombination) {
  EXPECT_EQ(lvr_loss({0.0, 0.0}, Tensor::scalar(0.7), Tensor::scalar(0.2)).item(), 0.0);
  EXPECT_DOUBLE_EQ(lvr_loss({1.0, 1.0}, Tensor::scalar(0.5), Tensor::scalar(0.25)).item(), 0.75);
  EXPECT_DOUBLE_EQ(lvr_loss({0.1, 1.0}, Tensor::scalar(1.0), Tensor::scalar(0.0)).item(), 0.1);
  EXPECT_THROW(lvr_loss({-1.0, 1.0}, Tensor::scalar(1.0), Tensor::scalar(0.0)), ConfigError);
}

TEST(LvrLoss, GradientsReachFeaturesAndMaskSources) {
  Rng rng(8);
  Tensor w = test::random_param(rng, {4, 3});
  Tensor h = test::random_param(rng, {4, 2, 2});
  Tensor h_star = test::random_param(rng, {4, 2, 2});
  std::vector<Tensor> params{w, h, h_star};
  auto loss = [&] {
    LayoutMask m = layout_mask(compute_ssm(w, h));
    LayoutMask m_star = layout_mask(compute_ssm(w, h_star));
    return lvr_loss({1.0, 0.5}, m, h, m_star, h_star);
  };
  GradCheckReport report = grad_check_params(loss, params);
  EXPECT_LE(report.max_rel_err, 1e-4) << "tensor " << report.worst_tensor << " index " << report.worst_index;
}
