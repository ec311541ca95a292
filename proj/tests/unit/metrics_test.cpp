#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "alrgan/errors.hpp"
#include "alrgan/metrics.hpp"
#include "alrgan/ops.hpp"
#include "alrgan/synth.hpp"
#include "test_util.hpp"

using namespace alrgan;
using namespace alrgan::metrics;

namespace {

GaussianStats scalar_stats(double mu, double var) {
  return {Eigen::VectorXd::Constant(1, mu), Eigen::MatrixXd::Constant(1, 1, var)};
}

GaussianStats random_stats(Rng& rng, int d) {
  Eigen::MatrixXd a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = rng.normal();
  Eigen::VectorXd mu(d);
  for (int i = 0; i < d; ++i) mu[i] = rng.normal();
  return {mu, a * a.transpose() + 0.1 * Eigen::MatrixXd::Identity(d, d)};
}

// Coupled Newton-Schulz iteration for the principal square root of a matrix
// with positive spectrum; independent of any eigendecomposition.
Eigen::MatrixXd newton_schulz_sqrt(const Eigen::MatrixXd& a) {
  const double norm = a.norm();
  const auto d = a.rows();
  Eigen::MatrixXd y = a / norm, z = Eigen::MatrixXd::Identity(d, d);
  for (int it = 0; it < 200; ++it) {
    Eigen::MatrixXd t = 0.5 * (3.0 * Eigen::MatrixXd::Identity(d, d) - z * y);
    y = y * t;
    z = t * z;
  }
  return y * std::sqrt(norm);
}

double fid_oracle(const GaussianStats& a, const GaussianStats& b) {
  return (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() -
         2.0 * newton_schulz_sqrt(a.cov * b.cov).trace();
}

std::vector<double> random_unit(Rng& rng, std::size_t d) {
  std::vector<double> v(d);
  double n = 0;
  for (double& x : v) n += (x = rng.normal()) * x;
  for (double& x : v) x /= std::sqrt(n);
  return v;
}

}  // namespace

TEST(Fid, IdenticalStatsGiveZero) {
  Rng rng(1);
  GaussianStats a = random_stats(rng, 4);
  EXPECT_NEAR(fid(a, a), 0.0, 1e-9);
}

TEST(Fid, ScalarClosedForms) {
  EXPECT_NEAR(fid(scalar_stats(0, 1), scalar_stats(1, 1)), 1.0, 1e-9);
  EXPECT_NEAR(fid(scalar_stats(0, 1), scalar_stats(0, 4)), 1.0, 1e-9);
}

TEST(FidProperty, SymmetricAndNonNegative) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    GaussianStats a = random_stats(rng, 5), b = random_stats(rng, 5);
    const double ab = fid(a, b), ba = fid(b, a);
    ASSERT_NEAR(ab, ba, 1e-9);
    ASSERT_GE(ab, -1e-9);
  }
}

TEST(FidProperty, EigenSqrtAgreesWithNewtonSchulz) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    GaussianStats a = random_stats(rng, 3), b = random_stats(rng, 3);
    ASSERT_NEAR(fid(a, b), fid_oracle(a, b), 1e-6) << "trial " << trial;
  }
}

TEST(Fid, ErrorsAreTyped) {
  Rng rng(4);
  GaussianStats a = random_stats(rng, 3), b = random_stats(rng, 2);
  EXPECT_THROW(fid(a, b), DimensionError);
  GaussianStats bad = a;
  bad.cov = -a.cov;
  EXPECT_THROW(fid(a, bad), DataError);
}

TEST(SqrtPsd, ClampsTinyNegativeEigenvalues) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2, 2);
  m(0, 0) = 4.0;
  m(1, 1) = -1e-10;
  Eigen::MatrixXd r = sqrt_psd(m);
  EXPECT_NEAR(r(0, 0), 2.0, 1e-12);
  EXPECT_EQ(r(1, 1), 0.0);
}

TEST(StatsAccumulator, UnbiasedCovarianceByHand) {
  Tensor x = Tensor::from({3, 2}, {1, 2, 3, 6, 5, 4});
  GaussianStats s = gaussian_stats(x);
  EXPECT_NEAR(s.mean[0], 3.0, 1e-15);
  EXPECT_NEAR(s.mean[1], 4.0, 1e-15);
  EXPECT_NEAR(s.cov(0, 0), 4.0, 1e-12);  // (4 + 0 + 4) / 2
  EXPECT_NEAR(s.cov(1, 1), 4.0, 1e-12);
  EXPECT_NEAR(s.cov(0, 1), 2.0, 1e-12);  // (4 + 0 + 0) / 2
}

TEST(StatsAccumulator, RequiresMoreSamplesThanDimensions) {
  EXPECT_THROW(gaussian_stats(Tensor::from({2, 2}, {1, 2, 3, 4})), DataError);
  StatsAccumulator acc(3);
  EXPECT_THROW(acc.add(std::vector<double>{1, 2}), DimensionError);
}

TEST(StatsAccumulatorProperty, MergeEqualsSinglePass) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 1 + rng.below(5), n1 = 1 + rng.below(20), n2 = rng.below(20);
    StatsAccumulator all(d), left(d), right(d);
    for (std::size_t i = 0; i < n1 + n2 + d + 1; ++i) {
      std::vector<double> row(d);
      for (double& v : row) v = 3.0 + rng.normal();
      all.add(row);
      (i < n1 ? left : right).add(row);
    }
    left.merge(right);
    GaussianStats a = all.stats(), b = left.stats();
    ASSERT_EQ(left.count(), all.count());
    ASSERT_LT((a.mean - b.mean).cwiseAbs().maxCoeff(), 1e-12);
    ASSERT_LT((a.cov - b.cov).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(InceptionScore, UniformRowsGiveOne) {
  EXPECT_NEAR(inception_score(Tensor::full({7, 5}, 0.2)), 1.0, 1e-9);
}

TEST(InceptionScore, BalancedOneHotGivesClassCount) {
  const std::size_t c = 6;
  Tensor p = Tensor::zeros({c, c});
  for (std::size_t i = 0; i < c; ++i) p.mutable_data()[i * c + i] = 1.0;
  EXPECT_NEAR(inception_score(p), 6.0, 1e-6);
}

TEST(InceptionScore, TwoRowHandComputation) {
  // KL([1,0] || [.75,.25]) = ln(4/3); KL([.5,.5] || [.75,.25]) = .5 ln(2/3) + .5 ln 2.
  const double kl1 = std::log(4.0 / 3.0), kl2 = 0.5 * std::log(2.0 / 3.0) + 0.5 * std::log(2.0);
  const double is = inception_score(Tensor::from({2, 2}, {1, 0, 0.5, 0.5}));
  EXPECT_NEAR(is, std::exp(0.5 * (kl1 + kl2)), 1e-12);
  EXPECT_NEAR(is, 1.24081, 1e-5);
}

TEST(InceptionScore, RejectsNonDistributions) {
  EXPECT_THROW(inception_score(Tensor::from({1, 2}, {0.5, 0.6})), DataError);
  EXPECT_THROW(inception_score(Tensor::from({1, 2}, {1.5, -0.5})), DataError);
}

TEST(InceptionScoreProperty, BoundedByOneAndClassCount) {
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(20), c = 1 + rng.below(8);
    SemMatrix cols = test::random_theta(rng, c, n, rng.uniform(0.1, 6.0));
    const double is = inception_score(transpose(cols.theta));
    ASSERT_GE(is, 1.0 - 1e-12);
    ASSERT_LE(is, static_cast<double>(c) + 1e-9);
  }
}

TEST(RPrecision, ExactMatchWithOrthogonalNegatives) {
  std::vector<RetrievalTrial> trials;
  for (std::size_t i = 0; i < 4; ++i) {
    RetrievalTrial t;
    t.query.assign(4, 0.0);
    t.query[i] = 1.0;
    for (std::size_t k = 0; k < 4; ++k) {
      std::vector<double> c(4, 0.0);
      c[k] = 1.0;
      t.candidates.push_back(c);
    }
    t.truth = i;
    trials.push_back(t);
  }
  EXPECT_DOUBLE_EQ(r_precision(trials), 100.0);
}

TEST(RPrecision, IdenticalCandidatesTieToLowestIndex) {
  std::vector<RetrievalTrial> trials;
  for (std::size_t i = 0; i < 8; ++i) trials.push_back({{1, 0}, {{1, 1}, {1, 1}, {1, 1}}, i % 3});
  // Truth sits at index 0 in trials 0, 3, 6.
  EXPECT_DOUBLE_EQ(r_precision(trials), 100.0 * 3 / 8);
}

TEST(RPrecision, ChanceLevelForRandomEmbeddings) {
  Rng rng(7);
  const std::size_t n = 10000, d = 16;
  std::vector<double> q, c;
  for (std::size_t i = 0; i < n; ++i) {
    auto a = random_unit(rng, d), b = random_unit(rng, d);
    q.insert(q.end(), a.begin(), a.end());
    c.insert(c.end(), b.begin(), b.end());
  }
  std::vector<std::size_t> truth(n);
  for (std::size_t i = 0; i < n; ++i) truth[i] = i;
  const double score = r_precision(Tensor::from({n, d}, q), Tensor::from({n, d}, c), truth, 100, rng);
  EXPECT_NEAR(score, 1.0, 1.0);
}

TEST(RPrecision, PoolSmallerThanRIsConfigError) {
  Rng rng(8);
  std::vector<std::size_t> truth{0, 1};
  EXPECT_THROW(r_precision(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}), truth, 3, rng), ConfigError);
}

TEST(LayoutAgreement, Examples) {
  Rng rng(9);
  SemMatrix a = test::random_theta(rng, 3, 6);
  EXPECT_EQ(layout_agreement(a, a), 1.0);

  SemMatrix first{Tensor::from({2, 4}, {0.9, 0.9, 0.9, 0.9, 0.1, 0.1, 0.1, 0.1}), GridDims{2, 2}};
  SemMatrix second{Tensor::from({2, 4}, {0.2, 0.2, 0.2, 0.2, 0.8, 0.8, 0.8, 0.8}), GridDims{2, 2}};
  EXPECT_EQ(layout_agreement(first, second), 0.0);

  SemMatrix half{Tensor::from({2, 4}, {0.9, 0.9, 0.1, 0.1, 0.1, 0.1, 0.9, 0.9}), GridDims{2, 2}};
  EXPECT_EQ(layout_agreement(half, first), 0.5);
}

TEST(LayoutAgreement, OracleTiesAcceptAnyMaximalWord) {
  // Oracle ties words 0 and 1; the model prefers word 1.
  SemMatrix oracle{Tensor::from({3, 1}, {0.45, 0.45, 0.1}), GridDims{1, 1}};
  SemMatrix model{Tensor::from({3, 1}, {0.2, 0.7, 0.1}), GridDims{1, 1}};
  EXPECT_EQ(layout_agreement(model, oracle), 1.0);
  SemMatrix wrong{Tensor::from({3, 1}, {0.2, 0.1, 0.7}), GridDims{1, 1}};
  EXPECT_EQ(layout_agreement(wrong, oracle), 0.0);
}

TEST(LayoutAgreement, ShapeMismatchThrows) {
  Rng rng(10);
  EXPECT_THROW(layout_agreement(test::random_theta(rng, 3, 4), test::random_theta(rng, 3, 5)), DimensionError);
}

TEST(LayoutAgreementProperty, InvariantUnderScoreRescaling) {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor w = rng.normal_tensor({5, 4}), h = rng.normal_tensor({5, 9});
    SemMatrix oracle = test::random_theta(rng, 4, 9);
    oracle.grid = GridDims{3, 3};
    const double base = layout_agreement(compute_ssm(w, h, GridDims{3, 3}), oracle);
    const double c = rng.uniform(0.05, 20.0);
    ASSERT_EQ(layout_agreement(compute_ssm(scale(w, c), h, GridDims{3, 3}), oracle), base);
  }
}

TEST(ToyFeatures, DeterministicAndSized) {
  ToyFeatureExtractor a(7), b(7), c(8);
  Tensor img = synth::render(synth::sample_scene(5), 3).images[2];
  EXPECT_EQ(a.features(img).size(), 16u);
  EXPECT_EQ(a.features(img), b.features(img));
  EXPECT_NE(a.features(img), c.features(img));
  EXPECT_THROW(a.features(Tensor::zeros({3, 6, 6})), DimensionError);
}

TEST(ToyColorPosterior, DominantColourWins) {
  synth::SceneSpec spec{{{synth::ShapeKind::square, synth::Color::blue, 4}}, synth::Background::plain};
  std::vector<double> p = toy_color_posterior(synth::render(spec, 1, 32).images[0]);
  double total = 0;
  for (double v : p) total += v;
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_GT(p[2], 0.5);
}
