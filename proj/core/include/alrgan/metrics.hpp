#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "alrgan/random.hpp"
#include "alrgan/ssm.hpp"
#include "alrgan/tensor.hpp"

namespace alrgan::metrics {

struct GaussianStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Streaming mean/covariance (Welford form). Two accumulators over disjoint
/// batches can be merged; the result equals a single pass over both.
class StatsAccumulator {
 public:
  explicit StatsAccumulator(std::size_t dim);

  void add(std::span<const double> row);
  void merge(const StatsAccumulator& other);

  std::size_t count() const { return n_; }
  std::size_t dim() const { return static_cast<std::size_t>(mean_.size()); }
  /// Unbiased (n - 1) covariance. Throws DataError when n < dim + 1.
  GaussianStats stats() const;

 private:
  std::size_t n_ = 0;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd m2_;
};

/// Rows of `samples` [n, d] as observations.
GaussianStats gaussian_stats(const Tensor& samples);

/// Square root of a symmetric PSD matrix by eigendecomposition. Eigenvalues
/// in [-tol, 0) are clamped to zero; anything more negative is a DataError.
Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m, double tol = 1e-8);

/// |mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2)). The trace term is
/// evaluated through the symmetric form S_a^(1/2) S_b S_a^(1/2).
double fid(const GaussianStats& a, const GaussianStats& b);

/// exp(mean_n KL(p(y|x_n) || p(y))) for row-distributions [n, C].
double inception_score(const Tensor& probs);

/// One retrieval trial: the query, its candidate pool and the index of the
/// matching candidate.
struct RetrievalTrial {
  std::vector<double> query;
  std::vector<std::vector<double>> candidates;
  std::size_t truth = 0;
};

/// Percentage of trials whose true candidate has the highest cosine
/// similarity; ties go to the lowest candidate index.
double r_precision(std::span<const RetrievalTrial> trials);

/// Builds one trial per query: the true candidate `truth[i]` plus r - 1
/// others drawn without replacement, shuffled. Throws ConfigError when r
/// exceeds the candidate pool.
double r_precision(const Tensor& queries, const Tensor& candidates, std::span<const std::size_t> truth,
                   std::size_t r, Rng& rng);

/// Fraction of subregions whose argmax word under `theta` is one of the
/// maximal words of `oracle`. With a unique oracle maximum this is plain
/// argmax agreement.
double layout_agreement(const SemMatrix& theta, const SemMatrix& oracle);

/// Fixed random-weight convolutional feature map used for toy-FID. Images
/// are [3, s, s] with s a multiple of 4.
class ToyFeatureExtractor {
 public:
  explicit ToyFeatureExtractor(std::uint64_t seed = 7, std::size_t width = 16);

  std::vector<double> features(const Tensor& image) const;
  std::size_t dim() const { return width_; }

 private:
  std::size_t width_;
  Tensor w1_, b1_, w2_, b2_;
};

/// Toy class posterior over the four palette colours: the (add-half smoothed)
/// share of palette-coloured pixels matching each colour. Used for the
/// desk-scale inception score.
std::vector<double> toy_color_posterior(const Tensor& image);

}  // namespace alrgan::metrics
