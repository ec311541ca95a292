#include "alrgan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "alrgan/errors.hpp"
#include "alrgan/ops.hpp"

namespace alrgan::metrics {

StatsAccumulator::StatsAccumulator(std::size_t dim)
    : mean_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim))),
      m2_(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim))) {}

void StatsAccumulator::add(std::span<const double> row) {
  if (row.size() != dim()) {
    throw DimensionError("StatsAccumulator: row of " + std::to_string(row.size()) + " values, expected " +
                         std::to_string(dim()));
  }
  Eigen::Map<const Eigen::VectorXd> x(row.data(), static_cast<Eigen::Index>(row.size()));
  ++n_;
  const Eigen::VectorXd delta = x - mean_;
  mean_ += delta / static_cast<double>(n_);
  m2_ += delta * (x - mean_).transpose();
}

void StatsAccumulator::merge(const StatsAccumulator& other) {
  if (other.dim() != dim()) throw DimensionError("StatsAccumulator: merging different dimensions");
  if (other.n_ == 0) return;
  const double na = static_cast<double>(n_), nb = static_cast<double>(other.n_), n = na + nb;
  const Eigen::VectorXd delta = other.mean_ - mean_;
  m2_ += other.m2_ + delta * delta.transpose() * (na * nb / n);
  mean_ += delta * (nb / n);
  n_ += other.n_;
}

GaussianStats StatsAccumulator::stats() const {
  if (n_ < dim() + 1) {
    throw DataError("covariance needs at least d + 1 = " + std::to_string(dim() + 1) + " samples, got " +
                    std::to_string(n_));
  }
  Eigen::MatrixXd cov = m2_ / static_cast<double>(n_ - 1);
  return {mean_, 0.5 * (cov + cov.transpose())};
}

GaussianStats gaussian_stats(const Tensor& samples) {
  if (samples.rank() != 2) throw DimensionError("gaussian_stats: expected [n, d], got " + to_string(samples.shape()));
  const std::size_t n = samples.dim(0), d = samples.dim(1);
  StatsAccumulator acc(d);
  for (std::size_t i = 0; i < n; ++i) acc.add(samples.data().subspan(i * d, d));
  return acc.stats();
}

Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m, double tol) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (m + m.transpose()));
  if (eig.info() != Eigen::Success) throw NumericFault("sqrt_psd: eigendecomposition failed", "");
  Eigen::VectorXd values = eig.eigenvalues();
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (values[i] < -tol) {
      throw DataError("matrix is not positive semidefinite: eigenvalue " + std::to_string(values[i]));
    }
    values[i] = std::sqrt(std::max(values[i], 0.0));
  }
  return eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose();
}

double fid(const GaussianStats& a, const GaussianStats& b) {
  const auto d = a.mean.size();
  if (b.mean.size() != d || a.cov.rows() != d || a.cov.cols() != d || b.cov.rows() != d || b.cov.cols() != d) {
    throw DimensionError("fid: statistics of different dimension");
  }
  const Eigen::MatrixXd root_a = sqrt_psd(a.cov);
  sqrt_psd(b.cov);  // validates b
  const Eigen::MatrixXd inner = root_a * b.cov * root_a;
  const double cross = sqrt_psd(inner).trace();
  return (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * cross;
}

double inception_score(const Tensor& probs) {
  if (probs.rank() != 2) throw DimensionError("inception_score: expected [n, C], got " + to_string(probs.shape()));
  const std::size_t n = probs.dim(0), c = probs.dim(1);
  std::vector<double> marginal(c, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double total = 0;
    for (std::size_t j = 0; j < c; ++j) {
      const double p = probs[i * c + j];
      if (!(p >= 0.0) || p > 1.0) throw DataError("inception_score: row " + std::to_string(i) + " is not a distribution");
      total += p;
      marginal[j] += p / static_cast<double>(n);
    }
    if (std::abs(total - 1.0) > 1e-6) {
      throw DataError("inception_score: row " + std::to_string(i) + " sums to " + std::to_string(total));
    }
  }
  double kl_sum = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      const double p = probs[i * c + j];
      if (p > 0) kl_sum += p * (std::log(p) - std::log(marginal[j]));
    }
  return std::exp(kl_sum / static_cast<double>(n));
}

namespace {

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("r_precision: embedding sizes differ");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(na) * std::sqrt(nb);
  return denom > 0 ? dot / denom : 0.0;
}

}  // namespace

double r_precision(std::span<const RetrievalTrial> trials) {
  if (trials.empty()) throw ConfigError("r_precision: no trials");
  std::size_t hits = 0;
  for (const RetrievalTrial& t : trials) {
    if (t.truth >= t.candidates.size()) throw ConfigError("r_precision: truth index outside the candidate pool");
    std::size_t best = 0;
    double best_sim = cosine(t.query, t.candidates[0]);
    for (std::size_t k = 1; k < t.candidates.size(); ++k) {
      const double s = cosine(t.query, t.candidates[k]);
      if (s > best_sim) best_sim = s, best = k;
    }
    if (best == t.truth) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(trials.size());
}

double r_precision(const Tensor& queries, const Tensor& candidates, std::span<const std::size_t> truth, std::size_t r,
                   Rng& rng) {
  if (queries.rank() != 2 || candidates.rank() != 2 || queries.dim(1) != candidates.dim(1)) {
    throw DimensionError("r_precision: embeddings " + to_string(queries.shape()) + " vs " +
                         to_string(candidates.shape()));
  }
  const std::size_t n = queries.dim(0), pool = candidates.dim(0), d = queries.dim(1);
  if (truth.size() != n) throw DimensionError("r_precision: one truth index per query required");
  if (r == 0 || r > pool) {
    throw ConfigError("r_precision: R = " + std::to_string(r) + " exceeds the candidate pool of " + std::to_string(pool));
  }
  auto row = [d](const Tensor& t, std::size_t i) { return t.data().subspan(i * d, d); };
  std::size_t hits = 0;
  std::vector<std::size_t> others;
  for (std::size_t i = 0; i < n; ++i) {
    if (truth[i] >= pool) throw ConfigError("r_precision: truth index outside the candidate pool");
    others.resize(pool);
    std::iota(others.begin(), others.end(), 0);
    std::swap(others[truth[i]], others.back());
    others.pop_back();
    // Partial Fisher-Yates: the first r - 1 entries become the negatives.
    for (std::size_t k = 0; k + 1 < r; ++k) std::swap(others[k], others[k + rng.below(others.size() - k)]);
    others.resize(r - 1);
    others.push_back(truth[i]);
    for (std::size_t k = others.size() - 1; k > 0; --k) std::swap(others[k], others[rng.below(k + 1)]);
    std::size_t best = 0;
    double best_sim = cosine(row(queries, i), row(candidates, others[0]));
    for (std::size_t k = 1; k < others.size(); ++k) {
      const double sim = cosine(row(queries, i), row(candidates, others[k]));
      if (sim > best_sim) best_sim = sim, best = k;
    }
    if (others[best] == truth[i]) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(n);
}

double layout_agreement(const SemMatrix& theta, const SemMatrix& oracle) {
  if (theta.theta.shape() != oracle.theta.shape()) {
    throw DimensionError("layout_agreement: " + to_string(theta.theta.shape()) + " vs " +
                         to_string(oracle.theta.shape()));
  }
  const std::size_t t = theta.word_count(), n = theta.subregions();
  std::size_t hits = 0;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t best = 0;
    double oracle_max = oracle.theta[k];
    for (std::size_t j = 1; j < t; ++j) {
      if (theta.theta[j * n + k] > theta.theta[best * n + k]) best = j;
      oracle_max = std::max(oracle_max, oracle.theta[j * n + k]);
    }
    if (oracle.theta[best * n + k] == oracle_max) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

ToyFeatureExtractor::ToyFeatureExtractor(std::uint64_t seed, std::size_t width) : width_(width) {
  Rng rng(seed);
  const std::size_t hidden = 8;
  const double s1 = 1.0 / std::sqrt(27.0), s2 = 1.0 / std::sqrt(9.0 * hidden);
  w1_ = rng.uniform_tensor({hidden, 3, 3, 3}, -s1, s1);
  b1_ = rng.uniform_tensor({hidden}, -0.1, 0.1);
  w2_ = rng.uniform_tensor({width, hidden, 3, 3}, -s2, s2);
  b2_ = rng.uniform_tensor({width}, -0.1, 0.1);
}

std::vector<double> ToyFeatureExtractor::features(const Tensor& image) const {
  if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) % 4 || image.dim(2) % 4) {
    throw DimensionError("toy feature extractor expects [3, 4k, 4k], got " + to_string(image.shape()));
  }
  Tensor x = avg_pool2x2(leaky_relu(conv3x3(image.detach(), w1_, b1_), 0.2));
  x = avg_pool2x2(leaky_relu(conv3x3(x, w2_, b2_), 0.2));
  const std::size_t cells = x.dim(1) * x.dim(2);
  std::vector<double> out(width_, 0.0);
  for (std::size_t c = 0; c < width_; ++c)
    for (std::size_t i = 0; i < cells; ++i) out[c] += x[c * cells + i] / static_cast<double>(cells);
  return out;
}

std::vector<double> toy_color_posterior(const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) throw DimensionError("toy_color_posterior expects [3, h, w]");
  static constexpr double palette[4][3] = {{220, 40, 40}, {40, 200, 60}, {50, 80, 230}, {230, 210, 40}};
  const std::size_t px = image.dim(1) * image.dim(2);
  std::vector<double> score(4, 0.0);
  for (std::size_t p = 0; p < px; ++p) {
    for (std::size_t c = 0; c < 4; ++c) {
      double dist2 = 0;
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double v = (image[ch * px + p] + 1.0) * 127.5 - palette[c][ch];
        dist2 += v * v;
      }
      if (dist2 < 60.0 * 60.0) score[c] += 1.0;
    }
  }
  // Share of palette-coloured pixels, smoothed by half a pixel per class.
  double total = 0;
  for (double& v : score) total += v += 0.5;
  for (double& v : score) v /= total;
  return score;
}

}  // namespace alrgan::metrics
