#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "alrgan/alr.hpp"
#include "alrgan/config.hpp"
#include "alrgan/random.hpp"
#include "alrgan/ssm.hpp"
#include "alrgan/tensor.hpp"

namespace alrgan {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

/// 3x3 "same" convolution with bias.
struct ConvLayer {
  Tensor w, b;
  static ConvLayer create(std::size_t out, std::size_t in, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, NamedTensors& out) const;
};

/// Affine map on a vector: y = W x + b.
struct Dense {
  Tensor w, b;
  static Dense create(std::size_t out, std::size_t in, Rng& rng, double init_scale = 1.0);
  /// x has any shape with `in` elements; the result is [out].
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, NamedTensors& out) const;
};

// ---------------------------------------------------------------- text side

struct TextEncoder {
  Tensor table;  // [V, D]
  Dense project;  // D -> D_s
  static TextEncoder create(std::size_t vocab, std::size_t d, std::size_t d_s, Rng& rng);
};

struct TextEncoding {
  Tensor words;              // [D, T]
  Tensor sentence_raw;       // [D_s]
  std::vector<bool> active;  // false for padding slots (id 0)
};

/// Embedding lookup per token; the sentence is the projected mean word.
/// Throws VocabularyError for an id outside the table.
TextEncoding encode_text(const TextEncoder& encoder, std::span<const std::size_t> tokens);

struct CondAugment {
  Dense mu, logvar;
  static CondAugment create(std::size_t d_s, Rng& rng);
};

struct CondAugmentOutput {
  Tensor s, kl, mu, logvar;
};

/// Mean over dimensions of KL(N(mu, exp(logvar)) || N(0, 1)).
Tensor gaussian_kl(const Tensor& mu, const Tensor& logvar);

/// s = mu + sigma * eps with eps drawn from `rng`.
CondAugmentOutput conditioning_augment(const CondAugment& ca, const Tensor& s_raw, Rng& rng);

// ------------------------------------------------------------ image side

/// Affine (s, z) -> [D, base, base] followed by two residual conv blocks.
struct Iftm {
  Dense fc;
  ConvLayer r1a, r1b, r2a, r2b;
  std::size_t d = 0, base = 0;
  static Iftm create(std::size_t d_s, std::size_t d_z, std::size_t d, std::size_t base, Rng& rng);
};

Tensor iftm(const Iftm& module, const Tensor& s, const Tensor& z);

/// Generator stage. Stage 0 only uses `rgb`; stage i >= 1 fuses the
/// text-vision matrix with the previous feature, upsamples and refines.
struct GenStage {
  ConvLayer join, up, rgb;
};

/// Conv stack mapping a stage image [3, S, S] to [D, S/2, S/2], the grid of
/// the previous stage's feature.
struct RealEncoder {
  ConvLayer c1, c2;
  std::size_t side = 0;
  static RealEncoder create(std::size_t d, std::size_t side, Rng& rng);
  RealEncoder detached() const;
};

/// Throws DimensionError unless the image is [3, side, side].
Tensor encode_real_image(const RealEncoder& encoder, const Tensor& image);

/// Mean absolute error. Throws DimensionError on a shape mismatch.
Tensor rec_loss(const Tensor& image_star, const Tensor& image_rec);

struct Discriminator {
  std::vector<ConvLayer> convs;
  Dense uncond, cond_hidden, cond_out;
  std::size_t side = 0;
  static Discriminator create(std::size_t d, std::size_t d_s, std::size_t side, Rng& rng);
};

struct DiscriminatorOutput {
  Tensor uncond;  // probability, rank 0
  Tensor cond;
};

DiscriminatorOutput discriminate(const Discriminator& d, const Tensor& image, const Tensor& sentence);

// ---------------------------------------------------------------- losses

/// -1/2 E[log D(fake)] - 1/2 E[log D(fake, s)]; probabilities are clamped to
/// [1e-7, 1 - 1e-7] before the log. Inputs may hold any number of samples.
Tensor g_adv_loss(const Tensor& d_fake_uncond, const Tensor& d_fake_cond);
Tensor d_adv_loss(const Tensor& d_real_uncond, const Tensor& d_fake_uncond, const Tensor& d_real_cond,
                  const Tensor& d_fake_cond);

/// Symmetric cross-entropy over a [B, B] similarity matrix whose diagonal
/// holds the matching pairs, at temperature tau. Throws ConfigError for
/// B < 2 or tau <= 0.
Tensor contrastive_loss(const Tensor& scores, double tau);

/// Mean over non-padding words of cos(w_j, c_j), where c_j is the
/// attention-pooled region feature for word j (attention = softmax over
/// regions of sharpness * w_j^T F).
Tensor word_region_score(const Tensor& words, std::span<const std::size_t> tokens, const Tensor& regions,
                         double sharpness);

/// Mean over regions of cos(f_k, q_k), where q_k is the word combination
/// attended by region k (attention = softmax over non-padding words of
/// sharpness * w^T f_k).
Tensor region_word_score(const Tensor& words, std::span<const std::size_t> tokens, const Tensor& regions,
                         double sharpness);

/// contrastive_loss over all (caption b, image b') pairs, scored by the mean
/// of word_region_score and region_word_score.
Tensor matching_loss(std::span<const Tensor> region_features, std::span<const Tensor> words,
                     std::span<const std::vector<std::size_t>> tokens, double sharpness, double tau);

/// Per-stage pieces of the generator objective. Unused terms stay rank-0
/// zero tensors.
struct StageLosses {
  Tensor adv;
  Tensor alr;
  Tensor rec;
  Tensor lvr;
  Tensor pr;
  Tensor sr;
};

/// sum_i adv_i + sum_{i>=1}[alr_i + lambda1 rec_i + lvr_i] + lambda2 matching
/// + kl_weight kl, with each term present only when its flag is on.
Tensor total_g_loss(const GanConfig& cfg, std::span<const StageLosses> stages, const Tensor& matching,
                    const Tensor& kl);
Tensor total_d_loss(std::span<const Tensor> stage_d_losses);

// ------------------------------------------------------------- the model

struct Generator {
  TextEncoder text;
  CondAugment ca;
  Iftm init;
  std::vector<GenStage> stages;
  std::vector<RealEncoder> encoders;  // one per stage
  std::vector<WeightNet> alpha_nets;  // stages 1..m-1
  std::vector<WeightNet> beta_nets;
  static Generator create(const GanConfig& cfg, Rng& rng);
  NamedTensors named_parameters() const;
  /// Parameters of the real-image encoders only.
  std::vector<Tensor> encoder_parameters() const;
};

struct Discriminators {
  std::vector<Discriminator> stages;
  static Discriminators create(const GanConfig& cfg, Rng& rng);
  NamedTensors named_parameters() const;
};

/// Per-sample result of a forward pass.
struct SampleForward {
  TextEncoding text;
  CondAugmentOutput ca;
  std::vector<Tensor> features;  // H_0 .. H_{m-1}, [D, s, s]
  std::vector<Tensor> images;    // [3, s, s] in [-1, 1]
  std::vector<SemMatrix> thetas;  // theta_i for i >= 1 (index i - 1)
  // Train mode only.
  std::vector<StageLosses> losses;  // adv left empty; the trainer fills it
  std::vector<Tensor> real_features;  // H*_i for i >= 1 (index i - 1)
};

/// One stage i >= 1 from H_{i-1}: returns (H_i, image_i, theta_i).
struct StageOutput {
  Tensor feature;
  Tensor image;
  SemMatrix theta;
};
/// Padding words are excluded from theta.
StageOutput stage_forward(const GenStage& stage, const TextEncoding& text, const Tensor& h_prev);

/// Inference path: no real image, encoder or ALR/LVR/REC term is touched.
SampleForward forward_test(const Generator& g, const GanConfig& cfg, std::span<const std::size_t> tokens,
                           Rng& rng);

/// Training path. `real_images[i]` is the stage-i real image; throws
/// ContractError when fewer than m are given.
SampleForward forward_train(const Generator& g, const GanConfig& cfg, std::span<const std::size_t> tokens,
                            std::span<const Tensor> real_images, Rng& rng);

}  // namespace alrgan
