#include "alrgan/gan.hpp"

#include <algorithm>
#include <cmath>

#include "alrgan/errors.hpp"
#include "alrgan/lvr.hpp"
#include "alrgan/ops.hpp"
#include "alrgan/synth.hpp"

namespace alrgan {

namespace {

constexpr double kSlope = 0.2;
constexpr double kProbLo = 1e-7;
constexpr double kProbHi = 1.0 - 1e-7;

Tensor leaky(const Tensor& x) { return leaky_relu(x, kSlope); }

Tensor scaled_normal(Rng& rng, Shape shape, double std) {
  Tensor t = rng.normal_tensor(std::move(shape));
  for (double& v : t.mutable_data()) v *= std;
  t.set_requires_grad(true);
  return t;
}

Tensor zeros_param(Shape shape) { return Tensor::zeros(std::move(shape), true); }

Tensor zero_scalar() { return Tensor::scalar(0.0); }

Tensor mean_log(const Tensor& p) { return mean(log_clamped(p, kProbLo, kProbHi)); }

Tensor one_minus(const Tensor& p) { return add_scalar(neg(p), 1.0); }

}  // namespace

ConvLayer ConvLayer::create(std::size_t out, std::size_t in, Rng& rng) {
  return {scaled_normal(rng, {out, in, 3, 3}, std::sqrt(1.0 / static_cast<double>(in * 9))), zeros_param({out})};
}

Tensor ConvLayer::operator()(const Tensor& x) const { return conv3x3(x, w, b); }

void ConvLayer::collect(const std::string& prefix, NamedTensors& out) const {
  out.emplace_back(prefix + ".w", w);
  out.emplace_back(prefix + ".b", b);
}

Dense Dense::create(std::size_t out, std::size_t in, Rng& rng, double init_scale) {
  return {scaled_normal(rng, {out, in}, init_scale * std::sqrt(1.0 / static_cast<double>(in))), zeros_param({out})};
}

Tensor Dense::operator()(const Tensor& x) const {
  Tensor y = linear(reshape(x, {1, x.size()}), w, b);
  return reshape(y, {w.dim(0)});
}

void Dense::collect(const std::string& prefix, NamedTensors& out) const {
  out.emplace_back(prefix + ".w", w);
  out.emplace_back(prefix + ".b", b);
}

TextEncoder TextEncoder::create(std::size_t vocab, std::size_t d, std::size_t d_s, Rng& rng) {
  return {scaled_normal(rng, {vocab, d}, 1.0), Dense::create(d_s, d, rng)};
}

TextEncoding encode_text(const TextEncoder& encoder, std::span<const std::size_t> tokens) {
  const std::size_t v = encoder.table.dim(0);
  for (std::size_t id : tokens) {
    if (id >= v) throw VocabularyError("encode_text: token id " + std::to_string(id) + " outside vocabulary of " +
                                       std::to_string(v));
  }
  Tensor words = embedding(encoder.table, tokens);
  Tensor mean_word = scale(sum_axis(words, 1), 1.0 / static_cast<double>(tokens.size()));
  std::vector<bool> active;
  for (std::size_t id : tokens) active.push_back(id != 0);
  return {words, encoder.project(mean_word), std::move(active)};
}

CondAugment CondAugment::create(std::size_t d_s, Rng& rng) {
  return {Dense::create(d_s, d_s, rng), Dense::create(d_s, d_s, rng, 0.1)};
}

Tensor gaussian_kl(const Tensor& mu, const Tensor& logvar) {
  Tensor terms = sub(add(mul(mu, mu), exp(logvar)), add_scalar(logvar, 1.0));
  return scale(mean(terms), 0.5);
}

CondAugmentOutput conditioning_augment(const CondAugment& ca, const Tensor& s_raw, Rng& rng) {
  Tensor mu = ca.mu(s_raw);
  Tensor logvar = ca.logvar(s_raw);
  Tensor eps = rng.normal_tensor(mu.shape());
  Tensor s = add(mu, mul(exp(scale(logvar, 0.5)), eps));
  return {s, gaussian_kl(mu, logvar), mu, logvar};
}

Iftm Iftm::create(std::size_t d_s, std::size_t d_z, std::size_t d, std::size_t base, Rng& rng) {
  Iftm m;
  m.fc = Dense::create(d * base * base, d_s + d_z, rng);
  m.r1a = ConvLayer::create(d, d, rng);
  m.r1b = ConvLayer::create(d, d, rng);
  m.r2a = ConvLayer::create(d, d, rng);
  m.r2b = ConvLayer::create(d, d, rng);
  m.d = d;
  m.base = base;
  return m;
}

Tensor iftm(const Iftm& module, const Tensor& s, const Tensor& z) {
  Tensor x = reshape(module.fc(concat({reshape(s, {s.size()}), reshape(z, {z.size()})})),
                     {module.d, module.base, module.base});
  x = leaky(x);
  x = add(x, module.r1b(leaky(module.r1a(x))));
  x = add(x, module.r2b(leaky(module.r2a(x))));
  return x;
}

RealEncoder RealEncoder::create(std::size_t d, std::size_t side, Rng& rng) {
  return {ConvLayer::create(d, 3, rng), ConvLayer::create(d, d, rng), side};
}

RealEncoder RealEncoder::detached() const {
  return {{c1.w.detach(), c1.b.detach()}, {c2.w.detach(), c2.b.detach()}, side};
}

Tensor encode_real_image(const RealEncoder& encoder, const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) != encoder.side || image.dim(2) != encoder.side) {
    throw DimensionError("encode_real_image: expected [3, " + std::to_string(encoder.side) + ", " +
                         std::to_string(encoder.side) + "], got " + to_string(image.shape()));
  }
  return encoder.c2(avg_pool2x2(leaky(encoder.c1(image))));
}

Tensor rec_loss(const Tensor& image_star, const Tensor& image_rec) {
  if (image_star.shape() != image_rec.shape()) {
    throw DimensionError("rec_loss: shapes differ, " + to_string(image_star.shape()) + " vs " +
                         to_string(image_rec.shape()));
  }
  return mean(abs(sub(image_star, image_rec)));
}

Discriminator Discriminator::create(std::size_t d, std::size_t d_s, std::size_t side, Rng& rng) {
  Discriminator disc;
  disc.side = side;
  std::size_t in = 3;
  for (std::size_t s = side; s > 4; s /= 2) {
    const std::size_t out = in == 3 ? std::max<std::size_t>(d / 2, 1) : d;
    disc.convs.push_back(ConvLayer::create(out, in, rng));
    in = out;
  }
  if (disc.convs.empty()) disc.convs.push_back(ConvLayer::create(d, 3, rng));
  const std::size_t flat = disc.convs.back().w.dim(0) * 16;
  disc.uncond = Dense::create(1, flat, rng);
  disc.cond_hidden = Dense::create(d, flat + d_s, rng);
  disc.cond_out = Dense::create(1, d, rng);
  return disc;
}

DiscriminatorOutput discriminate(const Discriminator& d, const Tensor& image, const Tensor& sentence) {
  if (image.rank() != 3 || image.dim(1) != d.side || image.dim(2) != d.side) {
    throw DimensionError("discriminate: expected side " + std::to_string(d.side) + ", got " +
                         to_string(image.shape()));
  }
  Tensor x = image;
  for (const auto& c : d.convs) {
    x = leaky(c(x));
    if (x.dim(1) > 4) x = avg_pool2x2(x);
  }
  Tensor flat = reshape(x, {x.size()});
  Tensor u = sigmoid(reshape(d.uncond(flat), {}));
  Tensor h = leaky(d.cond_hidden(concat({flat, reshape(sentence, {sentence.size()})})));
  Tensor c = sigmoid(reshape(d.cond_out(h), {}));
  return {u, c};
}

Tensor g_adv_loss(const Tensor& d_fake_uncond, const Tensor& d_fake_cond) {
  return scale(add(mean_log(d_fake_uncond), mean_log(d_fake_cond)), -0.5);
}

Tensor d_adv_loss(const Tensor& d_real_uncond, const Tensor& d_fake_uncond, const Tensor& d_real_cond,
                  const Tensor& d_fake_cond) {
  Tensor u = add(mean_log(d_real_uncond), mean_log(one_minus(d_fake_uncond)));
  Tensor c = add(mean_log(d_real_cond), mean_log(one_minus(d_fake_cond)));
  return scale(add(u, c), -0.5);
}

Tensor contrastive_loss(const Tensor& scores, double tau) {
  if (scores.rank() != 2 || scores.dim(0) != scores.dim(1)) {
    throw DimensionError("contrastive_loss: expected a square matrix, got " + to_string(scores.shape()));
  }
  if (scores.dim(0) < 2) throw ConfigError("contrastive_loss: batch must be at least 2");
  if (!(tau > 0)) throw ConfigError("contrastive_loss: tau must be positive");
  Tensor logits = scale(scores, 1.0 / tau);
  Tensor rows = mean(diagonal(log_softmax_axis(logits, 1)));
  Tensor cols = mean(diagonal(log_softmax_axis(logits, 0)));
  return scale(add(rows, cols), -0.5);
}

Tensor word_region_score(const Tensor& words, std::span<const std::size_t> tokens, const Tensor& regions,
                         double sharpness) {
  const std::size_t t = words.dim(1);
  if (tokens.size() != t) throw DimensionError("word_region_score: token count differs from word columns");
  Tensor f = regions.rank() == 3 ? reshape(regions, {regions.dim(0), regions.dim(1) * regions.dim(2)}) : regions;
  Tensor attn = softmax_axis(scale(matmul(transpose(words), f), sharpness), 1);
  Tensor context = matmul(f, transpose(attn));
  Tensor cos = sum_axis(mul(normalize_columns(words), normalize_columns(context)), 0);
  std::vector<double> mask(t, 0.0);
  double count = 0;
  for (std::size_t j = 0; j < t; ++j) {
    if (tokens[j] != 0) {
      mask[j] = 1.0;
      ++count;
    }
  }
  if (count == 0) throw DataError("word_region_score: caption has no words");
  return scale(sum(mul(cos, Tensor::from({t}, std::move(mask)))), 1.0 / count);
}

Tensor region_word_score(const Tensor& words, std::span<const std::size_t> tokens, const Tensor& regions,
                         double sharpness) {
  const std::size_t t = words.dim(1);
  if (tokens.size() != t) throw DimensionError("region_word_score: token count differs from word columns");
  std::vector<bool> active;
  for (std::size_t id : tokens) active.push_back(id != 0);
  Tensor f = regions.rank() == 3 ? reshape(regions, {regions.dim(0), regions.dim(1) * regions.dim(2)}) : regions;
  SemMatrix attn = compute_ssm(scale(words, sharpness), f, active);
  Tensor context = compute_tvm(attn, words);
  Tensor cos = sum_axis(mul(normalize_columns(f), normalize_columns(context)), 0);
  return mean(cos);
}

Tensor matching_loss(std::span<const Tensor> region_features, std::span<const Tensor> words,
                     std::span<const std::vector<std::size_t>> tokens, double sharpness, double tau) {
  const std::size_t b = region_features.size();
  if (words.size() != b || tokens.size() != b) throw DimensionError("matching_loss: batch sizes differ");
  if (b < 2) throw ConfigError("matching_loss: batch must be at least 2");
  std::vector<Tensor> scores;
  scores.reserve(b * b);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j)
      scores.push_back(scale(add(word_region_score(words[i], tokens[i], region_features[j], sharpness),
                                 region_word_score(words[i], tokens[i], region_features[j], sharpness)),
                             0.5));
  return contrastive_loss(reshape(stack(scores), {b, b}), tau);
}

Tensor total_g_loss(const GanConfig& cfg, std::span<const StageLosses> stages, const Tensor& matching,
                    const Tensor& kl) {
  Tensor total = zero_scalar();
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto& s = stages[i];
    total = add(total, s.adv);
    if (i == 0) continue;
    if (cfg.alr) total = add(total, s.alr);
    if (cfg.rec) total = add(total, scale(s.rec, cfg.lambda1));
    if (cfg.pr || cfg.sr) total = add(total, s.lvr);
  }
  if (cfg.lambda2 != 0) total = add(total, scale(matching, cfg.lambda2));
  if (cfg.kl) total = add(total, scale(kl, cfg.kl_weight));
  return total;
}

Tensor total_d_loss(std::span<const Tensor> stage_d_losses) {
  Tensor total = zero_scalar();
  for (const auto& l : stage_d_losses) total = add(total, l);
  return total;
}

Generator Generator::create(const GanConfig& cfg, Rng& rng) {
  validate(cfg);
  Generator g;
  g.text = TextEncoder::create(synth::Vocabulary::instance().size(), cfg.d, cfg.d_s, rng);
  g.ca = CondAugment::create(cfg.d_s, rng);
  g.init = Iftm::create(cfg.d_s, cfg.d_z, cfg.d, cfg.base, rng);
  for (std::size_t i = 0; i < cfg.stages; ++i) {
    GenStage st;
    if (i > 0) {
      st.join = ConvLayer::create(cfg.d, 2 * cfg.d, rng);
      st.up = ConvLayer::create(cfg.d, cfg.d, rng);
    }
    st.rgb = ConvLayer::create(3, cfg.d, rng);
    g.stages.push_back(std::move(st));
  }
  for (std::size_t i = 0; i < cfg.stages; ++i) g.encoders.push_back(RealEncoder::create(cfg.d, cfg.base << i, rng));
  for (std::size_t i = 1; i < cfg.stages; ++i) {
    g.alpha_nets.push_back(WeightNet::create(cfg.d, cfg.t, rng));
    g.beta_nets.push_back(WeightNet::create(cfg.d, cfg.t, rng));
  }
  return g;
}

NamedTensors Generator::named_parameters() const {
  NamedTensors out;
  out.emplace_back("text.table", text.table);
  text.project.collect("text.project", out);
  ca.mu.collect("ca.mu", out);
  ca.logvar.collect("ca.logvar", out);
  init.fc.collect("iftm.fc", out);
  init.r1a.collect("iftm.r1a", out);
  init.r1b.collect("iftm.r1b", out);
  init.r2a.collect("iftm.r2a", out);
  init.r2b.collect("iftm.r2b", out);
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const std::string p = "stage" + std::to_string(i);
    if (i > 0) {
      stages[i].join.collect(p + ".join", out);
      stages[i].up.collect(p + ".up", out);
    }
    stages[i].rgb.collect(p + ".rgb", out);
  }
  for (std::size_t i = 0; i < encoders.size(); ++i) {
    encoders[i].c1.collect("encoder" + std::to_string(i) + ".c1", out);
    encoders[i].c2.collect("encoder" + std::to_string(i) + ".c2", out);
  }
  auto add_net = [&out](const std::string& p, const WeightNet& n) {
    out.emplace_back(p + ".w1", n.w1);
    out.emplace_back(p + ".b1", n.b1);
    out.emplace_back(p + ".w2", n.w2);
    out.emplace_back(p + ".b2", n.b2);
  };
  for (std::size_t i = 0; i < alpha_nets.size(); ++i) {
    add_net("alpha" + std::to_string(i + 1), alpha_nets[i]);
    add_net("beta" + std::to_string(i + 1), beta_nets[i]);
  }
  return out;
}

std::vector<Tensor> Generator::encoder_parameters() const {
  std::vector<Tensor> out;
  for (const auto& e : encoders) out.insert(out.end(), {e.c1.w, e.c1.b, e.c2.w, e.c2.b});
  return out;
}

Discriminators Discriminators::create(const GanConfig& cfg, Rng& rng) {
  validate(cfg);
  Discriminators ds;
  for (std::size_t i = 0; i < cfg.stages; ++i) ds.stages.push_back(Discriminator::create(cfg.d, cfg.d_s, cfg.base << i, rng));
  return ds;
}

NamedTensors Discriminators::named_parameters() const {
  NamedTensors out;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const std::string p = "disc" + std::to_string(i);
    for (std::size_t k = 0; k < stages[i].convs.size(); ++k) stages[i].convs[k].collect(p + ".conv" + std::to_string(k), out);
    stages[i].uncond.collect(p + ".uncond", out);
    stages[i].cond_hidden.collect(p + ".cond_hidden", out);
    stages[i].cond_out.collect(p + ".cond_out", out);
  }
  return out;
}

namespace {

/// concat(Q, H_prev) -> conv -> upsample -> conv -> H_i.
Tensor stage_body(const GenStage& stage, const Tensor& words, const SemMatrix& theta, const Tensor& h_prev) {
  Tensor q = reshape(compute_tvm(theta, words), h_prev.shape());
  Tensor x = leaky(stage.join(concat({q, h_prev})));
  return leaky(stage.up(upsample_nearest2x(x)));
}

Tensor to_image(const GenStage& stage, const Tensor& h) { return tanh(stage.rgb(h)); }

struct Prefix {
  TextEncoding text;
  CondAugmentOutput ca;
  Tensor h0;
};

Prefix run_prefix(const Generator& g, const GanConfig& cfg, std::span<const std::size_t> tokens, Rng& rng) {
  if (tokens.size() != cfg.t) {
    throw DimensionError("generator: expected " + std::to_string(cfg.t) + " tokens, got " +
                         std::to_string(tokens.size()));
  }
  TextEncoding text = encode_text(g.text, tokens);
  CondAugmentOutput ca = conditioning_augment(g.ca, text.sentence_raw, rng);
  Tensor z = rng.normal_tensor({cfg.d_z});
  return {text, ca, iftm(g.init, ca.s, z)};
}

}  // namespace

StageOutput stage_forward(const GenStage& stage, const TextEncoding& text, const Tensor& h_prev) {
  SemMatrix theta = compute_ssm(text.words, h_prev, text.active);
  Tensor h = stage_body(stage, text.words, theta, h_prev);
  return {h, to_image(stage, h), theta};
}

SampleForward forward_test(const Generator& g, const GanConfig& cfg, std::span<const std::size_t> tokens,
                           Rng& rng) {
  Prefix p = run_prefix(g, cfg, tokens, rng);
  SampleForward out{p.text, p.ca, {p.h0}, {to_image(g.stages[0], p.h0)}, {}, {}, {}};
  for (std::size_t i = 1; i < cfg.stages; ++i) {
    StageOutput s = stage_forward(g.stages[i], p.text, out.features.back());
    out.features.push_back(s.feature);
    out.images.push_back(s.image);
    out.thetas.push_back(s.theta);
  }
  return out;
}

SampleForward forward_train(const Generator& g, const GanConfig& cfg, std::span<const std::size_t> tokens,
                            std::span<const Tensor> real_images, Rng& rng) {
  if (real_images.size() < cfg.stages) {
    throw ContractError("forward_train: " + std::to_string(cfg.stages) + " real images required, got " +
                        std::to_string(real_images.size()));
  }
  Prefix p = run_prefix(g, cfg, tokens, rng);
  SampleForward out{p.text, p.ca, {p.h0}, {to_image(g.stages[0], p.h0)}, {}, {}, {}};
  out.losses.push_back({zero_scalar(), zero_scalar(), zero_scalar(), zero_scalar(), zero_scalar(), zero_scalar()});
  const Tensor& words = p.text.words;
  const LvrWeights eta{cfg.eta1, cfg.eta2};
  for (std::size_t i = 1; i < cfg.stages; ++i) {
    const Tensor& h_prev = out.features.back();
    StageOutput s = stage_forward(g.stages[i], p.text, h_prev);
    StageLosses l{zero_scalar(), zero_scalar(), zero_scalar(), zero_scalar(), zero_scalar(), zero_scalar()};

    if (cfg.alr || cfg.rec || cfg.pr || cfg.sr) {
      Tensor h_star = encode_real_image(g.encoders[i], real_images[i]);
      out.real_features.push_back(h_star);
      Tensor h_star_used = cfg.stop_grad_star ? h_star.detach() : h_star;
      SemMatrix theta_star = compute_ssm(words, h_star_used, p.text.active);
      if (cfg.alr) {
        if (cfg.adaptive_weights) {
          ResidualSplit split = split_residual(s.theta, theta_star, cfg.gamma);
          Tensor alpha = weight_forward(g.alpha_nets[i - 1], split.easy, h_star_used);
          Tensor beta = weight_forward(g.beta_nets[i - 1], split.hard, h_star_used);
          l.alr = alr_loss(split, alpha, beta, cfg.d);
        } else {
          l.alr = fixed_alr_loss(s.theta, theta_star, cfg.d);
        }
      }
      if (cfg.rec) {
        Tensor rec = to_image(g.stages[i], stage_body(g.stages[i], words, theta_star, h_star));
        l.rec = rec_loss(real_images[i], rec);
      }
      if (cfg.pr || cfg.sr) {
        LayoutMask mask = layout_mask(s.theta);
        LayoutMask mask_star = layout_mask(theta_star);
        if (cfg.pr) l.pr = pr_loss(mask, h_prev, mask_star, h_star_used);
        if (cfg.sr) l.sr = sr_loss(mask, h_prev, mask_star, h_star_used);
        l.lvr = add(scale(l.pr, cfg.pr ? eta.eta1 : 0.0), scale(l.sr, cfg.sr ? eta.eta2 : 0.0));
      }
    }
    out.losses.push_back(l);
    out.features.push_back(s.feature);
    out.images.push_back(s.image);
    out.thetas.push_back(s.theta);
  }
  return out;
}

}  // namespace alrgan
