#include "alrgan/gradient_suite.hpp"

#include <algorithm>

#include "alrgan/alr.hpp"
#include "alrgan/gan.hpp"
#include "alrgan/grad_check.hpp"
#include "alrgan/lvr.hpp"
#include "alrgan/ops.hpp"
#include "alrgan/random.hpp"
#include "alrgan/ssm.hpp"

namespace alrgan {

namespace {

void randomize(WeightNet& net, Rng& rng) {
  for (Tensor t : {net.w2, net.b2})
    for (double& v : t.mutable_data()) v = 0.3 * rng.normal();
}

std::vector<GradientCase> primitive_cases() {
  // Fixed partner operands so binary ops are checked in each argument.
  Rng partner_rng(99);
  Tensor p23 = partner_rng.normal_tensor({2, 3});
  Tensor p34 = partner_rng.normal_tensor({3, 4});
  Tensor w = partner_rng.normal_tensor({3, 2, 3, 3});
  Tensor cb = partner_rng.normal_tensor({3});
  Tensor lw = partner_rng.normal_tensor({4, 3});
  Tensor lb = partner_rng.normal_tensor({4});
  Tensor pos = partner_rng.uniform_tensor({2, 3}, 0.5, 2.0);
  Tensor mask = partner_rng.uniform_tensor({3}, 0.1, 1.0);
  Tensor probe = partner_rng.normal_tensor({2, 3});
  Tensor probe_img = partner_rng.normal_tensor({3, 4, 4});
  Tensor conv_in = partner_rng.normal_tensor({2, 4, 4});
  const std::vector<std::size_t> ids{2, 0, 4, 2};
  Tensor probe_emb = partner_rng.normal_tensor({3, 4});
  auto weighted = [probe](const Tensor& t) { return sum(mul(t, probe)); };
  return {
      {"add", false, {2, 3}, [=](const Tensor& x) { return weighted(add(x, p23)); }},
      {"sub", false, {2, 3}, [=](const Tensor& x) { return weighted(sub(p23, x)); }},
      {"mul", false, {2, 3}, [=](const Tensor& x) { return weighted(mul(x, p23)); }},
      {"div_num", false, {2, 3}, [=](const Tensor& x) { return weighted(div(x, pos)); }},
      {"div_den", false, {2, 3}, [=](const Tensor& x) { return weighted(div(p23, add_scalar(mul(x, x), 1.0))); }},
      {"scale", false, {2, 3}, [=](const Tensor& x) { return weighted(scale(x, -1.7)); }},
      {"add_scalar", false, {2, 3}, [=](const Tensor& x) { return weighted(exp(add_scalar(x, 0.3))); }},
      {"neg", false, {2, 3}, [=](const Tensor& x) { return weighted(exp(neg(x))); }},
      {"abs", false, {2, 3}, [=](const Tensor& x) { return weighted(abs(x)); }},
      {"exp", false, {2, 3}, [=](const Tensor& x) { return weighted(exp(x)); }},
      {"log_clamped", false, {2, 3},
       [=](const Tensor& x) { return weighted(log_clamped(add_scalar(mul(x, x), 0.1), 1e-7, 1e7)); }},
      {"sqrt", false, {2, 3}, [=](const Tensor& x) { return weighted(sqrt(add_scalar(mul(x, x), 0.5))); }},
      {"softplus", false, {2, 3}, [=](const Tensor& x) { return weighted(softplus(x)); }},
      {"sigmoid", false, {2, 3}, [=](const Tensor& x) { return weighted(sigmoid(x)); }},
      {"tanh", false, {2, 3}, [=](const Tensor& x) { return weighted(tanh(x)); }},
      {"leaky_relu", false, {2, 3}, [=](const Tensor& x) { return weighted(leaky_relu(x, 0.2)); }},
      {"sum", false, {2, 3}, [=](const Tensor& x) { return sum(mul(x, x)); }},
      {"mean", false, {2, 3}, [=](const Tensor& x) { return mean(mul(x, probe)); }},
      {"l1_norm", false, {2, 3}, [=](const Tensor& x) { return l1_norm(x); }},
      {"frobenius_norm", false, {2, 3}, [=](const Tensor& x) { return frobenius_norm(x); }},
      {"max_all", false, {2, 3}, [=](const Tensor& x) { return max_all(mul(x, probe)); }},
      {"min_all", false, {2, 3}, [=](const Tensor& x) { return min_all(mul(x, probe)); }},
      {"sum_axis0", false, {2, 3}, [=](const Tensor& x) { return sum(mul(sum_axis(x, 0), sum_axis(x, 0))); }},
      {"sum_axis1", false, {2, 3}, [=](const Tensor& x) { return sum(exp(sum_axis(x, 1))); }},
      {"max_axis0", false, {2, 3}, [=](const Tensor& x) { return sum(exp(max_axis(x, 0))); }},
      {"max_axis1", false, {2, 3}, [=](const Tensor& x) { return sum(exp(max_axis(x, 1))); }},
      {"softmax_axis0", false, {2, 3}, [=](const Tensor& x) { return weighted(softmax_axis(x, 0)); }},
      {"softmax_axis1", false, {2, 3}, [=](const Tensor& x) { return weighted(softmax_axis(x, 1)); }},
      {"log_softmax", false, {2, 3}, [=](const Tensor& x) { return weighted(log_softmax_axis(x, 1)); }},
      {"matmul_left", false, {2, 3}, [=](const Tensor& x) { return sum(exp(scale(matmul(x, p34), 0.3))); }},
      {"matmul_right", false, {3, 4}, [=](const Tensor& x) { return sum(exp(scale(matmul(p23, x), 0.3))); }},
      {"transpose", false, {2, 3}, [=](const Tensor& x) { return sum(mul(transpose(x), transpose(probe))); }},
      {"linear_x", false, {2, 3}, [=](const Tensor& x) { return sum(tanh(linear(x, lw, lb))); }},
      {"linear_w", false, {4, 3}, [=](const Tensor& x) { return sum(tanh(linear(p23, x, lb))); }},
      {"linear_b", false, {4}, [=](const Tensor& x) { return sum(tanh(linear(p23, lw, x))); }},
      {"normalize_columns", false, {2, 3}, [=](const Tensor& x) { return weighted(normalize_columns(x)); }},
      {"diagonal", false, {3, 3}, [=](const Tensor& x) { return sum(exp(diagonal(x))); }},
      {"reshape", false, {2, 3}, [=](const Tensor& x) { return sum(mul(reshape(x, {3, 2}), reshape(probe, {3, 2}))); }},
      {"concat", false, {2, 3}, [=](const Tensor& x) { return sum(exp(scale(concat({x, p23, x}), 0.5))); }},
      {"stack", false, {2, 3}, [=](const Tensor& x) { return sum(exp(scale(stack({p23, x}), 0.5))); }},
      {"slice_columns", false, {2, 3}, [=](const Tensor& x) { return sum(exp(slice_columns(x, 1, 3))); }},
      {"pad_columns", false, {2, 3}, [=](const Tensor& x) { return sum(exp(pad_columns(x, 5))); }},
      {"embedding", false, {5, 3}, [=](const Tensor& x) { return sum(mul(tanh(embedding(x, ids)), probe_emb)); }},
      {"mul_channelwise_x", false, {2, 3}, [=](const Tensor& x) { return weighted(mul_channelwise(x, mask)); }},
      {"mul_channelwise_m", false, {3}, [=](const Tensor& x) { return weighted(mul_channelwise(p23, x)); }},
      {"conv3x3_x", false, {2, 4, 4}, [=](const Tensor& x) { return sum(mul(conv3x3(x, w, cb), probe_img)); }},
      {"conv3x3_w", false, {3, 2, 3, 3}, [=](const Tensor& x) { return sum(tanh(conv3x3(conv_in, x, cb))); }},
      {"conv3x3_b", false, {3}, [=](const Tensor& x) { return sum(tanh(conv3x3(conv_in, w, x))); }},
      {"upsample_nearest2x", false, {3, 2, 2},
       [=](const Tensor& x) { return sum(mul(upsample_nearest2x(x), probe_img)); }},
      {"avg_pool2x2", false, {3, 4, 4}, [=](const Tensor& x) { return sum(exp(avg_pool2x2(x))); }},
  };
}

std::vector<GradientCase> composite_cases() {
  constexpr std::size_t d = 4, t = 3;
  Rng rng(77);
  Tensor words = rng.normal_tensor({d, t});
  Tensor feats = rng.normal_tensor({d, 2, 2});
  Tensor feats_star = rng.normal_tensor({d, 2, 2});
  Tensor probe_theta = rng.normal_tensor({t, 4});
  Tensor probe_mask = rng.normal_tensor({2, 2});
  WeightNet net_a = WeightNet::create(d, t, rng);
  WeightNet net_b = WeightNet::create(d, t, rng);
  randomize(net_a, rng);
  randomize(net_b, rng);
  const std::vector<bool> active{true, false, true};
  const double gamma = 0.2;

  auto adaptive = [=](const Tensor& h, const Tensor& h_star) {
    ResidualSplit split = split_residual(compute_ssm(words, h), compute_ssm(words, h_star), gamma);
    return alr_loss(split, weight_forward(net_a, split.easy, h_star), weight_forward(net_b, split.hard, h_star), d);
  };
  auto masks = [=](const Tensor& h) {
    return std::pair{layout_mask(compute_ssm(words, h)), layout_mask(compute_ssm(words, feats_star))};
  };

  Tensor image = rng.normal_tensor({3, 8, 8});
  Tensor logits = rng.normal_tensor({2});
  Tensor s_raw = rng.normal_tensor({d});
  CondAugment ca = CondAugment::create(d, rng);
  Iftm init = Iftm::create(d, 2, d, 4, rng);
  Tensor z = rng.normal_tensor({2});
  RealEncoder enc = RealEncoder::create(d, 8, rng);
  Discriminator disc = Discriminator::create(d, d, 8, rng);
  std::vector<Tensor> regions{rng.normal_tensor({d, 2, 2}), rng.normal_tensor({d, 2, 2})};
  std::vector<Tensor> word_batch{words, rng.normal_tensor({d, t})};
  std::vector<std::vector<std::size_t>> token_batch{{3, 0, 5}, {1, 2, 0}};

  return {
      {"ssm", true, {d, t}, [=](const Tensor& x) { return sum(mul(compute_ssm(x, feats).theta, probe_theta)); }},
      {"ssm_masked", true, {d, 2, 2},
       [=](const Tensor& x) { return sum(mul(compute_ssm(words, x, active).theta, probe_theta)); }},
      {"tvm", true, {d, t}, [=](const Tensor& x) { return sum(tanh(compute_tvm(compute_ssm(x, feats), x))); }},
      {"layout_mask", true, {d, 2, 2},
       [=](const Tensor& x) { return sum(mul(layout_mask(compute_ssm(words, x)).mask, probe_mask)); }},
      {"ssm_alr_generated", true, {d, 2, 2}, [=](const Tensor& x) { return adaptive(x, feats_star); }},
      {"ssm_alr_real", true, {d, 2, 2}, [=](const Tensor& x) { return adaptive(feats, x); }},
      {"ssm_alr_fixed", true, {d, 2, 2},
       [=](const Tensor& x) { return fixed_alr_loss(compute_ssm(words, x), compute_ssm(words, feats_star), d); }},
      {"pr_loss", true, {d, 2, 2}, [=](const Tensor& x) {
         auto [m, m_star] = masks(x);
         return pr_loss(m, x, m_star, feats_star);
       }},
      {"sr_loss", true, {d, 2, 2}, [=](const Tensor& x) {
         auto [m, m_star] = masks(x);
         return sr_loss(m, x, m_star, feats_star);
       }},
      {"lvr_loss", true, {d, 2, 2}, [=](const Tensor& x) {
         auto [m, m_star] = masks(x);
         return lvr_loss({0.7, 1.3}, m, x, m_star, feats_star);
       }},
      {"rec_loss", true, {3, 8, 8}, [=](const Tensor& x) { return rec_loss(image, tanh(x)); }},
      {"g_adv_loss", true, {2}, [=](const Tensor& x) { return g_adv_loss(sigmoid(x), sigmoid(logits)); }},
      {"d_adv_loss", true, {2}, [=](const Tensor& x) {
         return d_adv_loss(sigmoid(x), sigmoid(logits), sigmoid(neg(logits)), sigmoid(scale(x, 0.5)));
       }},
      {"contrastive_loss", true, {3, 3}, [=](const Tensor& x) { return contrastive_loss(tanh(x), 0.1); }},
      {"matching_loss", true, {d, 2, 2}, [=](const Tensor& x) {
         std::vector<Tensor> r{x, regions[1]};
         return matching_loss(r, word_batch, token_batch, 5.0, 0.1);
       }},
      {"gaussian_kl", true, {d}, [=](const Tensor& x) { return gaussian_kl(x, scale(x, 0.3)); }},
      {"conditioning_augment", true, {d}, [=](const Tensor& x) {
         Rng noise(5);
         auto out = conditioning_augment(ca, x, noise);
         return add(sum(tanh(out.s)), out.kl);
       }},
      {"iftm", true, {d}, [=](const Tensor& x) { return sum(tanh(iftm(init, x, z))); }},
      {"encode_real_image", true, {3, 8, 8}, [=](const Tensor& x) { return sum(tanh(encode_real_image(enc, x))); }},
      {"discriminate", true, {3, 8, 8}, [=](const Tensor& x) {
         auto out = discriminate(disc, x, s_raw);
         return add(out.uncond, out.cond);
       }},
  };
}

/// Generator and discriminator objectives assembled from every stage piece
/// on a two-stage configuration.
std::vector<GradientCase> objective_cases() {
  GanConfig cfg;
  cfg.stages = 2;
  cfg.base = 8;
  cfg.d = 6;
  cfg.d_s = 5;
  cfg.d_z = 3;
  cfg.t = 4;
  cfg.batch = 2;
  Rng rng(88);
  Generator g = Generator::create(cfg, rng);
  for (auto& n : g.alpha_nets) randomize(n, rng);
  for (auto& n : g.beta_nets) randomize(n, rng);
  Discriminators ds = Discriminators::create(cfg, rng);
  Tensor h_prev = rng.normal_tensor({cfg.d, 8, 8});
  Tensor real8 = rng.uniform_tensor({3, 8, 8}, -1, 1);
  Tensor real16 = rng.uniform_tensor({3, 16, 16}, -1, 1);
  Tensor fake8 = rng.uniform_tensor({3, 8, 8}, -1, 1);
  Tensor s_raw = rng.normal_tensor({cfg.d_s});
  Tensor other_words = rng.normal_tensor({cfg.d, cfg.t});
  const std::vector<std::size_t> tokens{3, 7, 12, 0};
  const std::vector<std::size_t> other_tokens{2, 8, 16, 17};
  const std::vector<bool> active{true, true, true, false};

  auto generator_objective = [=](const Tensor& x) {
    TextEncoding text{x, s_raw, active};
    StageOutput s = stage_forward(g.stages[1], text, h_prev);
    Tensor h_star = encode_real_image(g.encoders[1], real16);
    StageOutput recon = stage_forward(g.stages[1], text, h_star);
    ResidualSplit split = split_residual(s.theta, recon.theta, cfg.gamma);
    StageLosses l1;
    l1.alr = alr_loss(split, weight_forward(g.alpha_nets[0], split.easy, h_star),
                      weight_forward(g.beta_nets[0], split.hard, h_star), cfg.d);
    l1.rec = rec_loss(real16, recon.image);
    LayoutMask m = layout_mask(s.theta), m_star = layout_mask(recon.theta);
    l1.pr = pr_loss(m, h_prev, m_star, h_star);
    l1.sr = sr_loss(m, h_prev, m_star, h_star);
    l1.lvr = lvr_loss({cfg.eta1, cfg.eta2}, l1.pr, l1.sr);
    auto d1 = discriminate(ds.stages[1], s.image, s_raw);
    l1.adv = g_adv_loss(d1.uncond, d1.cond);
    auto d0 = discriminate(ds.stages[0], fake8, s_raw);
    StageLosses l0{g_adv_loss(d0.uncond, d0.cond), Tensor(), Tensor(), Tensor(), Tensor(), Tensor()};
    std::vector<Tensor> regions{encode_real_image(g.encoders[0], real8), encode_real_image(g.encoders[0], fake8)};
    std::vector<Tensor> words{x, other_words};
    std::vector<std::vector<std::size_t>> toks{tokens, other_tokens};
    Tensor matching = matching_loss(regions, words, toks, cfg.attn_sharpness, cfg.tau);
    std::vector<StageLosses> stages{l0, l1};
    return total_g_loss(cfg, stages, matching, gaussian_kl(scale(s_raw, 0.1), scale(s_raw, 0.2)));
  };
  auto discriminator_objective = [=](const Tensor& x) {
    std::vector<Tensor> losses;
    auto real0 = discriminate(ds.stages[0], real8, s_raw);
    auto fake0 = discriminate(ds.stages[0], tanh(x), s_raw);
    losses.push_back(d_adv_loss(real0.uncond, fake0.uncond, real0.cond, fake0.cond));
    auto real1 = discriminate(ds.stages[1], real16, s_raw);
    auto fake1 = discriminate(ds.stages[1], upsample_nearest2x(tanh(x)), s_raw);
    losses.push_back(d_adv_loss(real1.uncond, fake1.uncond, real1.cond, fake1.cond));
    return total_d_loss(losses);
  };
  return {
      {"generator_objective", true, {cfg.d, cfg.t}, generator_objective},
      {"discriminator_objective", true, {3, 8, 8}, discriminator_objective},
  };
}

}  // namespace

std::vector<GradientCase> gradient_cases() {
  std::vector<GradientCase> out = primitive_cases();
  for (auto& c : composite_cases()) out.push_back(std::move(c));
  for (auto& c : objective_cases()) out.push_back(std::move(c));
  return out;
}

std::vector<GradientCaseResult> run_gradient_suite(const GradientSuiteOptions& options) {
  std::vector<GradientCaseResult> results;
  for (const auto& c : gradient_cases()) {
    GradientCaseResult r{c.name, c.composite, 0.0, c.composite ? options.composite_tolerance : options.op_tolerance,
                         true};
    for (std::size_t point = 0; point < options.points; ++point) {
      Rng rng = Rng::derive(options.seed, point);
      Tensor x = rng.normal_tensor(c.shape);
      r.max_rel_err = std::max(r.max_rel_err, grad_check(c.f, x, c.composite ? 1e-6 : 1e-5));
    }
    r.passed = r.max_rel_err <= r.tolerance;
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace alrgan
