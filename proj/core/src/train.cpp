#include "alrgan/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "alrgan/errors.hpp"
#include "alrgan/metrics.hpp"
#include "alrgan/ops.hpp"

namespace alrgan {

namespace {

constexpr char kMagic[8] = {'A', 'L', 'R', 'G', 'A', 'N', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

Tensor average(const std::vector<Tensor>& xs) {
  Tensor total = xs.front();
  for (std::size_t i = 1; i < xs.size(); ++i) total = add(total, xs[i]);
  return scale(total, 1.0 / static_cast<double>(xs.size()));
}

void clip_gradients(const std::vector<Tensor>& params, double max_norm) {
  double sq = 0;
  for (const auto& p : params)
    if (p.has_grad())
      for (double g : p.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (!(norm > max_norm)) return;
  const double k = max_norm / norm;
  for (auto p : params)
    if (p.has_grad())
      for (double& g : p.mutable_grad()) g *= k;
}

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T take(std::istream& in, const std::string& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw DataError("checkpoint " + path + " is truncated");
  return v;
}

NamedTensors all_named(const Generator& g, const Discriminators& d) {
  NamedTensors out;
  for (auto& [n, t] : g.named_parameters()) out.emplace_back("g." + n, t);
  for (auto& [n, t] : d.named_parameters()) out.emplace_back("d." + n, t);
  return out;
}

}  // namespace

std::string LossRecord::csv_header() {
  return "step,g_total,d_total,g_adv,d_adv,alr,rec,lvr,pr,sr,matching,kl";
}

std::string LossRecord::csv_row() const {
  std::string out = std::to_string(step);
  for (double v : {g_total, d_total, g_adv, d_adv, alr, rec, lvr, pr, sr, matching, kl}) out += "," + fmt(v);
  return out;
}

bool LossRecord::all_finite() const {
  for (double v : {g_total, d_total, g_adv, d_adv, alr, rec, lvr, pr, sr, matching, kl})
    if (!std::isfinite(v)) return false;
  return true;
}

synth::ScenePair dataset_item(const GanConfig& cfg, std::uint64_t index) {
  return synth::render(synth::sample_scene(index), cfg.stages, cfg.base, cfg.t);
}

std::vector<Tensor> parameter_list(const NamedTensors& named) {
  std::vector<Tensor> out;
  out.reserve(named.size());
  for (const auto& [n, t] : named) out.push_back(t);
  return out;
}

Trainer::Trainer(const RunConfig& config) : config_(config) {
  validate(config_.gan);
  if (config_.dataset_size == 0) throw ConfigError("config: dataset_size must be positive");
  Rng rng(config_.gan.seed);
  gen_ = Generator::create(config_.gan, rng);
  disc_ = Discriminators::create(config_.gan, rng);
  const auto& c = config_.gan;
  opt_g_ = std::make_unique<Adam>(parameter_list(gen_.named_parameters()), AdamOptions{c.lr_g, c.beta1, c.beta2});
  opt_d_ = std::make_unique<Adam>(parameter_list(disc_.named_parameters()), AdamOptions{c.lr_d, c.beta1, c.beta2});
}

LossRecord Trainer::step() {
  Rng pick = Rng::derive(~config_.gan.seed, steps_);
  std::vector<synth::ScenePair> batch;
  for (std::size_t b = 0; b < config_.gan.batch; ++b) batch.push_back(dataset_item(config_.gan, pick.below(config_.dataset_size)));
  return step(batch);
}

LossRecord Trainer::step(const std::vector<synth::ScenePair>& batch) {
  const GanConfig& cfg = config_.gan;
  const std::size_t m = cfg.stages, nb = batch.size();
  if (nb < 2) throw ConfigError("train step: batch must hold at least 2 scenes");
  Rng rng = Rng::derive(cfg.seed, steps_);

  std::vector<SampleForward> fw;
  fw.reserve(nb);
  for (const auto& item : batch) fw.push_back(forward_train(gen_, cfg, item.tokens, item.images, rng));

  std::vector<Tensor> stage_matching;
  for (std::size_t i = 0; i < m; ++i) {
    const RealEncoder frozen = gen_.encoders[i].detached();
    std::vector<Tensor> real_regions, fake_regions, words, frozen_words;
    std::vector<std::vector<std::size_t>> tokens;
    for (std::size_t b = 0; b < nb; ++b) {
      real_regions.push_back(encode_real_image(gen_.encoders[i], batch[b].images[i]));
      fake_regions.push_back(encode_real_image(frozen, fw[b].images[i]));
      words.push_back(fw[b].text.words);
      frozen_words.push_back(fw[b].text.words.detach());
      tokens.push_back(batch[b].tokens);
    }
    stage_matching.push_back(add(matching_loss(real_regions, words, tokens, cfg.attn_sharpness, cfg.tau),
                                 matching_loss(fake_regions, frozen_words, tokens, cfg.attn_sharpness, cfg.tau)));
  }
  Tensor matching = average(stage_matching);
  std::vector<Tensor> kls;
  for (const auto& f : fw) kls.push_back(f.ca.kl);
  Tensor kl = average(kls);

  LossRecord rec;
  rec.step = steps_;

  // Discriminator update on detached fakes.
  opt_d_->zero_grad();
  std::vector<Tensor> d_losses;
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<Tensor> ru, fu, rc, fc;
    for (std::size_t b = 0; b < nb; ++b) {
      const Tensor s = fw[b].text.sentence_raw.detach();
      auto real = discriminate(disc_.stages[i], batch[b].images[i], s);
      auto fake = discriminate(disc_.stages[i], fw[b].images[i].detach(), s);
      ru.push_back(real.uncond);
      rc.push_back(real.cond);
      fu.push_back(fake.uncond);
      fc.push_back(fake.cond);
    }
    d_losses.push_back(d_adv_loss(stack(ru), stack(fu), stack(rc), stack(fc)));
  }
  Tensor d_total = total_d_loss(d_losses);
  rec.d_total = rec.d_adv = d_total.item();
  if (!std::isfinite(rec.d_total)) {
    throw NumericFault("non-finite discriminator loss at step " + std::to_string(steps_),
                       LossRecord::csv_header() + "\n" + rec.csv_row());
  }
  d_total.backward();
  clip_gradients(opt_d_->parameters(), cfg.d_grad_clip);
  opt_d_->step();

  // Generator update against the refreshed discriminators.
  opt_g_->zero_grad();
  std::vector<StageLosses> stages(m);
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<Tensor> fu, fc, alr, recl, lvr, pr, sr;
    for (std::size_t b = 0; b < nb; ++b) {
      auto fake = discriminate(disc_.stages[i], fw[b].images[i], fw[b].text.sentence_raw.detach());
      fu.push_back(fake.uncond);
      fc.push_back(fake.cond);
      const StageLosses& l = fw[b].losses[i];
      alr.push_back(l.alr);
      recl.push_back(l.rec);
      lvr.push_back(l.lvr);
      pr.push_back(l.pr);
      sr.push_back(l.sr);
    }
    stages[i] = {g_adv_loss(stack(fu), stack(fc)), average(alr), average(recl), average(lvr), average(pr), average(sr)};
    rec.g_adv += stages[i].adv.item();
    rec.alr += stages[i].alr.item();
    rec.rec += stages[i].rec.item();
    rec.lvr += stages[i].lvr.item();
    rec.pr += stages[i].pr.item();
    rec.sr += stages[i].sr.item();
  }
  Tensor g_total = total_g_loss(cfg, stages, matching, kl);
  rec.g_total = g_total.item();
  rec.matching = matching.item();
  rec.kl = kl.item();
  if (!rec.all_finite()) {
    throw NumericFault("non-finite generator loss at step " + std::to_string(steps_),
                       LossRecord::csv_header() + "\n" + rec.csv_row());
  }
  g_total.backward();
  opt_g_->step();
  ++steps_;
  return rec;
}

void write_checkpoint(const std::string& path, std::uint64_t arch_hash, std::uint64_t step,
                      const NamedTensors& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint " + path);
  out.write(kMagic, sizeof kMagic);
  put(out, kVersion);
  put(out, arch_hash);
  put(out, step);
  put(out, static_cast<std::uint64_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put(out, static_cast<std::uint64_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put(out, static_cast<std::uint64_t>(t.rank()));
    for (std::size_t a = 0; a < t.rank(); ++a) put(out, static_cast<std::uint64_t>(t.dim(a)));
    out.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) throw ConfigError("failed writing checkpoint " + path);
}

std::uint64_t read_checkpoint(const std::string& path, std::uint64_t arch_hash, const NamedTensors& tensors) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint " + path);
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw DataError(path + " is not a checkpoint");
  }
  if (const auto v = take<std::uint32_t>(in, path); v != kVersion) {
    throw DataError("checkpoint " + path + " has unsupported version " + std::to_string(v));
  }
  if (take<std::uint64_t>(in, path) != arch_hash) {
    throw ConfigError("checkpoint " + path + " was written for a different model configuration");
  }
  const auto step = take<std::uint64_t>(in, path);
  const auto count = take<std::uint64_t>(in, path);
  if (count != tensors.size()) throw DataError("checkpoint " + path + " holds a different parameter set");
  std::vector<std::vector<double>> staged;
  for (const auto& [name, t] : tensors) {
    const auto len = take<std::uint64_t>(in, path);
    if (len > 4096) throw DataError("checkpoint " + path + " is corrupt");
    std::string stored(len, '\0');
    if (!in.read(stored.data(), static_cast<std::streamsize>(len))) throw DataError("checkpoint " + path + " is truncated");
    if (stored != name) throw DataError("checkpoint " + path + ": expected tensor " + name + ", found " + stored);
    const auto rank = take<std::uint64_t>(in, path);
    Shape shape;
    for (std::uint64_t a = 0; a < rank; ++a) shape.push_back(take<std::uint64_t>(in, path));
    if (shape != t.shape()) throw DataError("checkpoint " + path + ": shape mismatch for " + name);
    std::vector<double> values(t.size());
    if (!in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)))) {
      throw DataError("checkpoint " + path + " is truncated");
    }
    staged.push_back(std::move(values));
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    Tensor target = tensors[i].second;
    std::copy(staged[i].begin(), staged[i].end(), target.mutable_data().begin());
  }
  return step;
}

void Trainer::save(const std::string& path) const {
  write_checkpoint(path, architecture_hash(config_.gan), steps_, all_named(gen_, disc_));
}

void Trainer::load(const std::string& path) {
  steps_ = read_checkpoint(path, architecture_hash(config_.gan), all_named(gen_, disc_));
}

std::vector<Tensor> generate_images(const Generator& g, const GanConfig& cfg, const std::vector<std::size_t>& tokens,
                                    std::uint64_t seed) {
  Rng rng(seed);
  SampleForward out = forward_test(g, cfg, tokens, rng);
  std::vector<Tensor> images;
  for (const auto& im : out.images) images.push_back(im.detach());
  return images;
}

EvalResult evaluate(const Generator& g, const RunConfig& config) {
  const GanConfig& cfg = config.gan;
  const std::size_t n = config.eval_size;
  if (n < 2) throw ConfigError("config: eval_size must be at least 2");
  metrics::ToyFeatureExtractor extractor;
  metrics::StatsAccumulator real_stats(extractor.dim()), fake_stats(extractor.dim());
  std::vector<double> posteriors, queries, candidates;
  double agreement = 0, real_agreement = 0;
  std::size_t agreement_count = 0;
  const std::size_t d = cfg.d;
  for (std::size_t j = 0; j < n; ++j) {
    const synth::ScenePair item = dataset_item(cfg, config.eval_seed_offset + j);
    Rng rng = Rng::derive(config.eval_seed_offset, j);
    SampleForward out = forward_test(g, cfg, item.tokens, rng);
    for (std::size_t i = 1; i < cfg.stages; ++i) {
      const SemMatrix& theta = out.thetas[i - 1];
      const SemMatrix oracle = synth::oracle_ssm(item.layout[i - 1], theta.grid);
      agreement += metrics::layout_agreement(theta, oracle);
      const SemMatrix theta_star =
          compute_ssm(out.text.words.detach(), encode_real_image(g.encoders[i].detached(), item.images[i]),
                      out.text.active);
      real_agreement += metrics::layout_agreement(theta_star, oracle);
      ++agreement_count;
    }
    const Tensor fake = out.images.back().detach();
    fake_stats.add(extractor.features(fake));
    real_stats.add(extractor.features(item.images.back()));
    const auto post = metrics::toy_color_posterior(fake);
    posteriors.insert(posteriors.end(), post.begin(), post.end());
    const Tensor words = out.text.words.detach();
    for (std::size_t k = 0; k < d; ++k) {
      double s = 0;
      for (std::size_t t = 0; t < cfg.t; ++t) s += words[k * cfg.t + t];
      queries.push_back(s / static_cast<double>(cfg.t));
    }
    const Tensor regions = encode_real_image(g.encoders.back().detached(), fake);
    const std::size_t cells = regions.size() / d;
    for (std::size_t k = 0; k < d; ++k) {
      double s = 0;
      for (std::size_t c = 0; c < cells; ++c) s += regions[k * cells + c];
      candidates.push_back(s / static_cast<double>(cells));
    }
  }
  EvalResult r;
  r.layout_agreement = agreement_count ? agreement / static_cast<double>(agreement_count)
                                       : std::numeric_limits<double>::quiet_NaN();
  r.real_layout_agreement = agreement_count ? real_agreement / static_cast<double>(agreement_count)
                                            : std::numeric_limits<double>::quiet_NaN();
  r.toy_fid = metrics::fid(real_stats.stats(), fake_stats.stats());
  r.inception = metrics::inception_score(Tensor::from({n, posteriors.size() / n}, posteriors));
  std::vector<std::size_t> truth(n);
  for (std::size_t j = 0; j < n; ++j) truth[j] = j;
  Rng rng(config.eval_seed_offset);
  r.r_precision = metrics::r_precision(Tensor::from({n, d}, queries), Tensor::from({n, d}, candidates), truth,
                                       std::min<std::size_t>(100, n), rng);
  return r;
}

}  // namespace alrgan
