#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "alrgan/config.hpp"
#include "alrgan/gan.hpp"
#include "alrgan/optim.hpp"
#include "alrgan/synth.hpp"

namespace alrgan {

/// All loss components of one training step. Stage-summed where a term is
/// per stage.
struct LossRecord {
  std::size_t step = 0;
  double g_total = 0, d_total = 0;
  double g_adv = 0, d_adv = 0;
  double alr = 0, rec = 0, lvr = 0, pr = 0, sr = 0;
  double matching = 0, kl = 0;

  static std::string csv_header();
  std::string csv_row() const;
  bool all_finite() const;
};

/// Scene used for dataset index `index`; shared by every run regardless of
/// the training seed.
synth::ScenePair dataset_item(const GanConfig& cfg, std::uint64_t index);

/// Owns the model, both optimizers and the step counter. Every step is a
/// pure function of (config, parameters, step index).
class Trainer {
 public:
  explicit Trainer(const RunConfig& config);

  /// Draws a batch from the dataset and performs one D update followed by
  /// one G update. Throws NumericFault, with the partial loss record as
  /// diagnostic, when a loss is not finite.
  LossRecord step();
  LossRecord step(const std::vector<synth::ScenePair>& batch);

  std::size_t steps_done() const { return steps_; }
  const RunConfig& config() const { return config_; }
  const Generator& generator() const { return gen_; }
  const Discriminators& discriminators() const { return disc_; }
  Generator& generator() { return gen_; }

  /// Versioned binary checkpoint: magic, version, architecture hash, step,
  /// then named tensors.
  void save(const std::string& path) const;
  /// Throws ConfigError when the checkpoint's architecture hash differs and
  /// DataError when the file is malformed.
  void load(const std::string& path);

 private:
  RunConfig config_;
  Generator gen_;
  Discriminators disc_;
  std::unique_ptr<Adam> opt_g_, opt_d_;
  std::size_t steps_ = 0;
};

/// The generator-side parameters (encoders, text side and weight nets
/// included) and the discriminator parameters as plain lists.
std::vector<Tensor> parameter_list(const NamedTensors& named);

/// Writes `tensors` in checkpoint form / reads them back into tensors with
/// matching names and shapes.
void write_checkpoint(const std::string& path, std::uint64_t arch_hash, std::uint64_t step,
                      const NamedTensors& tensors);
std::uint64_t read_checkpoint(const std::string& path, std::uint64_t arch_hash, const NamedTensors& tensors);

struct EvalResult {
  double layout_agreement = 0;  // NaN with a single stage
  /// The same measure for theta* computed from the real images.
  double real_layout_agreement = 0;
  double toy_fid = 0;
  double inception = 0;
  double r_precision = 0;
};

/// Test-mode metrics over `eval_size` held-out scenes.
EvalResult evaluate(const Generator& g, const RunConfig& config);

/// Test-mode images for `tokens`, one per stage, from noise stream `seed`.
std::vector<Tensor> generate_images(const Generator& g, const GanConfig& cfg, const std::vector<std::size_t>& tokens,
                                    std::uint64_t seed);

}  // namespace alrgan
