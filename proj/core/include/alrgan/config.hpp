#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace alrgan {

/// Model, objective and optimisation settings.
struct GanConfig {
  std::size_t stages = 3;      // m
  std::size_t base = 8;        // side of the first stage image; doubles per stage
  std::size_t d = 16;          // feature / word embedding width
  std::size_t d_s = 16;        // sentence embedding width
  std::size_t d_z = 16;        // noise width
  std::size_t t = 10;          // caption slots
  std::size_t batch = 4;
  std::size_t steps = 5000;

  double gamma = 0.2;
  double eta1 = 1.0;
  double eta2 = 1.0;
  double lambda1 = 0.1;
  double lambda2 = 5.0;
  double kl_weight = 1.0;
  double tau = 0.1;            // matching-loss temperature
  double attn_sharpness = 5.0; // word-to-region attention sharpness in the matching loss

  double lr_g = 2e-4;
  double lr_d = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double d_grad_clip = 5.0;    // global gradient-norm clip for the discriminators

  bool alr = true;
  bool pr = true;
  bool sr = true;
  bool rec = true;
  bool adaptive_weights = true;  // false selects the plain |theta - theta*|_F / (N D) variant
  bool kl = true;
  bool stop_grad_star = false;   // detach theta* / H* inside ALR and LVR

  std::uint64_t seed = 0;
};

/// GanConfig plus the run surroundings.
struct RunConfig {
  GanConfig gan;
  std::size_t dataset_size = 2000;
  std::size_t eval_size = 256;
  std::uint64_t eval_seed_offset = 1000000;
  std::size_t eval_every = 1000;
  std::size_t checkpoint_every = 0;  // 0: only at the end
  std::string output_dir = "run";
};

/// Parses "key = value" lines; '#' starts a comment. Unknown keys, duplicate
/// keys and malformed values throw ConfigError naming the line.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::string& path);

/// Applies one override, e.g. from a sweep ("gamma", "0.5").
void set_config_value(RunConfig& config, std::string_view key, std::string_view value);
std::string get_config_value(const RunConfig& config, std::string_view key);
std::vector<std::string> config_keys();

/// Every key in a fixed order; parse_config(serialize(c)) reproduces c.
std::string serialize(const RunConfig& config);

/// Throws ConfigError unless stages >= 1, widths > 0, rates >= 0 and so on.
void validate(const GanConfig& config);

/// FNV-1a over the canonical serialisation of the model-shaping fields
/// (everything except step counts, learning rates and the seed).
std::uint64_t architecture_hash(const GanConfig& config);

}  // namespace alrgan
