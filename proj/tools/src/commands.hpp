#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "alrgan/config.hpp"
#include "alrgan/train.hpp"

namespace alrgan::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kConfig = 2, kNumeric = 3 };

/// Where a command's configuration comes from: an optional file, then
/// "key=value" overrides in order, then the ALR_SEED environment variable.
struct ConfigSource {
  std::string path;
  std::vector<std::string> overrides;
};

RunConfig resolve_config(const ConfigSource& source);

/// Reads ALR_SEED; throws ConfigError when it is set but not an integer.
std::optional<std::uint64_t> seed_from_env();

std::string metrics_csv_header();
std::string metrics_csv_row(std::size_t step, const EvalResult& r);

struct AblationVariant {
  std::string name;
  bool alr, pr, sr, rec, adaptive_weights;
};

/// Base, Base+ALR, Base+ALR+PR, full, Base+ALR* (fixed-weight ALR).
const std::vector<AblationVariant>& ablation_variants();
void apply_variant(const AblationVariant& v, GanConfig& cfg);

std::string ablation_csv_header();
std::string sweep_csv_header();

/// Sweepable parameter names and the config key each one sets.
const std::vector<std::pair<std::string, std::string>>& sweep_params();

struct RunSummary {
  std::size_t steps = 0;
  EvalResult eval;
  LossRecord last;
};

/// Trains `config.gan.steps` steps into `config.output_dir` (losses.csv,
/// metrics.csv, config.cfg, checkpoint.bin) and returns the final metrics.
/// Throws on failure; `log` may be null.
RunSummary run_training(const RunConfig& config, std::ostream* log);

// Command entry points. Each returns a process exit code and reports errors
// on `err`.
int cmd_train(const RunConfig& config, std::ostream& out, std::ostream& err);

struct AblateOptions {
  std::size_t seeds = 3;
};
int cmd_ablate(const RunConfig& config, const AblateOptions& options, std::ostream& out, std::ostream& err);

int cmd_sweep(const RunConfig& config, const std::string& param, const std::vector<std::string>& values,
              std::ostream& out, std::ostream& err);

struct GradcheckOptions {
  std::optional<double> tol;
  std::size_t points = 10;
  std::uint64_t seed = 2024;
};
int cmd_gradcheck(const GradcheckOptions& options, std::ostream& out, std::ostream& err);

int cmd_eval(const RunConfig& config, const std::string& checkpoint, std::ostream& out, std::ostream& err);

struct GenOptions {
  std::string checkpoint;  // empty: freshly initialised generator
  std::string caption;     // empty: use the dataset scene `index`
  std::uint64_t index = 0;
  std::uint64_t noise_seed = 0;
  std::string prefix = "sample";
};
int cmd_gen(const RunConfig& config, const GenOptions& options, std::ostream& out, std::ostream& err);

/// Binary P6 pixmap of a [3, h, w] image with values in [-1, 1].
void write_ppm(const std::string& path, const Tensor& image);

}  // namespace alrgan::cli
