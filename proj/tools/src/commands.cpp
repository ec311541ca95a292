#include "commands.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "alrgan/errors.hpp"
#include "alrgan/gradient_suite.hpp"
#include "alrgan/synth.hpp"

namespace alrgan::cli {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  return out;
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
}

template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const NumericFault& e) {
    err << "numeric fault: " << e.what() << "\n" << e.diagnostic() << "\n";
    return kNumeric;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const VocabularyError& e) {
    err << "input error: " << e.what() << "\n";
    return kConfig;
  } catch (const DataError& e) {
    err << "input error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

std::string slug(const std::string& name) {
  std::string out;
  for (char c : name) {
    if (c == '+') out += '-';
    else if (c == '*') out += "-star";
    else out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

std::string eval_columns(const EvalResult& r) {
  return fmt(r.layout_agreement) + "," + fmt(r.real_layout_agreement) + "," + fmt(r.toy_fid) + "," +
         fmt(r.inception) + "," + fmt(r.r_precision);
}

}  // namespace

std::optional<std::uint64_t> seed_from_env() {
  const char* raw = std::getenv("ALR_SEED");
  if (raw == nullptr) return std::nullopt;
  const std::string_view v(raw);
  std::uint64_t seed = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), seed);
  if (v.empty() || ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("ALR_SEED must be a non-negative integer, got '" + std::string(v) + "'");
  }
  return seed;
}

RunConfig resolve_config(const ConfigSource& source) {
  RunConfig config = source.path.empty() ? RunConfig{} : load_config(source.path);
  for (const auto& kv : source.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + kv + "' is not key=value");
    set_config_value(config, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (auto seed = seed_from_env()) config.gan.seed = *seed;
  validate(config.gan);
  return config;
}

std::string metrics_csv_header() {
  return "step,layout_agreement,real_layout_agreement,toy_fid,inception,r_precision";
}

std::string metrics_csv_row(std::size_t step, const EvalResult& r) { return std::to_string(step) + "," + eval_columns(r); }

const std::vector<AblationVariant>& ablation_variants() {
  static const std::vector<AblationVariant> variants = {
      {"Base", false, false, false, false, true},
      {"Base+ALR", true, false, false, true, true},
      {"Base+ALR+PR", true, true, false, true, true},
      {"full", true, true, true, true, true},
      {"Base+ALR*", true, false, false, true, false},
  };
  return variants;
}

void apply_variant(const AblationVariant& v, GanConfig& cfg) {
  cfg.alr = v.alr;
  cfg.pr = v.pr;
  cfg.sr = v.sr;
  cfg.rec = v.rec;
  cfg.adaptive_weights = v.adaptive_weights;
}

std::string ablation_csv_header() {
  return "variant,seed,steps,alr,pr,sr,rec,adaptive_weights,layout_agreement,real_layout_agreement,toy_fid,"
         "inception,r_precision,final_alr,final_rec,final_lvr";
}

std::string sweep_csv_header() {
  return "param,value,seed,steps,layout_agreement,real_layout_agreement,toy_fid,inception,r_precision";
}

const std::vector<std::pair<std::string, std::string>>& sweep_params() {
  static const std::vector<std::pair<std::string, std::string>> params = {
      {"gamma", "gamma"}, {"eta1", "eta1"}, {"eta2", "eta2"}, {"m", "stages"}, {"lambda1", "lambda1"}};
  return params;
}

RunSummary run_training(const RunConfig& config, std::ostream* log) {
  validate(config.gan);
  const fs::path dir(config.output_dir);
  make_dir(dir);
  {
    auto cfg_out = open_output(dir / "config.cfg");
    cfg_out << serialize(config);
  }
  auto losses = open_output(dir / "losses.csv");
  auto metrics = open_output(dir / "metrics.csv");
  losses << LossRecord::csv_header() << "\n";
  metrics << metrics_csv_header() << "\n";

  Trainer trainer(config);
  RunSummary summary;
  const std::size_t steps = config.gan.steps;
  for (std::size_t s = 0; s < steps; ++s) {
    try {
      summary.last = trainer.step();
    } catch (const NumericFault&) {
      losses.flush();
      throw;
    }
    losses << summary.last.csv_row() << "\n";
    const std::size_t done = s + 1;
    if (config.eval_every > 0 && done % config.eval_every == 0 && done < steps) {
      const EvalResult r = evaluate(trainer.generator(), config);
      metrics << metrics_csv_row(done, r) << "\n" << std::flush;
      if (log) {
        *log << "step " << done << "/" << steps << "  g " << std::setprecision(4) << summary.last.g_total << "  d "
             << summary.last.d_total << "  layout_agreement " << r.layout_agreement << "  toy_fid " << r.toy_fid
             << std::endl;
      }
    }
    if (config.checkpoint_every > 0 && done % config.checkpoint_every == 0 && done < steps) {
      trainer.save((dir / ("checkpoint_" + std::to_string(done) + ".bin")).string());
    }
  }
  losses.flush();
  summary.steps = steps;
  summary.eval = evaluate(trainer.generator(), config);
  metrics << metrics_csv_row(steps, summary.eval) << "\n";
  trainer.save((dir / "checkpoint.bin").string());
  return summary;
}

int cmd_train(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    RunSummary s = run_training(config, &out);
    out << metrics_csv_header() << "\n" << metrics_csv_row(s.steps, s.eval) << "\n";
    return static_cast<int>(kOk);
  });
}

int cmd_ablate(const RunConfig& config, const AblateOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (options.seeds == 0) throw ConfigError("ablate needs at least one seed");
    validate(config.gan);
    const fs::path dir(config.output_dir);
    make_dir(dir);
    auto csv = open_output(dir / "ablation.csv");
    csv << ablation_csv_header() << "\n" << std::flush;
    std::map<std::string, std::pair<double, double>> sums;  // variant -> (layout_agreement, toy_fid)
    for (std::size_t k = 0; k < options.seeds; ++k) {
      const std::uint64_t seed = config.gan.seed + k;
      for (const auto& v : ablation_variants()) {
        RunConfig run = config;
        apply_variant(v, run.gan);
        run.gan.seed = seed;
        run.output_dir = (dir / (slug(v.name) + "_seed" + std::to_string(seed))).string();
        const RunSummary s = run_training(run, nullptr);
        csv << v.name << "," << seed << "," << s.steps << "," << v.alr << "," << v.pr << "," << v.sr << "," << v.rec
            << "," << v.adaptive_weights << "," << eval_columns(s.eval) << "," << fmt(s.last.alr) << ","
            << fmt(s.last.rec) << "," << fmt(s.last.lvr) << "\n"
            << std::flush;
        sums[v.name].first += s.eval.layout_agreement;
        sums[v.name].second += s.eval.toy_fid;
        out << v.name << " seed " << seed << ": layout_agreement " << s.eval.layout_agreement << ", toy_fid "
            << s.eval.toy_fid << std::endl;
      }
    }
    out << "mean over " << options.seeds << " seed(s):\n";
    for (const auto& v : ablation_variants()) {
      const auto [la, fid] = sums[v.name];
      out << "  " << v.name << ": layout_agreement " << la / static_cast<double>(options.seeds) << ", toy_fid "
          << fid / static_cast<double>(options.seeds) << "\n";
    }
    return static_cast<int>(kOk);
  });
}

int cmd_sweep(const RunConfig& config, const std::string& param, const std::vector<std::string>& values,
              std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    std::string key;
    for (const auto& [name, k] : sweep_params())
      if (name == param) key = k;
    if (key.empty()) throw ConfigError("unknown sweep parameter '" + param + "' (expected gamma, eta1, eta2, m or lambda1)");
    if (values.empty()) throw ConfigError("sweep needs at least one value");
    // Every value is checked before any training starts.
    std::vector<RunConfig> runs;
    for (const auto& value : values) {
      RunConfig run = config;
      set_config_value(run, key, value);
      validate(run.gan);
      run.output_dir = (fs::path(config.output_dir) / (param + "_" + value)).string();
      runs.push_back(std::move(run));
    }
    make_dir(config.output_dir);
    auto csv = open_output(fs::path(config.output_dir) / "sweep.csv");
    csv << sweep_csv_header() << "\n" << std::flush;
    for (std::size_t i = 0; i < runs.size(); ++i) {
      const RunSummary s = run_training(runs[i], nullptr);
      csv << param << "," << values[i] << "," << runs[i].gan.seed << "," << s.steps << "," << eval_columns(s.eval)
          << "\n"
          << std::flush;
      out << param << "=" << values[i] << ": layout_agreement " << s.eval.layout_agreement << ", toy_fid "
          << s.eval.toy_fid << std::endl;
    }
    return static_cast<int>(kOk);
  });
}

int cmd_gradcheck(const GradcheckOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    GradientSuiteOptions suite;
    if (options.tol) {
      if (!(*options.tol > 0)) throw ConfigError("--tol must be positive");
      suite.op_tolerance = suite.composite_tolerance = *options.tol;
    }
    if (options.points == 0) throw ConfigError("--points must be positive");
    suite.points = options.points;
    suite.seed = options.seed;
    std::vector<std::string> failed;
    for (const auto& r : run_gradient_suite(suite)) {
      out << std::left << std::setw(26) << r.name << (r.composite ? " composite " : " op        ") << std::scientific
          << std::setprecision(2) << r.max_rel_err << " <= " << r.tolerance << (r.passed ? "  ok" : "  FAIL")
          << std::defaultfloat << "\n";
      if (!r.passed) failed.push_back(r.name);
    }
    if (failed.empty()) {
      out << "all gradient checks passed\n";
      return static_cast<int>(kOk);
    }
    err << "gradient check failed for:";
    for (const auto& n : failed) err << " " << n;
    err << "\n";
    return static_cast<int>(kFailure);
  });
}

int cmd_eval(const RunConfig& config, const std::string& checkpoint, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    Trainer trainer(config);
    trainer.load(checkpoint);
    const EvalResult r = evaluate(trainer.generator(), config);
    out << metrics_csv_header() << "\n" << metrics_csv_row(trainer.steps_done(), r) << "\n";
    return static_cast<int>(kOk);
  });
}

void write_ppm(const std::string& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw DimensionError("write_ppm: expected [3, h, w], got " + to_string(image.shape()));
  }
  const std::size_t h = image.dim(1), w = image.dim(2);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path);
  out << "P6\n" << w << " " << h << "\n255\n";
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = std::clamp(image[(c * h + y) * w + x], -1.0, 1.0);
        out.put(static_cast<char>(static_cast<unsigned char>(std::lround((v + 1.0) * 127.5))));
      }
}

int cmd_gen(const RunConfig& config, const GenOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    Trainer trainer(config);
    if (!options.checkpoint.empty()) trainer.load(options.checkpoint);
    const std::vector<std::size_t> tokens = options.caption.empty()
                                                ? dataset_item(config.gan, options.index).tokens
                                                : synth::parse_caption(options.caption, config.gan.t);
    const auto images = generate_images(trainer.generator(), config.gan, tokens, options.noise_seed);
    out << "caption: " << synth::caption_text(tokens) << "\n";
    for (std::size_t i = 0; i < images.size(); ++i) {
      const std::string path = options.prefix + "_stage" + std::to_string(i) + ".ppm";
      write_ppm(path, images[i]);
      out << path << " (" << images[i].dim(1) << "x" << images[i].dim(2) << ")\n";
    }
    return static_cast<int>(kOk);
  });
}

}  // namespace alrgan::cli
