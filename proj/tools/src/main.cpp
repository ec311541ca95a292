#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "alrgan/errors.hpp"
#include "alrgan/runtime.hpp"
#include "commands.hpp"

using namespace alrgan;

namespace {

struct CommonOptions {
  cli::ConfigSource source;
  std::optional<std::size_t> steps;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool training) {
  cmd->add_option("-c,--config", o.source.path, "Config file (key = value lines)");
  cmd->add_option("-s,--set", o.source.overrides, "Override a config key, e.g. --set gamma=0.5");
  if (training) {
    cmd->add_option("--steps", o.steps, "Training steps per run");
    cmd->add_option("-o,--out", o.out, "Output directory");
  }
}

RunConfig resolve(const CommonOptions& o) {
  cli::ConfigSource source = o.source;
  if (o.steps) source.overrides.push_back("steps=" + std::to_string(*o.steps));
  if (o.out) source.overrides.push_back("output_dir=" + *o.out);
  return cli::resolve_config(source);
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"alrgan: adaptive layout refinement GAN on synthetic scenes"};
  app.require_subcommand(1);

  CommonOptions train_opts, ablate_opts, sweep_opts, eval_opts, gen_opts;
  auto* train = app.add_subcommand("train", "Train one model; writes losses.csv, metrics.csv and checkpoint.bin");
  add_common(train, train_opts, true);

  auto* ablate = app.add_subcommand("ablate", "Train the five ablation variants per seed; writes ablation.csv");
  add_common(ablate, ablate_opts, true);
  cli::AblateOptions ablate_extra;
  ablate->add_option("--seeds", ablate_extra.seeds, "Number of seeds, counted up from the config seed");

  auto* sweep = app.add_subcommand("sweep", "One run per value of a parameter; writes sweep.csv");
  add_common(sweep, sweep_opts, true);
  std::string sweep_param;
  std::vector<std::string> sweep_values;
  sweep->add_option("-p,--param", sweep_param, "gamma, eta1, eta2, m or lambda1")->required();
  sweep->add_option("-v,--values", sweep_values, "Comma-separated values")->required()->delimiter(',');

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every op and composite loss");
  cli::GradcheckOptions gc;
  gradcheck->add_option("--tol", gc.tol, "Tolerance for every case (default 1e-4 ops, 1e-3 composites)");
  gradcheck->add_option("--points", gc.points, "Random points per case");
  gradcheck->add_option("--seed", gc.seed, "Seed of the random points");

  auto* eval = app.add_subcommand("eval", "Metrics of a checkpoint on the held-out scenes");
  add_common(eval, eval_opts, false);
  std::string eval_ckpt;
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();

  auto* gen = app.add_subcommand("gen", "Test-mode images as PPM files, one per stage");
  add_common(gen, gen_opts, false);
  cli::GenOptions g;
  gen->add_option("--checkpoint", g.checkpoint, "Checkpoint file (default: untrained generator)");
  gen->add_option("--caption", g.caption, "Caption, e.g. \"red circle middle-center plain\"");
  gen->add_option("--index", g.index, "Dataset scene to caption when --caption is absent");
  gen->add_option("--noise-seed", g.noise_seed, "Noise stream for the sample");
  gen->add_option("--prefix", g.prefix, "Output path prefix");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::kConfig;
  }

  if (*gradcheck) return cli::cmd_gradcheck(gc, std::cout, std::cerr);

  auto with_config = [](const CommonOptions& o, auto&& run) -> int {
    RunConfig config;
    try {
      config = resolve(o);
    } catch (const ConfigError& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return cli::kConfig;
    }
    return run(config);
  };
  if (*train) return with_config(train_opts, [](const RunConfig& c) { return cli::cmd_train(c, std::cout, std::cerr); });
  if (*ablate)
    return with_config(ablate_opts,
                       [&](const RunConfig& c) { return cli::cmd_ablate(c, ablate_extra, std::cout, std::cerr); });
  if (*sweep)
    return with_config(sweep_opts, [&](const RunConfig& c) {
      return cli::cmd_sweep(c, sweep_param, sweep_values, std::cout, std::cerr);
    });
  if (*eval)
    return with_config(eval_opts, [&](const RunConfig& c) { return cli::cmd_eval(c, eval_ckpt, std::cout, std::cerr); });
  return with_config(gen_opts, [&](const RunConfig& c) { return cli::cmd_gen(c, g, std::cout, std::cerr); });
}
