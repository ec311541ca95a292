// Acceptance run: one PASS/FAIL line per criterion. Exit status is non-zero
// when any criterion fails.
#include <algorithm>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "CLI11.hpp"
#include "alrgan/alr.hpp"
#include "alrgan/gan.hpp"
#include "alrgan/gradient_suite.hpp"
#include "alrgan/metrics.hpp"
#include "alrgan/ops.hpp"
#include "alrgan/optim.hpp"
#include "alrgan/random.hpp"
#include "alrgan/runtime.hpp"
#include "alrgan/ssm.hpp"
#include "alrgan/train.hpp"
#include "commands.hpp"

using namespace alrgan;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;
  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    notes.push_back(std::string(ok ? "" : "FAILED ") + what);
  }
};

std::string num(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

std::vector<std::map<std::string, std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  std::vector<std::map<std::string, std::string>> rows;
  std::string line;
  if (!std::getline(in, line)) return rows;
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) header.push_back(cell);
  }
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::map<std::string, std::string> row;
    std::size_t k = 0;
    for (std::string cell; std::getline(ss, cell, ',') && k < header.size(); ++k) row[header[k]] = cell;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ------------------------------------------------------------- criterion 1

Outcome gradient_suite() {
  Outcome o;
  const double start = cpu_seconds();
  const auto results = run_gradient_suite();
  const double elapsed = cpu_seconds() - start;
  double worst_op = 0, worst_composite = 0;
  std::size_t ops = 0, composites = 0;
  std::vector<std::string> failed;
  for (const auto& r : results) {
    (r.composite ? worst_composite : worst_op) = std::max(r.composite ? worst_composite : worst_op, r.max_rel_err);
    ++(r.composite ? composites : ops);
    if (!r.passed) failed.push_back(r.name);
  }
  std::string failures;
  for (const auto& n : failed) failures += " " + n;
  o.check(failed.empty(), std::to_string(ops) + " ops (worst " + num(worst_op, 2) + " <= 1e-4) and " +
                              std::to_string(composites) + " composites (worst " + num(worst_composite, 2) +
                              " <= 1e-3) at 10 points" + (failed.empty() ? "" : "; failing:" + failures));
  o.check(elapsed < 120.0, "cpu time " + num(elapsed, 3) + " s < 120 s");
  return o;
}

// ------------------------------------------------------------- criterion 2

SemMatrix random_column_stochastic(Rng& rng, std::size_t t, std::size_t n, double spread) {
  std::vector<double> v(t * n);
  for (std::size_t k = 0; k < n; ++k) {
    double total = 0;
    for (std::size_t j = 0; j < t; ++j) total += (v[j * n + k] = std::exp(spread * rng.normal()));
    for (std::size_t j = 0; j < t; ++j) v[j * n + k] /= total;
  }
  return SemMatrix{Tensor::from({t, n}, v), GridDims{1, n}};
}

Outcome alr_structure() {
  Outcome o;
  Rng rng(5);
  std::size_t bad = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t t = 1 + rng.below(8), n = 1 + rng.below(16);
    const double gamma = rng.uniform(0.0, 1.0), spread = rng.uniform(0.1, 4.0);
    ResidualSplit s =
        split_residual(random_column_stochastic(rng, t, n, spread), random_column_stochastic(rng, t, n, spread), gamma);
    for (std::size_t i = 0; i < s.r.size(); ++i) {
      const double e = s.easy.data()[i], h = s.hard.data()[i], r = s.r.data()[i];
      const bool ok = e + h == r && e * h == 0.0 && r >= 0 && (e == 0 || e < gamma) && (h == 0 || h >= gamma);
      if (!ok) ++bad;
    }
  }
  o.check(bad == 0, "partition invariants on 1000 random splits (" + std::to_string(bad) + " violations)");

  std::size_t nonzero = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Rng r = Rng::derive(11, static_cast<std::uint64_t>(trial));
    Tensor w = r.normal_tensor({16, 6}), h = r.normal_tensor({16, 3, 3});
    SemMatrix theta = compute_ssm(w, h);
    ResidualSplit s = split_residual(theta, theta, 0.2);
    WeightNet a = WeightNet::create(16, 6, r), b = WeightNet::create(16, 6, r);
    AlrTerms terms = alr_terms(s, weight_forward(a, s.easy, h), weight_forward(b, s.hard, h), 16);
    if (terms.easy.item() != 0.0 || terms.hard.item() != 0.0) ++nonzero;
  }
  o.check(nonzero == 0, "theta = theta* gives exactly 0 for both residual terms (100 cases, " +
                            std::to_string(nonzero) + " nonzero)");

  // N = 16, T = 8, D = 32 with N(0, 1/D) entries, weight nets alone.
  Rng irng(2024);
  const double sd = 1.0 / std::sqrt(32.0);
  auto draw = [&](Shape shape) {
    Tensor t = irng.normal_tensor(std::move(shape));
    for (double& v : t.mutable_data()) v *= sd;
    return t;
  };
  Tensor w = draw({32, 8}), h = draw({32, 16}), h_star = draw({32, 16});
  ResidualSplit split = split_residual(compute_ssm(w, h, GridDims{4, 4}), compute_ssm(w, h_star, GridDims{4, 4}), 0.2);
  const auto hard_count =
      std::count_if(split.hard.data().begin(), split.hard.data().end(), [](double v) { return v != 0; });
  Rng nrng(99);
  WeightNet phi_a = WeightNet::create(32, 8, nrng), phi_b = WeightNet::create(32, 8, nrng);
  std::vector<Tensor> params = phi_a.parameters();
  for (const Tensor& p : phi_b.parameters()) params.push_back(p);
  Adam adam(params, AdamOptions{.lr = 1e-2, .beta1 = 0.9, .beta2 = 0.999});
  double first = 0, last = 0;
  int reached = -1;
  for (int step = 0; step <= 2000; ++step) {
    AlrTerms terms = alr_terms(split, weight_forward(phi_a, split.easy.detach(), h_star),
                               weight_forward(phi_b, split.hard.detach(), h_star), 32);
    last = terms.order.item();
    if (step == 0) first = last;
    if (reached < 0 && last < 0.1) reached = step;
    if (step == 2000) break;
    adam.zero_grad();
    terms.total.backward();
    adam.step();
  }
  o.check(last < 0.1, "ordering term " + num(first) + " -> " + num(last) + " (< 0.1 first at step " +
                          std::to_string(reached) + ", " + std::to_string(hard_count) + " hard entries)");
  return o;
}

// ------------------------------------------------------------- criterion 3

metrics::GaussianStats random_stats(Rng& rng, int d) {
  Eigen::MatrixXd a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = rng.normal();
  Eigen::VectorXd mu(d);
  for (int i = 0; i < d; ++i) mu[i] = rng.normal();
  return {mu, a * a.transpose() + 0.1 * Eigen::MatrixXd::Identity(d, d)};
}

Eigen::MatrixXd newton_schulz_sqrt(const Eigen::MatrixXd& a) {
  const double norm = a.norm();
  const auto d = a.rows();
  Eigen::MatrixXd y = a / norm, z = Eigen::MatrixXd::Identity(d, d);
  for (int it = 0; it < 200; ++it) {
    Eigen::MatrixXd t = 0.5 * (3.0 * Eigen::MatrixXd::Identity(d, d) - z * y);
    y = y * t;
    z = t * z;
  }
  return y * std::sqrt(norm);
}

Outcome metric_oracles() {
  Outcome o;
  using metrics::GaussianStats;
  Rng rng(1);
  GaussianStats a = random_stats(rng, 4);
  const double same = metrics::fid(a, a);
  o.check(std::abs(same) <= 1e-9, "fid(identical) = " + num(same, 3));
  auto scalar = [](double mu, double var) {
    return GaussianStats{Eigen::VectorXd::Constant(1, mu), Eigen::MatrixXd::Constant(1, 1, var)};
  };
  const double shift = metrics::fid(scalar(0, 1), scalar(1, 1)), spread = metrics::fid(scalar(0, 1), scalar(0, 4));
  o.check(std::abs(shift - 1) <= 1e-9 && std::abs(spread - 1) <= 1e-9,
          "1-D closed forms " + num(shift, 12) + ", " + num(spread, 12));
  double worst = 0;
  Rng srng(3);
  for (int trial = 0; trial < 100; ++trial) {
    GaussianStats x = random_stats(srng, 3), y = random_stats(srng, 3);
    const double oracle = (x.mean - y.mean).squaredNorm() + x.cov.trace() + y.cov.trace() -
                          2.0 * newton_schulz_sqrt(x.cov * y.cov).trace();
    worst = std::max(worst, std::abs(metrics::fid(x, y) - oracle));
  }
  o.check(worst <= 1e-6, "eigen sqrt vs Newton-Schulz over 100 3-dim cases, worst " + num(worst, 2));

  const double uniform = metrics::inception_score(Tensor::full({7, 5}, 0.2));
  o.check(std::abs(uniform - 1) <= 1e-9, "IS(uniform) = " + num(uniform, 12));
  const std::size_t c = 6;
  Tensor onehot = Tensor::zeros({c, c});
  for (std::size_t i = 0; i < c; ++i) onehot.mutable_data()[i * c + i] = 1.0;
  const double balanced = metrics::inception_score(onehot);
  o.check(std::abs(balanced - 6) <= 1e-6, "IS(one-hot balanced, C=6) = " + num(balanced, 12));

  Rng rrng(7);
  const std::size_t n = 10000, d = 16;
  std::vector<double> q, cand;
  auto unit = [&](std::vector<double>& out) {
    std::vector<double> v(d);
    double s = 0;
    for (double& x : v) s += (x = rrng.normal()) * x;
    for (double& x : v) out.push_back(x / std::sqrt(s));
  };
  for (std::size_t i = 0; i < n; ++i) {
    unit(q);
    unit(cand);
  }
  std::vector<std::size_t> truth(n);
  for (std::size_t i = 0; i < n; ++i) truth[i] = i;
  const double rp = metrics::r_precision(Tensor::from({n, d}, q), Tensor::from({n, d}, cand), truth, 100, rrng);
  o.check(std::abs(rp - 1.0) <= 1.0, "R-precision at chance (R=100, 10^4 trials) = " + num(rp) + "%");
  return o;
}

// ---------------------------------------------------------- criteria 4, 5

constexpr std::size_t kRequiredSteps = 5000;

RunConfig experiment_config(const fs::path& dir, std::size_t steps) {
  RunConfig c;
  c.gan.stages = 3;
  c.gan.steps = steps;
  c.output_dir = dir.string();
  return c;
}

Outcome ablation(const fs::path& workdir, std::size_t steps) {
  Outcome o;
  const fs::path dir = workdir / "ablation";
  fs::remove_all(dir);
  std::ostringstream log, err;
  const double start = cpu_seconds();
  const int code = cli::cmd_ablate(experiment_config(dir, steps), {3}, log, err);
  const double elapsed = cpu_seconds() - start;
  if (code != cli::kOk) {
    o.check(false, "ablate exited " + std::to_string(code) + ": " + err.str());
    return o;
  }
  std::map<std::string, std::pair<double, double>> mean;
  std::map<std::string, int> count;
  for (auto& row : read_csv(dir / "ablation.csv")) {
    mean[row["variant"]].first += std::stod(row["layout_agreement"]);
    mean[row["variant"]].second += std::stod(row["toy_fid"]);
    ++count[row["variant"]];
  }
  for (auto& [k, v] : mean) {
    v.first /= count[k];
    v.second /= count[k];
  }
  std::string table;
  for (const auto& v : cli::ablation_variants()) {
    table += " " + v.name + " la " + num(mean[v.name].first) + " fid " + num(mean[v.name].second) + ";";
  }
  o.notes.push_back("means over 3 seeds:" + table);
  o.check(steps >= kRequiredSteps, std::to_string(steps) + " steps per run (>= 5000 required)");
  const auto& base = mean["Base"];
  const auto& alr = mean["Base+ALR"];
  const auto& pr = mean["Base+ALR+PR"];
  const auto& full = mean["full"];
  const auto& fixed = mean["Base+ALR*"];
  o.check(alr.first >= base.first + 0.05,
          "layout_agreement Base+ALR - Base = " + num(alr.first - base.first) + " (>= +0.05)");
  o.check(alr.second < base.second, "toy_fid Base+ALR < Base (" + num(alr.second) + " vs " + num(base.second) + ")");
  o.check(pr.first >= alr.first && pr.second <= alr.second, "Base+ALR+PR does not degrade Base+ALR");
  o.check(full.first >= pr.first && full.second <= pr.second, "full does not degrade Base+ALR+PR");
  o.check(full.first >= alr.first && full.second <= alr.second, "full does not degrade Base+ALR");
  o.check(alr.first >= fixed.first && alr.second <= fixed.second, "adaptive ALR does not degrade fixed-weight ALR*");
  o.check(elapsed < 4 * 3600.0, "cpu time " + num(elapsed / 60.0, 3) + " min < 240 min");
  return o;
}

Outcome gamma_sweep(const fs::path& workdir, std::size_t steps) {
  Outcome o;
  const fs::path dir = workdir / "gamma_sweep";
  fs::remove_all(dir);
  std::ostringstream log, err;
  const int code = cli::cmd_sweep(experiment_config(dir, steps), "gamma", {"0", "0.2", "0.8"}, log, err);
  if (code != cli::kOk) {
    o.check(false, "sweep exited " + std::to_string(code) + ": " + err.str());
    return o;
  }
  std::map<std::string, double> la;
  for (auto& row : read_csv(dir / "sweep.csv")) la[row["value"]] = std::stod(row["layout_agreement"]);
  o.check(steps >= kRequiredSteps, std::to_string(steps) + " steps per run, seed 0 shared");
  o.check(la["0.2"] >= la["0"] && la["0.2"] >= la["0.8"],
          "layout_agreement gamma=0: " + num(la["0"]) + ", 0.2: " + num(la["0.2"]) + ", 0.8: " + num(la["0.8"]));
  return o;
}

// ------------------------------------------------------------- criterion 6

Outcome mode_asymmetry(const fs::path& workdir) {
  Outcome o;
  const fs::path dir = workdir / "mode";
  fs::remove_all(dir);
  RunConfig config = experiment_config(dir, 50);
  cli::run_training(config, nullptr);
  const std::string ckpt = (dir / "checkpoint.bin").string();
  Trainer a(config), b(config);
  a.load(ckpt);
  b.load(ckpt);
  const auto tokens = dataset_item(config.gan, 3).tokens;
  const auto first = generate_images(a.generator(), config.gan, tokens, 7);
  const auto second = generate_images(b.generator(), config.gan, tokens, 7);
  bool identical = first.size() == second.size();
  std::string sides;
  for (std::size_t i = 0; identical && i < first.size(); ++i) {
    identical = std::equal(first[i].data().begin(), first[i].data().end(), second[i].data().begin());
    sides += (i ? "/" : "") + std::to_string(first[i].dim(1));
  }
  o.check(identical, "two loads of one checkpoint give bit-identical images for one noise seed");
  o.check(sides == "8/16/32", "stage sides " + sides);

  Rng rng(7);
  SampleForward f = forward_test(a.generator(), config.gan, tokens, rng);
  Tensor loss = sum(f.images.back());
  loss.backward();
  std::size_t touched = 0;
  for (const auto& p : a.generator().encoder_parameters()) touched += p.has_grad() ? 1 : 0;
  o.check(f.real_features.empty() && f.losses.empty() && touched == 0,
          "test mode takes no real image and reaches no real-image encoder parameter");

  cli::GenOptions g;
  g.checkpoint = ckpt;
  g.index = 3;
  g.noise_seed = 7;
  std::ostringstream out, err;
  g.prefix = (dir / "x").string();
  const int c1 = cli::cmd_gen(config, g, out, err);
  g.prefix = (dir / "y").string();
  const int c2 = cli::cmd_gen(config, g, out, err);
  bool same_files = c1 == 0 && c2 == 0;
  for (int i = 0; same_files && i < 3; ++i) {
    const std::string s = "_stage" + std::to_string(i) + ".ppm";
    same_files = read_bytes(dir / ("x" + s)) == read_bytes(dir / ("y" + s));
  }
  o.check(same_files, "gen writes byte-identical PPM files on repeat");
  return o;
}

// ------------------------------------------------------------- criterion 7

Outcome determinism(const fs::path& workdir) {
  Outcome o;
  std::ostringstream out, err;
  const fs::path a = workdir / "det_a", b = workdir / "det_b";
  fs::remove_all(a);
  fs::remove_all(b);
  const int ca = cli::cmd_train(experiment_config(a, 100), out, err);
  const int cb = cli::cmd_train(experiment_config(b, 100), out, err);
  o.check(ca == 0 && cb == 0, "both train runs exit 0");
  const std::string la = read_bytes(a / "losses.csv"), lb = read_bytes(b / "losses.csv");
  const auto rows = std::count(la.begin(), la.end(), '\n');
  o.check(rows == 101, std::to_string(rows - 1) + " loss rows");
  o.check(!la.empty() && la == lb, "losses.csv byte-identical (" + std::to_string(la.size()) + " bytes)");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Acceptance criteria"};
  std::string workdir = (fs::temp_directory_path() / "alrgan_acceptance").string();
  std::vector<int> only;
  std::size_t steps = kRequiredSteps;
  app.add_option("--workdir", workdir, "Directory for training runs");
  app.add_option("--only", only, "Criteria to run (default: all)")->delimiter(',');
  app.add_option("--experiment-steps", steps, "Steps per run for criteria 4 and 5; fewer than 5000 fails them");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(workdir);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient suite", gradient_suite},
      {"ALR structure", alr_structure},
      {"metric oracles", metric_oracles},
      {"ablation direction", [&] { return ablation(workdir, steps); }},
      {"gamma sweep shape", [&] { return gamma_sweep(workdir, steps); }},
      {"mode asymmetry", [&] { return mode_asymmetry(workdir); }},
      {"determinism", [&] { return determinism(workdir); }},
  };
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.check(false, std::string("exception: ") + e.what());
    }
    all = all && o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << id << " (" << criteria[i].first << ")";
    for (const auto& n : o.notes) std::cout << "\n        " << n;
    std::cout << std::endl;
  }
  return all ? 0 : 1;
}
