#include <benchmark/benchmark.h>

#include "alrgan/alr.hpp"
#include "alrgan/metrics.hpp"
#include "alrgan/ops.hpp"
#include "alrgan/random.hpp"
#include "alrgan/runtime.hpp"
#include "alrgan/ssm.hpp"
#include "alrgan/train.hpp"

using namespace alrgan;

namespace {

void BM_Conv3x3ForwardBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto side = static_cast<std::size_t>(state.range(1));
  Rng rng(1);
  Tensor x = rng.normal_tensor({c, side, side});
  Tensor w = rng.normal_tensor({c, c, 3, 3});
  Tensor b = rng.normal_tensor({c});
  x.set_requires_grad(true);
  w.set_requires_grad(true);
  for (auto _ : state) {
    x.zero_grad();
    w.zero_grad();
    Tensor y = sum(conv3x3(x, w, b));
    y.backward();
    benchmark::DoNotOptimize(w.grad().data());
  }
}
BENCHMARK(BM_Conv3x3ForwardBackward)->Args({16, 8})->Args({16, 16})->Args({16, 32});

void BM_SsmAndAlr(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  Tensor words = rng.normal_tensor({16, 10});
  Tensor h = rng.normal_tensor({16, side, side});
  Tensor h_star = rng.normal_tensor({16, side, side});
  WeightNet a = WeightNet::create(16, 10, rng), b = WeightNet::create(16, 10, rng);
  h.set_requires_grad(true);
  for (auto _ : state) {
    h.zero_grad();
    ResidualSplit split = split_residual(compute_ssm(words, h), compute_ssm(words, h_star), 0.2);
    Tensor loss = alr_loss(split, weight_forward(a, split.easy, h_star), weight_forward(b, split.hard, h_star), 16);
    loss.backward();
    benchmark::DoNotOptimize(h.grad().data());
  }
}
BENCHMARK(BM_SsmAndAlr)->Arg(8)->Arg(16);

void BM_TrainStep(benchmark::State& state) {
  RunConfig config;
  config.gan.stages = static_cast<std::size_t>(state.range(0));
  Trainer trainer(config);
  for (auto _ : state) benchmark::DoNotOptimize(trainer.step().g_total);
}
BENCHMARK(BM_TrainStep)->Arg(2)->Arg(3)->Unit(benchmark::kMillisecond);

void BM_Fid(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  const auto a = metrics::gaussian_stats(rng.normal_tensor({n, 16}));
  const auto b = metrics::gaussian_stats(rng.normal_tensor({n, 16}));
  for (auto _ : state) benchmark::DoNotOptimize(metrics::fid(a, b));
}
BENCHMARK(BM_Fid)->Arg(256);

void BM_Evaluate(benchmark::State& state) {
  RunConfig config;
  config.eval_size = static_cast<std::size_t>(state.range(0));
  Trainer trainer(config);
  for (auto _ : state) benchmark::DoNotOptimize(evaluate(trainer.generator(), config).toy_fid);
}
BENCHMARK(BM_Evaluate)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
