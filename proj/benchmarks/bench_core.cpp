#include <benchmark/benchmark.h>

#include "dastack/adapt.hpp"
#include "dastack/discrepancy.hpp"
#include "dastack/linalg.hpp"
#include "dastack/lowrank.hpp"

using namespace dastack;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng = make_rng(seed, "bench");
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = gauss(rng);
  return m;
}

void BM_Svd(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = random_matrix(n, n, 1);
  for (auto _ : state) benchmark::DoNotOptimize(svd(a));
}
BENCHMARK(BM_Svd)->Arg(16)->Arg(32)->Arg(64);

void BM_Mmd(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix xs = random_matrix(n, 8, 2);
  const Matrix xt = random_matrix(n, 8, 3);
  const DiscrepancyMethod method;
  for (auto _ : state) benchmark::DoNotOptimize(mmd(xs, xt, method));
}
BENCHMARK(BM_Mmd)->Arg(32)->Arg(128);

void BM_Coral(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix xs = random_matrix(n, 8, 4);
  const Matrix xt = random_matrix(n, 8, 5);
  for (auto _ : state) benchmark::DoNotOptimize(coral(xs, xt));
}
BENCHMARK(BM_Coral)->Arg(32)->Arg(128);

void BM_SolveLrr(benchmark::State& state) {
  const Matrix xs = random_matrix(32, 8, 6);
  const Matrix xt = random_matrix(32, 8, 7);
  AlmConfig cfg;
  cfg.max_iters = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(solve_lrr(xs, xt, cfg));
}
BENCHMARK(BM_SolveLrr)->Arg(40)->Arg(200);

void BM_Eq1Step(benchmark::State& state) {
  Rng init = make_rng(8, "bench");
  const BaseLearner learner = make_base_learner(2, 4, MethodTag::Mmd, init);
  const Matrix xs = random_matrix(32, 2, 9);
  const Matrix xt = random_matrix(32, 2, 10);
  std::vector<int> ys(32);
  for (std::size_t i = 0; i < ys.size(); ++i) ys[i] = static_cast<int>(i % 4);
  const std::vector<int> yt(32, 0);
  for (auto _ : state) {
    LearnerGrads grads = zero_grads(learner);
    benchmark::DoNotOptimize(eq1_loss(learner, xs, ys, xt, yt, 1.0, grads));
  }
}
BENCHMARK(BM_Eq1Step);

}  // namespace

// The distribution's libbenchmark_main.a is an LTO-only archive built by a
// different compiler minor, so the entry point lives here instead.
int main(int argc, char** argv) {
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
