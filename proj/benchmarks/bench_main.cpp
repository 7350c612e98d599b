#include <benchmark/benchmark.h>

#include <vector>

#include "dpdl/bridge.hpp"
#include "dpdl/losses.hpp"
#include "dpdl/scoring.hpp"
#include "dpdl/training.hpp"

using namespace dpdl;

namespace {

MgpParams make_params(std::size_t C, std::size_t D, double eps, std::uint64_t seed) {
  Rng rng(seed);
  MgpParams p;
  p.epsilon = eps;
  p.logits.resize(C);
  p.means = Matrix(C, D);
  p.log_variances = Matrix(C, D);
  for (auto& v : p.logits) v = rng.uniform(-1, 1);
  for (auto& v : p.means.data) v = rng.normal();
  for (auto& v : p.log_variances.data) v = rng.uniform(-1, 0.5);
  return p;
}

std::vector<std::vector<double>> make_batch(std::size_t n, std::size_t D, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<double>> b(n, std::vector<double>(D));
  for (auto& x : b)
    for (auto& v : x) v = 0.3 * rng.normal();
  return b;
}

// D = 4 x 4 x 8 matches the synthetic benchmark grids.
constexpr std::size_t kD = 128;

void BM_LogPartition(benchmark::State& state) {
  const Mgp m = mgp_realize(make_params(state.range(0), kD, 1.0, 1));
  const auto x = make_batch(1, kD, 2)[0];
  for (auto _ : state) benchmark::DoNotOptimize(log_partition(m, x));
}
BENCHMARK(BM_LogPartition)->Arg(1)->Arg(8)->Arg(32);

void BM_Drift(benchmark::State& state) {
  const Mgp m = mgp_realize(make_params(state.range(0), kD, 1.0, 3));
  const auto x = make_batch(1, kD, 4)[0];
  for (auto _ : state) benchmark::DoNotOptimize(drift(m, x, 0.5));
}
BENCHMARK(BM_Drift)->Arg(8)->Arg(32);

void BM_SimulateSde(benchmark::State& state) {
  const Mgp m = mgp_realize(make_params(4, 1, 1.0, 5));
  const double x0[1] = {0.3};
  Rng rng(6);
  for (auto _ : state) benchmark::DoNotOptimize(simulate_sde(m, x0, state.range(0), rng));
}
BENCHMARK(BM_SimulateSde)->Arg(100)->Arg(500);

void BM_LossDplNormal(benchmark::State& state) {
  const MgpParams p = make_params(32, kD, 1.0, 7);
  const auto batch = make_batch(state.range(0), kD, 8);
  for (auto _ : state) benchmark::DoNotOptimize(loss_dpl_normal(p, batch));
}
BENCHMARK(BM_LossDplNormal)->Arg(8)->Arg(32);

void BM_LossDfl(benchmark::State& state) {
  auto batch = make_batch(state.range(0), kD, 9);
  for (auto& x : batch) x = unitize(x);
  for (auto _ : state) benchmark::DoNotOptimize(loss_dfl(batch, 10.0));
}
BENCHMARK(BM_LossDfl)->Arg(16)->Arg(64);

void BM_TrainingIteration(benchmark::State& state) {
  SynthConfig sc;
  const Dataset ds = synth_generate(sc, 1);
  const SplitPlan split = make_splits(ds, Protocol::hard, 1, 1);
  TrainConfig cfg;
  cfg.epsilon = 1.0;
  Rng rng(10);
  const MgpParams p = make_params(cfg.C, ds.dims.size(), cfg.epsilon, 11);
  const ScoringHeads heads(ds.dims.channels);
  ModelGradient grad;
  for (auto _ : state) {
    const Batch b = draw_batch(ds, split, cfg, rng);
    benchmark::DoNotOptimize(batch_objective(p, heads, b, cfg, &grad));
  }
}
BENCHMARK(BM_TrainingIteration)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
