#include <benchmark/benchmark.h>

#include "mi2a/datagen.hpp"
#include "mi2a/eval.hpp"
#include "mi2a/lmm_bridge.hpp"
#include "mi2a/parallel.hpp"
#include "mi2a/training.hpp"

using namespace mi2a;

namespace {

void BM_GenLinearConvection(benchmark::State& state) {
  const auto params = datagen::linear_convection_params().train;
  for (auto _ : state) benchmark::DoNotOptimize(datagen::gen_linear_convection(params).snapshots.raw());
}
BENCHMARK(BM_GenLinearConvection)->Unit(benchmark::kMillisecond);

void BM_GenBurgers(benchmark::State& state) {
  const auto params = datagen::burgers_params().train;
  for (auto _ : state) benchmark::DoNotOptimize(datagen::gen_burgers(params).snapshots.raw());
}
BENCHMARK(BM_GenBurgers)->Unit(benchmark::kMillisecond);

void BM_ShallowWaterTrajectory(benchmark::State& state) {
  datagen::ShallowWaterConfig cfg;
  cfg.nx = cfg.ny = state.range(0);
  const Tensor h0 = datagen::plane_wave(cfg, 0.4);
  for (auto _ : state) benchmark::DoNotOptimize(datagen::simulate_shallow_water(cfg, h0).raw());
}
BENCHMARK(BM_ShallowWaterTrajectory)->Arg(64)->Arg(184)->Unit(benchmark::kMillisecond);

void BM_BuildPairs(benchmark::State& state) {
  const auto ds = datagen::gen_linear_convection(datagen::linear_convection_params().train);
  for (auto _ : state) benchmark::DoNotOptimize(datagen::build_pairs(ds, 10, {}, 1).x_noisy.raw());
}
BENCHMARK(BM_BuildPairs)->Unit(benchmark::kMillisecond);

// One Adam step on a batch of the published 1D model: forward, both losses, backward, update.
void BM_TrainEpochPublished1D(benchmark::State& state) {
  tune_allocator();
  const std::size_t batch = state.range(0);
  datagen::LinearConvectionConfig lc;
  lc.nt = 10 + 10 + batch - 1;  // exactly `batch` windows
  const auto pairs = datagen::build_pairs(datagen::gen_linear_convection({1.0}, lc), 10, {}, 2);
  training::RunConfig cfg;
  cfg.batch_size = batch;
  training::Trainer t(cfg, pairs);
  for (auto _ : state) benchmark::DoNotOptimize(t.run_epoch().total);
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_TrainEpochPublished1D)->Arg(8)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_Rollout19Horizons(benchmark::State& state) {
  models::Model m(models::ModelConfig{}, 3);
  const auto ds = datagen::gen_linear_convection({0.7875});
  const datagen::Normalization norm{ds.global_min, ds.global_max};
  for (auto _ : state) {
    benchmark::DoNotOptimize(eval::evaluate_trajectory(eval::model_predictor(m), ds.trajectory(0), 0.7875, norm, 10).physical.mean_mse);
  }
}
BENCHMARK(BM_Rollout19Horizons)->Unit(benchmark::kMillisecond);

void BM_Ab2Equivalence(benchmark::State& state) {
  const std::size_t n = state.range(0);
  const lmm::UpwindSystem sys{1.0, 1.0 / n, 0.5 / n};
  Tensor u0({n});
  for (std::size_t i = 0; i < n; ++i) u0[i] = i > n / 3 && i < n / 2 ? 1.0 : 0.0;
  for (auto _ : state) benchmark::DoNotOptimize(lmm::attention_emulates_ab2(sys, u0, 50).max_deviation);
}
BENCHMARK(BM_Ab2Equivalence)->Arg(200)->Arg(2000)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
