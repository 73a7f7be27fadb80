#include <benchmark/benchmark.h>

#include "mi2a/losses.hpp"
#include "mi2a/ops.hpp"
#include "mi2a/random.hpp"

using namespace mi2a;

namespace {

// Encoder-sized conv: (B, 256, 1) -> (B, 128, 64) at stride 2, forward plus backward.
void BM_Conv1dForwardBackward(benchmark::State& state) {
  const std::size_t batch = state.range(0), in = state.range(1), out = state.range(2), len = 256 / (in == 1 ? 1 : 4);
  Rng rng(1);
  const Tensor x = uniform_tensor({batch, len, in}, -1, 1, rng);
  const Tensor k = uniform_tensor({5, in, out}, -0.1, 0.1, rng), b({out});
  for (auto _ : state) {
    Graph g;
    Var y = ops::conv1d(g.variable(x), g.variable(k), g.variable(b), 2);
    g.backward(ops::sum(y));
    benchmark::DoNotOptimize(g.grad(y).raw());
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_Conv1dForwardBackward)->Args({64, 1, 64})->Args({64, 64, 32})->Unit(benchmark::kMicrosecond);

void BM_Conv2dForward(benchmark::State& state) {
  const std::size_t n = state.range(0);
  Rng rng(2);
  Graph g;
  Var x = g.constant(uniform_tensor({8, n, n, 1}, -1, 1, rng));
  Var k = g.constant(uniform_tensor({5, 5, 1, 64}, -0.1, 0.1, rng)), b = g.constant(Tensor({64}));
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv2d(x, k, b, 2).value().raw());
}
BENCHMARK(BM_Conv2dForward)->Arg(64)->Arg(184)->Unit(benchmark::kMillisecond);

void BM_LstmStep(benchmark::State& state) {
  const std::size_t batch = state.range(0), p = 32;
  Rng rng(3);
  const Tensor x = uniform_tensor({batch, p}, -1, 1, rng), h = uniform_tensor({batch, p}, -1, 1, rng);
  const Tensor w = uniform_tensor({2 * p, 4 * p}, -0.2, 0.2, rng), bias({4 * p});
  for (auto _ : state) {
    Graph g;
    auto [h2, c2] = ops::lstm_step(g.variable(x), g.variable(h), g.variable(h), {g.variable(w), g.variable(bias)});
    g.backward(ops::add(ops::sum(h2), ops::sum(c2)));
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_LstmStep)->Arg(1)->Arg(64)->Unit(benchmark::kMicrosecond);

void BM_AttentionScores(benchmark::State& state) {
  const std::size_t batch = 64, t = state.range(0), p = 32;
  Rng rng(4);
  Graph g;
  Var s = g.constant(uniform_tensor({batch, t, p}, -1, 1, rng)), h = g.constant(uniform_tensor({batch, t, p}, -1, 1, rng));
  for (auto _ : state) benchmark::DoNotOptimize(ops::softmax(ops::batched_matmul(s, h, true), 2).value().raw());
}
BENCHMARK(BM_AttentionScores)->Arg(10)->Arg(40)->Unit(benchmark::kMicrosecond);

void BM_DecomposedEvolverLoss(benchmark::State& state) {
  const std::size_t batch = 64, n = state.range(0);
  Rng rng(5);
  const Tensor pred = uniform_tensor({batch, 10, n}, 0, 1, rng), truth = uniform_tensor({batch, 10, n}, 0, 1, rng);
  for (auto _ : state) {
    Graph g;
    Var p = g.variable(pred);
    g.backward(losses::evolver_loss(p, g.constant(truth), 0.7).total);
    benchmark::DoNotOptimize(g.grad(p).raw());
  }
  state.SetBytesProcessed(state.iterations() * pred.size() * sizeof(double));
}
BENCHMARK(BM_DecomposedEvolverLoss)->Arg(256)->Arg(184 * 184)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
