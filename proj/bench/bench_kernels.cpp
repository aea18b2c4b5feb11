#include <benchmark/benchmark.h>

#include "edsep/denoise.hpp"
#include "edsep/parallel.hpp"
#include "edsep/rng.hpp"
#include "edsep/sde.hpp"

using namespace edsep;

namespace {

StackedSignal source_stack() {
  Rng rng = make_rng(1, Stream::kProbe, 0);
  return normal_stacked(2, 16, rng);
}

void BM_EnsembleSerial(benchmark::State& state) {
  const StackedSignal s = source_stack();
  const Signal y = s.row_sum();
  for (auto _ : state) {
    auto ends = ensemble_endpoints_serial(s, y, SdeParams(), 500, state.range(0), 7);
    benchmark::DoNotOptimize(ends);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_EnsembleOmp(benchmark::State& state) {
  const StackedSignal s = source_stack();
  const Signal y = s.row_sum();
  const int jobs = static_cast<int>(state.range(1));
  for (auto _ : state) {
    auto ends = ensemble_endpoints_omp(s, y, SdeParams(), 500, state.range(0), 7, jobs);
    benchmark::DoNotOptimize(ends);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_BatchLossAndGrad(benchmark::State& state) {
  const NeuralDenoiser net(NetworkConfig{}, SdeParams(), 3);
  std::vector<LossDraw> draws;
  for (int i = 0; i < 8; ++i) {
    Rng rng = make_rng(i, Stream::kProbe, 1);
    LossDraw d;
    d.s = normal_stacked(2, 4000, rng);
    d.s *= 0.1;
    d.y = d.s.row_sum();
    d.t = 0.5;
    d.z = normal_stacked(2, 4000, rng);
    draws.push_back(std::move(d));
  }
  TensorList grads = zeros_like(net.params());
  for (auto _ : state) {
    benchmark::DoNotOptimize(batch_loss_and_grad(net, draws, grads, static_cast<int>(state.range(0))));
  }
}

}  // namespace

BENCHMARK(BM_EnsembleSerial)->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EnsembleOmp)->Args({2000, 1})->Args({2000, 2})->Args({2000, 4})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BatchLossAndGrad)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
