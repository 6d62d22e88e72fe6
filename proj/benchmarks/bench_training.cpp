#include <benchmark/benchmark.h>

#include "bench_common.hpp"
#include "mfa/init.hpp"
#include "mfa/parallel.hpp"
#include "mfa/training.hpp"

namespace {

void BM_NllAndGradient(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  const mfa::MfaModel m = mfa::bench::make_model(k, 128, 8);
  const mfa::ActivationBatch batch = mfa::sample_synthetic(m, 256, 4);
  mfa::set_num_threads(static_cast<std::size_t>(state.range(1)));
  for (auto _ : state) benchmark::DoNotOptimize(mfa::nll_and_gradient(m, batch));
  mfa::set_num_threads(0);
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch.size()));
}
BENCHMARK(BM_NllAndGradient)->Args({16, 1})->Args({64, 1})->Args({64, 0})->Unit(benchmark::kMillisecond);

void BM_MinibatchKMeans(benchmark::State& state) {
  const mfa::MfaModel m = mfa::bench::make_model(32, 64, 4);
  const mfa::ActivationBatch sample = mfa::sample_synthetic(m, static_cast<std::size_t>(state.range(0)), 5);
  for (auto _ : state) benchmark::DoNotOptimize(mfa::minibatch_kmeans(sample, 32, 5, 6, 1024));
  state.SetItemsProcessed(state.iterations() * state.range(0) * 5);
}
BENCHMARK(BM_MinibatchKMeans)->Arg(10'000)->Arg(100'000)->Unit(benchmark::kMillisecond);

}  // namespace
