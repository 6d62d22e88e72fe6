#include <benchmark/benchmark.h>

#include "bench_common.hpp"
#include "mfa/lowrank_gaussian.hpp"

namespace {

void BM_LogDensity(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const auto r = static_cast<std::size_t>(state.range(1));
  const mfa::MfaModel m = mfa::bench::make_model(1, d, r);
  const mfa::CapacitanceFactor f(m.mean(0), m.loadings(0), m.psi());
  std::mt19937_64 rng(2);
  const Eigen::VectorXd x = mfa::bench::gaussian(rng, static_cast<Eigen::Index>(d), 1);
  for (auto _ : state) benchmark::DoNotOptimize(f.log_density(x));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_LogDensity)->Args({64, 4})->Args({768, 10})->Args({2304, 10})->Args({4096, 10});

void BM_Responsibilities(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  const mfa::MfaModel m = mfa::bench::make_model(k, 256, 8);
  const mfa::MixtureEvaluator eval(m);
  std::mt19937_64 rng(3);
  const Eigen::VectorXd x = mfa::bench::gaussian(rng, 256, 1);
  for (auto _ : state) benchmark::DoNotOptimize(eval.responsibilities(x));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Responsibilities)->Arg(16)->Arg(128)->Arg(1024);

}  // namespace
