#include <benchmark/benchmark.h>

#include "bench_common.hpp"
#include "mfa/geometry.hpp"

namespace {

void BM_KnnGraph(benchmark::State& state) {
  std::mt19937_64 rng(7);
  const Eigen::MatrixXd centroids = mfa::bench::gaussian(rng, state.range(0), state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(mfa::build_knn_graph(centroids, 10));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_KnnGraph)->Args({512, 256})->Args({2048, 256})->Args({4096, 768})->Unit(benchmark::kMillisecond);

void BM_Bfs(benchmark::State& state) {
  std::mt19937_64 rng(8);
  const mfa::NeighborhoodGraph g = mfa::build_knn_graph(mfa::bench::gaussian(rng, 4096, 16), 8);
  for (auto _ : state) benchmark::DoNotOptimize(mfa::bfs_neighborhood(g, 0, 4096));
}
BENCHMARK(BM_Bfs);

}  // namespace
