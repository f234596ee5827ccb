#include <cstdint>
#include <numeric>
#include <vector>

#include <benchmark/benchmark.h>
#include <torch/torch.h>

#include "sslab/diagnostics.hpp"
#include "sslab/evaluation.hpp"
#include "sslab/models.hpp"
#include "sslab/pretexts.hpp"
#include "sslab/rng.hpp"

using namespace sslab;

namespace {

void BM_PermutationSet(benchmark::State& state) {
  const auto size = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(generate_permutation_set(9, size, 10000, 1));
}
BENCHMARK(BM_PermutationSet)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_PcaExplainedVariance(benchmark::State& state) {
  const auto rows = state.range(0);
  const auto dim = state.range(1);
  Rng rng(2);
  std::vector<double> x(static_cast<std::size_t>(rows * dim));
  for (auto& v : x) v = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(pca_explained_variance(x, rows, dim));
}
BENCHMARK(BM_PcaExplainedVariance)->Args({1000, 64})->Args({2000, 256})->Unit(benchmark::kMillisecond);

void BM_NearestNeighbors(benchmark::State& state) {
  const auto rows = state.range(0);
  const std::int64_t dim = 256;
  Rng rng(3);
  std::vector<std::int64_t> ids(static_cast<std::size_t>(rows));
  std::iota(ids.begin(), ids.end(), 0);
  std::vector<float> values(static_cast<std::size_t>(rows * dim));
  for (auto& v : values) v = static_cast<float>(rng.normal());
  const FeatureMatrix m(dim, ids, values, {});
  for (auto _ : state) benchmark::DoNotOptimize(nearest_neighbors(m, 0, 10));
}
BENCHMARK(BM_NearestNeighbors)->Arg(1000)->Arg(10000)->Unit(benchmark::kMicrosecond);

void BM_BackboneForward(benchmark::State& state) {
  torch::set_num_threads(1);
  BackboneConfig cfg;
  cfg.width_multiplier = static_cast<double>(state.range(0)) / 100.0;
  auto encoder = build_backbone(cfg);
  encoder->eval();
  torch::NoGradGuard no_grad;
  const auto x = torch::rand({32, 3, 64, 64}) * 2 - 1;
  for (auto _ : state) benchmark::DoNotOptimize(extract_prepool(encoder, x));
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_BackboneForward)->Arg(25)->Arg(100)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
