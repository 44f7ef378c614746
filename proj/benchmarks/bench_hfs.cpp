#include <benchmark/benchmark.h>

#include "hfslab/hfs.hpp"
#include "hfslab/rng.hpp"

namespace {

hfslab::Mat make_latents(std::int64_t b, std::int64_t k) {
  hfslab::Rng rng(17);
  hfslab::Mat z(b, k);
  for (auto& v : z.a) v = rng.normal();
  return z;
}

void BM_hfs_pairwise(benchmark::State& state) {
  const auto b = state.range(0);
  const auto k = state.range(1);
  const hfslab::Mat z = make_latents(b, k);
  const auto pairs = hfslab::PairSet::all(static_cast<int>(k));
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        hfslab::hfs_pairwise(z, pairs, hfslab::HfsDistance::kSquaredEuclidean));
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<std::int64_t>(pairs.pairs.size()) * b * b * b);
}
BENCHMARK(BM_hfs_pairwise)->Args({64, 10})->Args({128, 10})->Args({64, 24});

void BM_hfs_pairwise_grad(benchmark::State& state) {
  const auto b = state.range(0);
  const hfslab::Mat z = make_latents(b, 10);
  const auto pairs = hfslab::PairSet::draw(10, 25, 3);
  for (auto _ : state) {
    hfslab::Mat grad(b, 10, 0.0);
    benchmark::DoNotOptimize(hfslab::hfs_pairwise(
        z, pairs, hfslab::HfsDistance::kSquaredEuclidean, &grad));
  }
}
BENCHMARK(BM_hfs_pairwise_grad)->Arg(64)->Arg(128);

void BM_hfs_softmin(benchmark::State& state) {
  const auto b = state.range(0);
  const hfslab::Mat z = make_latents(b, 10);
  const auto pairs = hfslab::PairSet::draw(10, 25, 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(hfslab::hfs_softmin(
        z, pairs, 0.1, hfslab::HfsDistance::kSquaredEuclidean));
  }
}
BENCHMARK(BM_hfs_softmin)->Arg(64)->Arg(128);

void BM_hfs_soft(benchmark::State& state) {
  const auto b = state.range(0);
  const hfslab::Mat z = make_latents(b, 10);
  const auto pairs = hfslab::PairSet::draw(10, 25, 3);
  for (auto _ : state) {
    hfslab::Mat grad(b, 10, 0.0);
    benchmark::DoNotOptimize(hfslab::hfs_soft(
        z, pairs, 0.1, 0.1, hfslab::HfsDistance::kSquaredEuclidean, &grad));
  }
}
BENCHMARK(BM_hfs_soft)->Arg(64)->Arg(128);

void BM_hfs_subsampled(benchmark::State& state) {
  const auto b = state.range(0);
  const hfslab::Mat z = make_latents(b, 10);
  for (auto _ : state) {
    benchmark::DoNotOptimize(hfslab::hfs_subsampled(
        z, 256, hfslab::HfsDistance::kSquaredEuclidean, 5));
  }
}
BENCHMARK(BM_hfs_subsampled)->Arg(64)->Arg(128);

void BM_hfs_metric(benchmark::State& state) {
  const hfslab::Mat z = make_latents(1024, 10);
  for (auto _ : state) {
    benchmark::DoNotOptimize(hfslab::hfs_metric(z, 64, 8, 7));
  }
}
BENCHMARK(BM_hfs_metric);

}  // namespace

BENCHMARK_MAIN();
