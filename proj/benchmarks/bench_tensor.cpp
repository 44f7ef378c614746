#include <benchmark/benchmark.h>

#include "hfslab/models.hpp"
#include "hfslab/rng.hpp"
#include "hfslab/tensor.hpp"

namespace {

std::vector<double> random_values(std::int64_t n, std::uint64_t seed) {
  hfslab::Rng rng(seed);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = rng.normal();
  return v;
}

void BM_matmul_forward_backward(benchmark::State& state) {
  const std::int64_t n = state.range(0);
  hfslab::Parameter a("a", {n, n}, random_values(n * n, 1));
  hfslab::Parameter b("b", {n, n}, random_values(n * n, 2));
  for (auto _ : state) {
    hfslab::Tape t;
    auto loss = hfslab::mean(
        hfslab::square(hfslab::matmul(t.mount(a), t.mount(b))));
    t.backward(loss);
    benchmark::DoNotOptimize(a.grad.data());
    a.zero_grad();
    b.zero_grad();
  }
}
BENCHMARK(BM_matmul_forward_backward)->Arg(32)->Arg(64)->Arg(128);

void BM_sae_training_step(benchmark::State& state) {
  hfslab::SaeConfig cfg;  // default 32 -> 10 with 64x64 hiddens
  hfslab::SaeModel model(cfg, 11);
  const std::int64_t batch = state.range(0);
  const auto xv = random_values(batch * cfg.obs_dim, 3);
  std::uint64_t step = 0;
  for (auto _ : state) {
    hfslab::Rng eps(step++);
    hfslab::Tape t;
    auto x = t.constant({batch, cfg.obs_dim}, xv);
    auto lb = model.encode(t, x, eps);
    auto loss = hfslab::add(hfslab::sae_loss(t, model, x, lb),
                            hfslab::mul(hfslab::kl_term(t, lb), 1.0));
    t.backward(loss);
    benchmark::DoNotOptimize(loss.item());
    for (auto* p : model.parameters()) p->zero_grad();
  }
}
BENCHMARK(BM_sae_training_step)->Arg(64)->Arg(256);

}  // namespace
