#include "headprune/annealer.hpp"
#include "headprune/surrogate.hpp"

#include <benchmark/benchmark.h>

using namespace headprune;

namespace {

void BM_NeighborSample(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const WeightBounds bounds{0, n / 5};
  Rng rng(3);
  HeadMask s = random_state(n, bounds, rng);
  for (auto _ : state) {
    const Move m = sample_move(s, bounds, rng);
    apply_move(s, m);
    benchmark::DoNotOptimize(s);
  }
  state.SetItemsProcessed(state.iterations());
}

// Annealer states per second with the largest reference surrogates.
void BM_AnnealLlamaScale(benchmark::State& state) {
  const auto arch = Architecture::for_model("llama-2-7b");
  SurrogateRegressor bias(arch), ppl(arch);
  Rng rng(4);
  bias.initialize(rng);
  ppl.initialize(rng);
  AnnealConfig cfg;
  cfg.bounds = WeightBounds{0, 205};
  cfg.limit = TimeLimit::of_iterations(2000);
  cfg.record_trace = false;
  for (auto _ : state) benchmark::DoNotOptimize(anneal(cfg, bias, ppl));
  state.SetItemsProcessed(state.iterations() * 2000);
}

} // namespace

BENCHMARK(BM_NeighborSample)->Arg(72)->Arg(1024);
BENCHMARK(BM_AnnealLlamaScale)->Unit(benchmark::kMillisecond);
