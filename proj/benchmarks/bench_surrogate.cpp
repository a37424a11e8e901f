#include "headprune/surrogate.hpp"

#include <benchmark/benchmark.h>

using namespace headprune;

namespace {

void BM_Predict(benchmark::State& state, const char* alias) {
  const auto arch = Architecture::for_model(alias);
  SurrogateRegressor model(arch);
  Rng rng(1);
  model.initialize(rng);
  const std::size_t n = arch.layer_sizes.front();
  const HeadMask s = random_state(n, WeightBounds{0, n / 5}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(model.predict(s));
  state.SetItemsProcessed(state.iterations());
}

void BM_TrainEpoch(benchmark::State& state) {
  const std::size_t n = 144;
  Rng rng(2);
  TrainingCorpus corpus;
  for (int k = 0; k < 4096; ++k) {
    corpus.masks.push_back(random_state(n, WeightBounds{0, 29}, rng));
    corpus.bias_targets.push_back(0.5);
    corpus.ppl_targets.push_back(0.5);
  }
  TrainOptions opt;
  opt.max_epochs = 1;
  for (auto _ : state) benchmark::DoNotOptimize(train(corpus, Target::bias, Architecture::small(n), opt));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(corpus.size()));
}

} // namespace

BENCHMARK_CAPTURE(BM_Predict, distilgpt2, "distilgpt2");
BENCHMARK_CAPTURE(BM_Predict, gpt_neo_1_3b, "gpt-neo-1.3b");
BENCHMARK_CAPTURE(BM_Predict, llama_2_7b, "llama-2-7b");
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);
