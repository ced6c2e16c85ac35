#include <benchmark/benchmark.h>

#include <vector>

#include "kpat/lexicon.hpp"
#include "kpat/pat_model.hpp"
#include "kpat/random.hpp"
#include "kpat/tokenizer.hpp"
#include "kpat/trainer.hpp"

namespace {

using kpat::model::Example;
using kpat::model::PatConfig;

std::vector<Example> random_examples(const PatConfig& c, std::size_t n, std::uint64_t seed) {
  kpat::Rng rng(seed);
  auto word = [&] { return int(kpat::text::kNumSpecial + rng.below(c.text_vocab - kpat::text::kNumSpecial)); };
  auto phone = [&] {
    return int(kpat::phon::kFirstPhone + rng.below(kpat::phon::phone_vocab_size() - kpat::phon::kFirstPhone));
  };
  std::vector<Example> out(n);
  for (auto& ex : out) {
    for (std::size_t i = 0, len = 6 + rng.below(6); i < len; ++i) ex.asr_tokens.push_back(word());
    for (std::size_t i = 0, len = 20 + rng.below(20); i < len; ++i) ex.phones.push_back(phone());
    for (std::size_t i = 0, len = 6 + rng.below(6); i < len; ++i) ex.target.push_back(word());
    ex.clean_tokens = ex.target;
  }
  return out;
}

void BM_TrainStep(benchmark::State& state) {
  const auto c = PatConfig::desk();
  kpat::model::PatModel<float> model(c, 1);
  kpat::model::Trainer trainer(model, {});
  const auto examples = random_examples(c, 32, 2);
  std::vector<const Example*> batch;
  for (const auto& e : examples) batch.push_back(&e);
  for (auto _ : state) benchmark::DoNotOptimize(trainer.train_step(batch));
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

void BM_GreedyDecode(benchmark::State& state) {
  const auto c = PatConfig::desk();
  kpat::model::PatModel<float> model(c, 1);
  const auto examples = random_examples(c, 16, 3);
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& e = examples[i++ % examples.size()];
    benchmark::DoNotOptimize(kpat::model::greedy_decode(model, e.asr_tokens, e.phones, 16));
  }
}
BENCHMARK(BM_GreedyDecode)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
