#include <benchmark/benchmark.h>

#include <map>
#include <random>
#include <vector>

#include "kpat/ann_index.hpp"
#include "kpat/datastore.hpp"

namespace {

constexpr std::size_t kDim = 64;

struct Keys {
  std::vector<float> keys;
  std::vector<std::uint32_t> values;
  std::vector<float> queries;
};

const Keys& keys_of(std::size_t n) {
  static std::map<std::size_t, Keys> cache;
  auto [it, fresh] = cache.try_emplace(n);
  if (fresh) {
    std::mt19937_64 gen(n);
    std::uniform_real_distribution<float> uni(-1.0f, 1.0f);
    it->second.keys.resize(n * kDim);
    for (auto& x : it->second.keys) x = uni(gen);
    it->second.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) it->second.values[i] = std::uint32_t(i % 1000);
    it->second.queries.resize(64 * kDim);
    for (auto& x : it->second.queries) x = uni(gen);
  }
  return it->second;
}

std::span<const float> query(const Keys& k, std::size_t i) {
  return std::span<const float>(k.queries).subspan((i % 64) * kDim, kDim);
}

void BM_SquaredL2(benchmark::State& state) {
  const auto& k = keys_of(1024);
  std::size_t i = 0;
  for (auto _ : state) {
    const auto key = std::span<const float>(k.keys).subspan((i % 1024) * kDim, kDim);
    benchmark::DoNotOptimize(kpat::ann::squared_l2(key, query(k, i)));
    ++i;
  }
}
BENCHMARK(BM_SquaredL2);

void BM_ExactSearch(benchmark::State& state) {
  const auto& k = keys_of(std::size_t(state.range(0)));
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(kpat::ann::exact_search(k.keys, k.values, kDim, query(k, i++), 10));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ExactSearch)->Arg(10000)->Arg(100000)->Unit(benchmark::kMicrosecond);

void BM_IvfSearch(benchmark::State& state) {
  const auto& k = keys_of(std::size_t(state.range(0)));
  auto index = kpat::ann::IvfIndex::train(k.keys, kDim, 64, {10, 1});
  index.add(k.keys, k.values);
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(index.search(query(k, i++), 10, std::size_t(state.range(1))));
}
BENCHMARK(BM_IvfSearch)->Args({100000, 1})->Args({100000, 8})->Args({100000, 32})->Unit(benchmark::kMicrosecond);

void BM_PoolKeys(benchmark::State& state) {
  const std::size_t n = std::size_t(state.range(0));
  kpat::store::KeyMatrix states(n, kDim);
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<float> uni(-1.0f, 1.0f);
  for (std::size_t i = 0; i < n * kDim; ++i) states.data()[i] = uni(gen);
  for (auto _ : state) benchmark::DoNotOptimize(kpat::store::pool_keys(states));
}
BENCHMARK(BM_PoolKeys)->Arg(8)->Arg(32)->Arg(128);

}  // namespace

BENCHMARK_MAIN();
