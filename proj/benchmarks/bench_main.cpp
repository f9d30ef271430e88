#include <benchmark/benchmark.h>

#include <random>

#include "mccdic/degrade.hpp"
#include "mccdic/dictionary.hpp"
#include "mccdic/phantom.hpp"
#include "mccdic/solver.hpp"

using namespace mccdic;

namespace {

Tensor random_features(std::size_t n, std::size_t k) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  Tensor t({n, n, k});
  for (auto& v : t.data()) v = g(rng);
  return t;
}

void BM_Synthesize(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0)), k = static_cast<std::size_t>(state.range(1));
  std::mt19937_64 rng(2);
  const auto bank = DictionaryBank::random(k, 3, 1, rng);
  const Tensor x = random_features(n, k);
  for (auto _ : state) benchmark::DoNotOptimize(synthesize(bank, x));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * k));
}
BENCHMARK(BM_Synthesize)->Args({64, 8})->Args({128, 8})->Args({128, 64});

void BM_Analyze(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0)), k = static_cast<std::size_t>(state.range(1));
  std::mt19937_64 rng(3);
  const auto bank = DictionaryBank::random(k, 3, 1, rng);
  const Tensor y = random_features(n, 1).reshaped({n, n});
  for (auto _ : state) benchmark::DoNotOptimize(analyze(bank, y));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * k));
}
BENCHMARK(BM_Analyze)->Args({64, 8})->Args({128, 8})->Args({128, 64});

void BM_IterateBlock(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto d = ModelDictionaries::random({8}, 3, 4);
  const auto pair = make_phantom_pair(random_phantom_spec(n, 6, false, 5));
  SolverConfig cfg;
  const auto steps = resolve_steps(d, cfg, n, n);
  const auto s0 = init_features(d, pair.reference, pair.target, cfg);
  for (auto _ : state) benchmark::DoNotOptimize(iterate_block(s0, d, pair.reference, pair.target, cfg, steps));
}
BENCHMARK(BM_IterateBlock)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_StepSizes(benchmark::State& state) {
  const auto d = ModelDictionaries::random({8}, 3, 6);
  SolverConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(resolve_steps(d, cfg, 64, 64));
}
BENCHMARK(BM_StepSizes)->Unit(benchmark::kMillisecond);

void BM_CropPad(benchmark::State& state) {
  const auto pair = make_phantom_pair(random_phantom_spec(128, 6, false, 7));
  for (auto _ : state) benchmark::DoNotOptimize(upsample_zero_pad(kspace_center_crop_lr(pair.target, 4), 4));
}
BENCHMARK(BM_CropPad);

}  // namespace

BENCHMARK_MAIN();
