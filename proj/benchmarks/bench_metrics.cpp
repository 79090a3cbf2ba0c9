#include <benchmark/benchmark.h>

#include <random>

#include "charmem/metrics.hpp"

namespace {

std::string random_text(std::mt19937& rng, int words) {
  static const char* vocab[] = {"the", "cat", "sat", "on", "a", "mat", "Grissom", "said", "Peter", "left", "lab", "night"};
  std::string s;
  for (int i = 0; i < words; ++i) s += std::string(vocab[rng() % 12]) + (i % 7 == 6 ? ". " : " ");
  return s;
}

void BM_RougeL(benchmark::State& state) {
  std::mt19937 rng(1);
  auto a = random_text(rng, static_cast<int>(state.range(0)));
  auto b = random_text(rng, static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(charmem::rouge(a, b, charmem::RougeVariant::RL));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_RougeL)->RangeMultiplier(4)->Range(16, 1024)->Complexity(benchmark::oNSquared);

void BM_TokenF1(benchmark::State& state) {
  std::mt19937 rng(2);
  auto a = random_text(rng, 40);
  auto b = random_text(rng, 40);
  for (auto _ : state) benchmark::DoNotOptimize(charmem::token_f1(a, b));
}
BENCHMARK(BM_TokenF1);

void BM_Normalize(benchmark::State& state) {
  std::mt19937 rng(3);
  auto a = random_text(rng, 200);
  for (auto _ : state) benchmark::DoNotOptimize(charmem::normalize_answer(a));
  state.SetBytesProcessed(static_cast<int64_t>(state.iterations()) * static_cast<int64_t>(a.size()));
}
BENCHMARK(BM_Normalize);

}  // namespace
