#include <benchmark/benchmark.h>

#include "charmem/perturb.hpp"

namespace {

const char* fixtures() { return CHARMEM_FIXTURES_DIR; }

void BM_ApplyNameMap(benchmark::State& state) {
  auto roster = charmem::load_roster_file(std::string(fixtures()) + "/rosters/friends.json");
  auto segs = charmem::load_corpus_file(std::string(fixtures()) + "/corpus/roundtrip50.jsonl");
  auto map = charmem::build_name_map(roster, charmem::CrossCulturalStrategy{}, charmem::default_cross_cultural_pool(), 0);
  std::vector<charmem::Segment> friends;
  for (const auto& s : segs) {
    if (s.work_id == "friends") friends.push_back(s);
  }
  for (auto _ : state) {
    for (const auto& s : friends) benchmark::DoNotOptimize(charmem::apply_name_map(s, map));
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * friends.size()));
}
BENCHMARK(BM_ApplyNameMap);

void BM_RoundTrip(benchmark::State& state) {
  auto roster = charmem::load_roster_file(std::string(fixtures()) + "/rosters/tbbt.json");
  auto segs = charmem::load_corpus_file(std::string(fixtures()) + "/corpus/roundtrip50.jsonl");
  auto map = charmem::build_name_map(roster, charmem::SameCulturalStrategy{true}, charmem::default_same_cultural_pool(), 3);
  std::vector<charmem::Segment> tbbt;
  for (const auto& s : segs) {
    if (s.work_id == "tbbt") tbbt.push_back(s);
  }
  for (auto _ : state) {
    for (const auto& s : tbbt) benchmark::DoNotOptimize(charmem::invert_name_map(charmem::apply_name_map(s, map), map));
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * tbbt.size()));
}
BENCHMARK(BM_RoundTrip);

void BM_BuildNameMap(benchmark::State& state) {
  auto roster = charmem::load_roster_file(std::string(fixtures()) + "/rosters/friends.json");
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        charmem::build_name_map(roster, charmem::CrossCulturalStrategy{}, charmem::default_cross_cultural_pool(), seed++ % 16));
  }
}
BENCHMARK(BM_BuildNameMap);

}  // namespace
