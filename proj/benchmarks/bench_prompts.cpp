#include <benchmark/benchmark.h>

#include "charmem/perturb.hpp"
#include "charmem/prompts.hpp"
#include "charmem/providers.hpp"

namespace {

void BM_RenderGist(benchmark::State& state) {
  auto roster = charmem::load_roster_file(std::string(CHARMEM_FIXTURES_DIR) + "/rosters/friends.json");
  auto segs = charmem::load_corpus_file(std::string(CHARMEM_FIXTURES_DIR) + "/corpus/guess.jsonl");
  std::vector<charmem::Segment> anon;
  for (const auto& s : segs) {
    if (s.work_id == "friends") anon.push_back(charmem::anonymize_speakers(s, charmem::PlaceholderTemplate::p_style(), roster).segment);
  }
  for (auto _ : state) {
    for (const auto& s : anon) benchmark::DoNotOptimize(charmem::render(s.task, charmem::PromptCondition::Gist, s));
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * anon.size()));
}
BENCHMARK(BM_RenderGist);

void BM_RequestHash(benchmark::State& state) {
  charmem::ModelSpec m{"m", "p", "model", {}};
  std::string prompt(static_cast<std::size_t>(state.range(0)), 'x');
  for (auto _ : state) benchmark::DoNotOptimize(charmem::request_hash(m, prompt, 0));
  state.SetBytesProcessed(static_cast<int64_t>(state.iterations()) * state.range(0));
}
BENCHMARK(BM_RequestHash)->Arg(256)->Arg(4096);

}  // namespace
