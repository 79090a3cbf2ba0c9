#include <doctest.h>

#include <json.hpp>
#include <sstream>

#include "charmem/corpus.hpp"
#include "charmem_cli/cli.hpp"
#include "test_support.hpp"

using charmem::testing::fixture;
using nlohmann::json;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome cli(std::vector<std::string> args) {
  args.insert(args.begin(), "charmem");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int code = charmem::cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string f(const std::string& rel) { return fixture(rel).string(); }

bool has(const std::string& s, const std::string& needle) { return s.find(needle) != std::string::npos; }

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("help and usage errors") {
    auto h = cli({"--help"});
    CHECK(h.code == 0);
    CHECK(has(h.out, "validate"));
    CHECK(has(h.out, "report"));
    CHECK(cli({}).code == 2);
    CHECK(cli({"dance"}).code == 2);
    CHECK(cli({"perturb", "--corpus", f("corpus/friends.jsonl")}).code == 2);
    CHECK(cli({"report", "--results", "/nonexistent/results.jsonl"}).code == 2);
    auto j = cli({"--json-errors", "run"});
    CHECK(j.code == 2);
    CHECK(json::parse(j.err).at("error").at("type") == "UsageError");
  }

  TEST_CASE("validate") {
    auto ok = cli({"validate", "--corpus", f("corpus/mixed.jsonl"), "--roster-dir", f("rosters"), "--plan",
                   f("plans/mixed.json"), "--provider-config", f("config/providers.json"), "--probe-corpus",
                   f("probe/probe.jsonl")});
    CHECK(ok.code == 0);
    CHECK(has(ok.out, "ok\n"));
    CHECK(has(ok.out, "plan: 24 cells x 2 trials"));
    auto bad = cli({"validate", "--corpus", f("bad/gunther.jsonl"), "--roster-dir", f("rosters")});
    CHECK(bad.code == 1);
    CHECK(has(bad.out, "Gunther"));
    CHECK(has(bad.err, "validation problem"));
    auto unknown = cli({"validate", "--plan", f("plans/unknown_model.json"), "--provider-config", f("config/providers.json")});
    CHECK(unknown.code == 1);
    CHECK(has(unknown.err, "models[0]"));
    auto collision = cli({"--json-errors", "validate", "--roster-dir", f("bad")});
    CHECK(collision.code == 1);
    CHECK(json::parse(collision.err).at("error").at("exit_code") == 1);
  }

  TEST_CASE("perturb writes the corpus and the name maps") {
    charmem::testing::TempDir dir;
    auto out = (dir / "friends_nr.jsonl").string();
    auto r = cli({"perturb", "--corpus", f("corpus/friends.jsonl"), "--roster-dir", f("rosters"), "--strategy",
                  "cross-cultural+swap", "--seed", "0", "--out", out});
    REQUIRE(r.code == 0);
    auto segs = charmem::load_corpus_file(out);
    REQUIRE_FALSE(segs.empty());
    CHECK(segs[0].utterances[0].speaker == "Bojing");
    CHECK(segs[0].utterances[0].text.rfind("Cuixia", 0) == 0);
    auto line = json::parse(charmem::read_file(out).substr(0, charmem::read_file(out).find('\n')));
    CHECK(line.at("substitutions").size() >= 2);
    auto maps = json::parse(charmem::read_file(dir / "friends_nr.namemaps.json"));
    CHECK(maps.contains("friends"));

    auto short_pool = cli({"--json-errors", "perturb", "--corpus", f("corpus/friends.jsonl"), "--roster-dir",
                           f("rosters"), "--strategy", "cross-cultural", "--pool", f("pools/short_female.json"),
                           "--out", out});
    CHECK(short_pool.code == 1);
    CHECK(json::parse(short_pool.err).at("error").at("type") == "PoolExhaustedError");
    auto missing = cli({"perturb", "--corpus", f("bad/unknown_work.jsonl"), "--roster-dir", f("rosters"),
                        "--strategy", "mask", "--out", out});
    CHECK(missing.code == 1);
    CHECK(has(missing.err, "seinfeld"));
    CHECK(cli({"perturb", "--corpus", f("corpus/friends.jsonl"), "--roster-dir", f("rosters"), "--strategy",
               "shuffle", "--out", out}).code == 1);
  }

  TEST_CASE("probe writes the grid") {
    charmem::testing::TempDir dir;
    auto r = cli({"probe", "--probe-corpus", f("probe/probe.jsonl"), "--roster-dir", f("probe/rosters"),
                  "--provider-config", f("probe/providers.json"), "--models", "verbatim-oracle", "--strategies",
                  "none,cross-cultural,mask", "--out", dir.path().string()});
    REQUIRE(r.code == 0);
    CHECK(has(r.out, "verbatim-oracle / none: accuracy 100.0%"));
    CHECK(has(r.out, "verbatim-oracle / cross-cultural: accuracy 0.0%"));
    auto grid = json::parse(charmem::read_file(dir / "probe_grid.json"));
    CHECK(grid.at("cells").size() == 3);
    CHECK(std::filesystem::exists(dir / "probe_heatmap.csv"));
    auto bad = cli({"probe", "--probe-corpus", f("probe/probe.jsonl"), "--provider-config", f("probe/providers.json"),
                    "--models", "nope", "--out", dir.path().string()});
    CHECK(bad.code == 1);
  }

  TEST_CASE("run and report") {
    charmem::testing::TempDir dir;
    auto r = cli({"run", "--plan", f("plans/soft.json"), "--provider-config", f("config/providers.json"), "--out",
                  dir.path().string()});
    REQUIRE(r.code == 0);
    CHECK(has(r.out, "cache hits 0/"));
    std::string md = charmem::read_file(dir / "report.md");
    auto again = cli({"run", "--plan", f("plans/soft.json"), "--provider-config", f("config/providers.json"), "--out",
                      dir.path().string()});
    CHECK(again.code == 0);
    CHECK(has(again.out, "(100.0%)"));
    CHECK(charmem::read_file(dir / "report.md") == md);

    charmem::testing::TempDir rep;
    auto rr = cli({"report", "--results", (dir / "results.jsonl").string(), "--format", "markdown", "--out",
                   rep.path().string()});
    CHECK(rr.code == 0);
    CHECK(charmem::read_file(rep / "report.md") == md);
    CHECK(cli({"report", "--results", (dir / "results.jsonl").string(), "--format", "pdf"}).code == 1);
  }

  TEST_CASE("run errors") {
    charmem::testing::TempDir dir;
    auto cred = cli({"--json-errors", "run", "--plan", f("plans/live_model.json"), "--provider-config",
                     f("config/providers.json"), "--out", dir.path().string()});
    CHECK(cred.code == 1);
    CHECK(json::parse(cred.err).at("error").at("type") == "CredentialError");
    auto roster = cli({"run", "--plan", f("plans/missing_roster.json"), "--provider-config", f("config/providers.json"),
                       "--out", dir.path().string()});
    CHECK(roster.code == 1);
    CHECK(has(roster.err, "seinfeld"));
    auto cut = cli({"run", "--plan", f("plans/soft.json"), "--provider-config", f("config/providers.json"), "--out",
                    dir.path().string(), "--abort-after", "2"});
    CHECK(cut.code == 1);
    CHECK(has(cut.err, "interrupted"));
  }

  TEST_CASE("report on corrupt and empty results") {
    auto bad = cli({"--json-errors", "report", "--results", f("results/truncated.jsonl"), "--out", "/tmp"});
    CHECK(bad.code == 1);
    auto e = json::parse(bad.err).at("error");
    CHECK(e.at("type") == "ParseError");
    CHECK(e.at("line") == 5);
    charmem::testing::TempDir dir;
    auto empty = cli({"report", "--results", f("results/empty.jsonl"), "--out", dir.path().string()});
    CHECK(empty.code == 0);
    CHECK(has(charmem::read_file(dir / "report.md"), "# Character memorization report"));
    auto t3 = cli({"report", "--results", f("results/headline.jsonl"), "--format", "markdown", "--out", dir.path().string()});
    CHECK(t3.code == 0);
    CHECK(has(charmem::read_file(dir / "report.md"), "32.0 (\xE2\x88\x92" "46.2)"));
  }
}
