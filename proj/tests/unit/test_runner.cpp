#include <doctest.h>

#include <cmath>
#include <json.hpp>
#include <limits>
#include <random>

#include "charmem/errors.hpp"
#include "charmem/runner.hpp"
#include "test_support.hpp"

using namespace charmem;
using charmem::testing::fixture;
using nlohmann::json;

namespace {

const char* kBasePlan = R"({"format_version": 1, "corpus": "c.jsonl", "tasks": ["CharacterGuess"],
  "strategies": ["none", "cross-cultural"], "conditions": ["Baseline", "Gist"], "models": ["m1"], "trials": 3})";

std::string with(const std::string& key, const json& value) {
  json j = json::parse(kBasePlan);
  j[key] = value;
  return j.dump();
}

std::string config_error_path(const std::string& text) {
  try {
    parse_plan(text, "/base");
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "<no error>";
}

TrialRecord rec(CellKey key, int trial, std::string seg, double v, bool ok = true) {
  TrialRecord r;
  r.cell = std::move(key);
  r.trial = trial;
  r.segment_id = std::move(seg);
  r.work_id = "w";
  r.ok = ok;
  if (ok) r.scores = {{v, headline_metric(r.cell.task), 1}};
  else r.error = "boom";
  return r;
}

CellKey key(std::string strategy, PromptCondition c = PromptCondition::Baseline, std::string model = "m") {
  return {TaskKind::CharacterGuess, std::move(strategy), c, std::move(model)};
}

}  // namespace

TEST_SUITE("runner") {
  TEST_CASE("plan expands to a deterministic grid") {
    auto p = parse_plan(kBasePlan, "/base");
    CHECK(p.cells().size() == 4);
    CHECK(p.trials == 3);
    CHECK(p.corpus == std::filesystem::path("/base/c.jsonl"));
    CHECK(p.cells()[0] == CellKey{TaskKind::CharacterGuess, "none", PromptCondition::Baseline, "m1"});
    CHECK(p.cells()[1] == CellKey{TaskKind::CharacterGuess, "none", PromptCondition::Gist, "m1"});
    CHECK(p.cells()[3] == CellKey{TaskKind::CharacterGuess, "cross-cultural", PromptCondition::Gist, "m1"});
    CHECK(p.ablations.label_mapping);
    CHECK_FALSE(p.ablations.include_descriptions);
  }

  TEST_CASE("soft setting plan") {
    auto p = load_plan_file(fixture("plans/soft.json"));
    CHECK(p.cells().size() == 3 * p.models.size() * p.tasks.size());
    for (const auto& c : p.cells()) CHECK(c.strategy == "none");
  }

  TEST_CASE("plan errors carry key paths") {
    CHECK(config_error_path(with("trials", 0)) == "trials");
    CHECK(config_error_path(with("tasks", json::array({"CharacterGuess", "Poetry"}))) == "tasks[1]");
    CHECK(config_error_path(with("strategies", json::array({"none", "shuffle"}))) == "strategies[1]");
    CHECK(config_error_path(with("conditions", json::array({"Loud"}))) == "conditions[0]");
    CHECK(config_error_path(with("models", json::array())) == "models");
    CHECK(config_error_path(with("colour", "blue")) == "colour");
    CHECK(config_error_path(with("ablations", json{{"include_descriptions", "yes"}})) == "ablations.include_descriptions");
    CHECK(config_error_path(with("nr_strategy", "same-cultural")) == "nr_strategy");
    CHECK(config_error_path(with("format_version", 2)) != "<no error>");
    CHECK_THROWS_AS(parse_plan("[1,", "/"), Error);
  }

  TEST_CASE("plan models must exist in the provider config") {
    auto cfg = load_provider_config_file(fixture("config/providers.json"));
    try {
      validate_plan_models(load_plan_file(fixture("plans/unknown_model.json")), cfg);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(e.path() == "models[0]");
    }
    CHECK_NOTHROW(validate_plan_models(load_plan_file(fixture("plans/mixed.json")), cfg));
  }

  TEST_CASE("plan hash is stable and content-sensitive") {
    auto cfg = load_provider_config_file(fixture("config/providers.json"));
    auto p = load_plan_file(fixture("plans/mixed.json"));
    std::string h = plan_hash(p, cfg);
    CHECK(h == plan_hash(load_plan_file(fixture("plans/mixed.json")), cfg));
    auto q = p;
    q.trials = 3;
    CHECK(plan_hash(q, cfg) != h);
    q = p;
    q.corpus = fixture("corpus/guess.jsonl");
    CHECK(plan_hash(q, cfg) != h);
  }

  TEST_CASE("aggregate means over segments then trials") {
    std::vector<TrialRecord> rs;
    rs.push_back(rec(key("none"), 0, "a", 0.5));
    rs.push_back(rec(key("none"), 1, "a", 0.6));
    rs.push_back(rec(key("none"), 2, "a", 0.7));
    auto cells = aggregate(rs);
    REQUIRE(cells.size() == 1);
    CHECK(cells[0].mean == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(cells[0].per_trial.size() == 3);
    CHECK(cells[0].complete);

    auto single = aggregate({rec(key("none"), 0, "a", 0.42)});
    CHECK(single[0].mean == 0.42);

    // two segments: trial means 0.5 and 1.0
    std::vector<TrialRecord> two = {rec(key("none"), 0, "a", 0.0), rec(key("none"), 0, "b", 1.0),
                                    rec(key("none"), 1, "a", 1.0), rec(key("none"), 1, "b", 1.0)};
    auto c2 = aggregate(two);
    CHECK(c2[0].per_trial == std::vector<double>{0.5, 1.0});
    CHECK(c2[0].mean == 0.75);
    CHECK(c2[0].n_segments == 2);
  }

  TEST_CASE("a failed trial flags the cell incomplete and drops the delta row") {
    std::vector<TrialRecord> rs;
    for (int t = 0; t < 3; ++t) {
      rs.push_back(rec(key("none"), t, "a", 1.0));
      rs.push_back(rec(key("cross-cultural"), t, "a", 0.5, t != 1));
      rs.push_back(rec(key("cross-cultural", PromptCondition::Gist), t, "a", 0.5));
    }
    auto cells = aggregate(rs);
    const ConditionCell* nr = nullptr;
    for (const auto& c : cells) {
      if (c.key == key("cross-cultural")) nr = &c;
    }
    REQUIRE(nr);
    CHECK_FALSE(nr->complete);
    CHECK(nr->failures == 1);
    auto d = compute_deltas(cells, "cross-cultural");
    CHECK(d.rows.empty());
    REQUIRE(d.warnings.size() == 1);
    CHECK(d.warnings[0].find("incomplete") != std::string::npos);
  }

  TEST_CASE("missing cells drop the row with a warning") {
    auto d = compute_deltas(aggregate({rec(key("none"), 0, "a", 1.0)}), "cross-cultural");
    CHECK(d.rows.empty());
    REQUIRE(d.warnings.size() == 1);
    CHECK(d.warnings[0].find("no NR cell") != std::string::npos);
  }

  TEST_CASE("delta examples") {
    auto r = make_delta_row(TaskKind::CharacterGuess, "GPT-4o", 0.782, 0.320, 0.315);
    CHECK(format_delta(r.drop_nr) == "(\xE2\x88\x92" "46.2)");
    CHECK(format_delta(r.delta_gist) == "(\xE2\x88\x92" "0.5)");
    auto qa = make_delta_row(TaskKind::QA, "GPT-4o", 0.443, 0.386, 0.386);
    CHECK(format_delta(qa.drop_nr) == "(\xE2\x88\x92" "5.7)");
    CHECK(qa.delta_gist == 0.0);
    CHECK(format_delta(qa.delta_gist) == "(+0.0)");
    auto same = make_delta_row(TaskKind::QA, "m", 0.5, 0.5, 0.5);
    CHECK(same.drop_nr == 0.0);
    CHECK(same.delta_gist == 0.0);
    CHECK(format_delta(-0.014) == "(+1.4)");
  }

  TEST_CASE("delta identities hold to rounding error") {
    // origin - drop_nr and nr - delta_gist are computed in binary floating
    // point, so they reproduce nr and nr_gist to within a few ulps.
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::size_t exact = 0;
    for (int i = 0; i < 10000; ++i) {
      auto r = make_delta_row(TaskKind::QA, "m", u(rng), u(rng), u(rng));
      CHECK(std::fabs((r.origin - r.drop_nr) - r.nr) <= 4 * std::numeric_limits<double>::epsilon());
      CHECK(std::fabs((r.nr - r.delta_gist) - r.nr_gist) <= 4 * std::numeric_limits<double>::epsilon());
      CHECK(r.drop_nr == r.origin - r.nr);
      CHECK(r.delta_gist == r.nr - r.nr_gist);
      if (r.origin - r.drop_nr == r.nr) ++exact;
    }
    CHECK(exact > 5000);
    // scores that are multiples of 1/2^k are exact
    auto e = make_delta_row(TaskKind::QA, "m", 0.75, 0.25, 0.125);
    CHECK(e.origin - e.drop_nr == e.nr);
    CHECK(e.nr - e.delta_gist == e.nr_gist);
  }

  TEST_CASE("score formatting") {
    CHECK(format_score(0.782) == "78.2");
    CHECK(format_score(0.0) == "0.0");
    CHECK(format_score(1.0) == "100.0");
    CHECK(format_score(0.0004) == "0.0");
    CHECK(format_score(0.3196) == "32.0");
  }

  TEST_CASE("headline delta markdown") {
    auto rep = build_report(load_results_file(fixture("results/headline.jsonl")));
    CHECK(rep.deltas.rows.size() == 18);
    CHECK(rep.deltas.warnings.empty());
    std::string md = render_markdown(rep);
    auto line_start = md.find("| Tvshow Guess |");
    REQUIRE(line_start != std::string::npos);
    std::string line = md.substr(line_start, md.find('\n', line_start) - line_start);
    CHECK(line.find("| 78.2 | 32.0 (\xE2\x88\x92" "46.2) | 31.5 (\xE2\x88\x92" "0.5) |") != std::string::npos);
    CHECK(md.find("Plan hash: `headline-fixture`") != std::string::npos);
    CHECK(render_markdown(rep) == md);
  }

  TEST_CASE("empty results give a header-only report") {
    auto rep = build_report(load_results(""));
    std::string md = render_markdown(rep);
    CHECK(md.find("# Character memorization report") == 0);
    CHECK(rep.cells.empty());
    CHECK(rep.deltas.rows.empty());
    charmem::testing::TempDir dir;
    auto files = emit_report(rep, ReportFormat::all, dir.path());
    CHECK(files.size() >= 3);
    for (const auto& f : files) CHECK(std::filesystem::exists(f));
  }

  TEST_CASE("report json round trip") {
    auto rep = build_report(load_results_file(fixture("results/headline.jsonl")));
    CHECK(delta_report_from_json(render_report_json(rep)) == rep.deltas);
    CHECK(render_report_json(rep) == render_report_json(build_report(load_results_file(fixture("results/headline.jsonl")))));
  }

  TEST_CASE("results records round trip") {
    TrialRecord r = rec(key("cross-cultural"), 2, "seg", 0.25);
    r.request_hash = "ab";
    r.response_text = "P0: X";
    r.parsed = true;
    RunHeader h;
    h.plan_hash = "h";
    h.trials = 3;
    h.tasks = {TaskKind::CharacterGuess};
    h.strategies = {"none", "cross-cultural"};
    h.conditions = {PromptCondition::Baseline};
    h.models = {"m"};
    h.task_labels = {{TaskKind::CharacterGuess, "Guess"}};
    auto file = load_results(run_header_to_json(h) + "\n" + trial_record_to_json(r) + "\n");
    REQUIRE(file.header);
    CHECK(file.header->task_labels.at(TaskKind::CharacterGuess) == "Guess");
    CHECK(file.header->trials == 3);
    REQUIRE(file.records.size() == 1);
    CHECK(file.records[0].cell == r.cell);
    CHECK(file.records[0].trial == 2);
    CHECK(file.records[0].scores[0].value == 0.25);
    CHECK(file.records[0].response_text == "P0: X");
  }

  TEST_CASE("corrupt results report the line number") {
    try {
      load_results_file(fixture("results/truncated.jsonl"));
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 5);
    }
    try {
      load_results("{\"record\":\"trial\"}\n");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 1);
    }
  }

  TEST_CASE("gist execution covers every record without network") {
    auto cfg = load_provider_config_file(fixture("config/providers.json"));
    auto plan = load_plan_file(fixture("plans/mixed.json"));
    plan.trials = 1;
    charmem::testing::TempDir dir;
    auto svc = make_completion_service(cfg, dir / "cache");
    auto summary = execute(plan, cfg, *svc, {dir.path(), std::nullopt, {}});
    auto corpus = load_corpus_file(plan.corpus);
    CHECK(corpus.size() >= 20);
    std::size_t expected = 0;
    for (const auto& c : plan.cells()) {
      for (const auto& s : corpus) expected += s.task.kind == c.task ? 1 : 0;
    }
    CHECK(summary.jobs == expected);
    CHECK(summary.completed == expected);
    CHECK(summary.failed == 0);
    CHECK_FALSE(summary.interrupted);
    CHECK(svc->backend("live")->calls() == 0);
    CHECK(svc->backend("verbatim")->calls() == 0);
    auto results = load_results_file(dir / "results.jsonl");
    CHECK(results.records.size() == expected);
    auto rep = build_report(results);
    for (const auto& row : rep.deltas.rows) {
      if (row.task == TaskKind::CharacterGuess) CHECK(row.drop_nr == 0.0);
    }
    CHECK(std::filesystem::exists(dir / "report.md"));
    CHECK(std::filesystem::exists(dir / "namemaps.json"));
  }

  TEST_CASE("missing roster is a preflight error naming the work") {
    auto cfg = load_provider_config_file(fixture("config/providers.json"));
    auto plan = load_plan_file(fixture("plans/missing_roster.json"));
    charmem::testing::TempDir dir;
    auto svc = make_completion_service(cfg, dir / "cache");
    try {
      execute(plan, cfg, *svc, {dir.path(), std::nullopt, {}});
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("seinfeld") != std::string::npos);
    }
    CHECK(svc->stats().requests == 0);
  }

  TEST_CASE("interrupted run resumes from the cache with identical output") {
    auto cfg = load_provider_config_file(fixture("config/providers.json"));
    auto plan = load_plan_file(fixture("plans/guess_gist.json"));
    plan.trials = 1;
    charmem::testing::TempDir full, cut;
    {
      auto svc = make_completion_service(cfg, full / "cache");
      CHECK_FALSE(execute(plan, cfg, *svc, {full.path(), std::nullopt, {}}).interrupted);
    }
    std::size_t done = 0;
    {
      auto svc = make_completion_service(cfg, cut / "cache");
      auto s = execute(plan, cfg, *svc, {cut.path(), 7, {}});
      CHECK(s.interrupted);
      done = s.completed;
      CHECK(done >= 7);
      CHECK_FALSE(std::filesystem::exists(cut / "report.md"));
    }
    auto svc = make_completion_service(cfg, cut / "cache");
    auto s = execute(plan, cfg, *svc, {cut.path(), std::nullopt, {}});
    CHECK_FALSE(s.interrupted);
    CHECK(s.stats.cache_hits == done);
    CHECK(read_file(cut / "report.md") == read_file(full / "report.md"));
    CHECK(read_file(cut / "results.jsonl") == read_file(full / "results.jsonl"));
  }

  TEST_CASE("default task labels and nr strategy") {
    CHECK(default_task_label(TaskKind::CharacterGuess) != "");
    CHECK(default_nr_strategy({"none", "mask", "cross-cultural"}) == "cross-cultural");
    CHECK(default_nr_strategy({"none", "mask"}) == "mask");
    CHECK_FALSE(default_nr_strategy({"none"}));
    CHECK(parse_report_format("csv") == ReportFormat::csv);
    CHECK_FALSE(parse_report_format("pdf"));
  }
}
