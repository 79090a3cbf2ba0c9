#include "charmem_cli/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <json.hpp>
#include <set>

#include "charmem/corpus.hpp"
#include "charmem/errors.hpp"
#include "charmem/perturb.hpp"
#include "charmem/probe.hpp"
#include "charmem/providers.hpp"
#include "charmem/runner.hpp"
#include "charmem/text.hpp"

namespace charmem::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct ErrorInfo {
  std::string type;
  std::string message;
  std::size_t line = 0;
  std::string path;
};

ErrorInfo describe(const std::exception& e) {
  ErrorInfo info{"Error", e.what(), 0, {}};
  if (auto* p = dynamic_cast<const ParseError*>(&e)) {
    info.type = "ParseError";
    info.line = p->line();
  } else if (auto* c = dynamic_cast<const ConfigError*>(&e)) {
    info.type = "ConfigError";
    info.path = c->path();
  } else if (dynamic_cast<const CredentialError*>(&e)) {
    info.type = "CredentialError";
  } else if (dynamic_cast<const TransportError*>(&e)) {
    info.type = "TransportError";
  } else if (dynamic_cast<const PoolExhaustedError*>(&e)) {
    info.type = "PoolExhaustedError";
  } else if (dynamic_cast<const PerturbError*>(&e)) {
    info.type = "PerturbError";
  } else if (dynamic_cast<const RosterError*>(&e)) {
    info.type = "RosterError";
  } else if (dynamic_cast<const IntegrityError*>(&e)) {
    info.type = "IntegrityError";
  } else if (dynamic_cast<const TemplateError*>(&e)) {
    info.type = "TemplateError";
  } else if (dynamic_cast<const IoError*>(&e)) {
    info.type = "IoError";
  } else if (!dynamic_cast<const Error*>(&e)) {
    info.type = "InternalError";
  }
  return info;
}

void report_error(std::ostream& err, bool as_json, const ErrorInfo& info, int code) {
  if (as_json) {
    json j = {{"error", {{"type", info.type}, {"message", info.message}, {"exit_code", code}}}};
    if (info.line) j["error"]["line"] = info.line;
    if (!info.path.empty()) j["error"]["path"] = info.path;
    err << j.dump() << "\n";
  } else {
    err << "charmem: error: " << info.message << "\n";
  }
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s + ",") {
    if (c == ',') {
      auto t = text::trim(cur);
      if (!t.empty()) out.push_back(t);
      cur.clear();
    } else {
      cur += c;
    }
  }
  return out;
}

// Roster dir is optional for some commands; missing directory is a config error.
std::map<std::string, Roster> rosters_from(const std::string& dir) {
  if (dir.empty()) return {};
  if (!fs::is_directory(dir)) throw ConfigError("--roster-dir", "not a directory: " + dir);
  return load_roster_dir(dir);
}

// Only the providers the listed models use; credentials are checked for those.
ProviderConfig restrict_config(const ProviderConfig& config, const std::vector<std::string>& models) {
  ProviderConfig out = config;
  std::set<std::string> used;
  for (const auto& m : models) used.insert(config.model(m).provider_id);
  out.providers.clear();
  for (const auto& p : config.providers) {
    if (used.count(p.id)) out.providers.push_back(p);
  }
  return out;
}

std::string percent(std::size_t part, std::size_t whole) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", whole ? 100.0 * static_cast<double>(part) / static_cast<double>(whole) : 0.0);
  return buf;
}

// ---------------------------------------------------------------- commands

struct ValidateArgs {
  std::string corpus, roster_dir, plan, provider_config, probe_corpus;
};

int cmd_validate(const ValidateArgs& a, std::ostream& out) {
  std::size_t problems = 0;
  auto rosters = rosters_from(a.roster_dir);
  if (!a.corpus.empty()) {
    auto segments = load_corpus_file(a.corpus);
    std::map<std::string, std::size_t> per_task;
    for (const auto& s : segments) {
      ++per_task[std::string(to_string(s.task.kind))];
      auto it = rosters.find(s.work_id);
      if (it == rosters.end()) {
        if (!a.roster_dir.empty()) {
          out << s.id << ": no roster for work '" << s.work_id << "'\n";
          ++problems;
        }
        continue;
      }
      for (const auto& d : validate_segment(s, it->second)) {
        out << d.segment_id << ": utterance " << d.utterance_index << ": " << d.message << "\n";
        ++problems;
      }
    }
    out << "corpus: " << segments.size() << " segments";
    for (const auto& [k, n] : per_task) out << ", " << k << " " << n;
    out << "\n";
  }
  if (!a.roster_dir.empty()) out << "rosters: " << rosters.size() << "\n";
  if (!a.probe_corpus.empty()) {
    auto probe = load_probe_corpus_file(a.probe_corpus);
    out << "probe corpus: " << probe.size() << " segments\n";
  }
  std::optional<ProviderConfig> config;
  if (!a.provider_config.empty()) {
    config = load_provider_config_file(a.provider_config);
    out << "provider config: " << config->providers.size() << " providers, " << config->models.size() << " models\n";
  }
  if (!a.plan.empty()) {
    auto plan = load_plan_file(a.plan);
    if (config) validate_plan_models(plan, *config);
    out << "plan: " << plan.cells().size() << " cells x " << plan.trials << " trials\n";
  }
  if (problems) throw Error(std::to_string(problems) + " validation problem(s)");
  out << "ok\n";
  return 0;
}

struct PerturbArgs {
  std::string corpus, roster_dir, strategy, out, pool;
  std::uint64_t seed = 0;
};

int cmd_perturb(const PerturbArgs& a, std::ostream& out) {
  auto strategy = ReplacementStrategy::parse(a.strategy);
  auto segments = load_corpus_file(a.corpus);
  auto rosters = rosters_from(a.roster_dir);
  std::optional<NamePool> custom;
  if (!a.pool.empty()) custom = load_name_pool_file(a.pool);
  const NamePool& pool = custom ? *custom : default_pool_for(strategy);

  std::map<std::string, NameMap> maps;
  for (const auto& s : segments) {
    if (maps.count(s.work_id)) continue;
    auto it = rosters.find(s.work_id);
    if (it == rosters.end()) throw ConfigError("--roster-dir", "no roster for work '" + s.work_id + "'");
    maps.emplace(s.work_id, build_name_map(it->second, strategy, pool, a.seed));
  }
  std::string jsonl;
  std::size_t subs = 0;
  for (const auto& s : segments) {
    auto p = apply_name_map(s, maps.at(s.work_id));
    json line = json::parse(segment_to_json_line(p.segment));
    json log = json::array();
    for (const auto& x : p.log) {
      log.push_back({{"slot", x.slot}, {"offset", x.offset}, {"inserted", x.inserted}, {"original", x.original}});
    }
    subs += p.log.size();
    line["substitutions"] = log;
    jsonl += line.dump() + "\n";
  }
  fs::path out_path(a.out);
  write_file_atomic(out_path, jsonl);
  json audit = json::object();
  for (const auto& [w, m] : maps) audit[w] = json::parse(name_map_to_json(m));
  fs::path audit_path = out_path;
  audit_path.replace_extension(".namemaps.json");
  write_file_atomic(audit_path, audit.dump(2) + "\n");
  out << "perturbed " << segments.size() << " segments (" << subs << " substitutions) with " << strategy.id()
      << " seed " << a.seed << "\n"
      << "wrote " << out_path.string() << "\nwrote " << audit_path.string() << "\n";
  return 0;
}

struct ProbeArgs {
  std::string probe_corpus, roster_dir, provider_config, models, strategies = "none,cross-cultural", out;
  int trials = 1;
  int concurrency = 4;
  std::uint64_t seed = 0;
};

int cmd_probe(const ProbeArgs& a, std::ostream& out) {
  auto segments = load_probe_corpus_file(a.probe_corpus);
  auto rosters = rosters_from(a.roster_dir);
  auto config = load_provider_config_file(a.provider_config);
  auto model_ids = split_list(a.models);
  if (model_ids.empty()) throw ConfigError("--models", "no model ids given");
  for (const auto& m : model_ids) config.model(m);
  std::vector<std::optional<ReplacementStrategy>> strategies;
  for (const auto& s : split_list(a.strategies)) {
    if (s == kOriginStrategy) {
      strategies.emplace_back(std::nullopt);
    } else {
      strategies.emplace_back(ReplacementStrategy::parse(s));
    }
  }
  if (strategies.empty()) throw ConfigError("--strategies", "no strategies given");
  auto used = restrict_config(config, model_ids);
  preflight_credentials(used);
  auto service = make_completion_service(used, fs::path(a.out) / "cache");
  ProbeOptions opts;
  opts.trials = a.trials;
  opts.seed = a.seed;
  opts.concurrency = a.concurrency;
  std::vector<ProbeResult> results;
  for (const auto& m : model_ids) {
    for (const auto& s : strategies) {
      results.push_back(run_probe(segments, s, rosters, config.model(m), *service, opts));
      const auto& r = results.back();
      out << m << " / " << r.strategy_id() << ": accuracy " << format_score(r.accuracy) << "% (" << r.correct << "/"
          << r.total << ", " << r.excluded << " excluded)\n";
    }
  }
  write_file_atomic(fs::path(a.out) / "probe_grid.json", probe_grid_json(results));
  write_file_atomic(fs::path(a.out) / "probe_heatmap.csv", probe_grid_csv(results));
  out << "wrote " << (fs::path(a.out) / "probe_grid.json").string() << "\n";
  return 0;
}

struct RunArgs {
  std::string plan, provider_config, out;
  std::size_t abort_after = 0;
};

int cmd_run(const RunArgs& a, std::ostream& out) {
  auto plan = load_plan_file(a.plan);
  auto config = load_provider_config_file(a.provider_config);
  validate_plan_models(plan, config);
  std::vector<std::string> used_models = plan.models;
  if (plan.description_model) used_models.push_back(*plan.description_model);
  auto used = restrict_config(config, used_models);
  preflight_credentials(used);
  auto service = make_completion_service(used, fs::path(a.out) / "cache");
  ExecuteOptions opts;
  opts.out_dir = a.out;
  if (a.abort_after) opts.abort_after = a.abort_after;
  auto summary = execute(plan, used, *service, opts);
  const auto& st = summary.stats;
  out << "plan " << summary.plan_hash.substr(0, 12) << ": " << summary.cells << " cells, " << summary.completed << "/"
      << summary.jobs << " records (" << summary.failed << " failed), cache hits " << st.cache_hits << "/"
      << st.requests << " (" << percent(st.cache_hits, st.requests) << ")\n";
  if (summary.interrupted) throw Error("run interrupted after " + std::to_string(summary.completed) + " of " +
                                       std::to_string(summary.jobs) + " records");
  out << "wrote " << (fs::path(a.out) / "report.md").string() << "\n";
  return 0;
}

struct ReportArgs {
  std::string results, format = "all", out, nr_strategy;
};

int cmd_report(const ReportArgs& a, std::ostream& out) {
  auto format = parse_report_format(a.format);
  if (!format) throw ConfigError("--format", "expected markdown, csv, json or all");
  auto results = load_results_file(a.results);
  std::optional<std::string> nr;
  if (!a.nr_strategy.empty()) nr = a.nr_strategy;
  auto report = build_report(results, nr);
  fs::path dir = a.out.empty() ? fs::path(a.results).parent_path() : fs::path(a.out);
  if (dir.empty()) dir = ".";
  for (const auto& p : emit_report(report, *format, dir)) out << "wrote " << p.string() << "\n";
  for (const auto& w : report.deltas.warnings) out << "warning: " << w << "\n";
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Measure how much character understanding rests on memorized names."};
  app.name("charmem");
  app.require_subcommand(1);
  app.fallthrough();
  bool json_errors = false;
  app.add_flag("--json-errors", json_errors, "Print errors as one JSON object on stderr");

  ValidateArgs va;
  auto* validate = app.add_subcommand("validate", "Check corpus, rosters, plan and provider config files");
  validate->add_option("--corpus", va.corpus, "Task corpus JSONL")->check(CLI::ExistingFile);
  validate->add_option("--roster-dir", va.roster_dir, "Directory of roster JSON files");
  validate->add_option("--plan", va.plan, "Experiment plan JSON")->check(CLI::ExistingFile);
  validate->add_option("--provider-config", va.provider_config, "Provider config JSON")->check(CLI::ExistingFile);
  validate->add_option("--probe-corpus", va.probe_corpus, "Source-probe corpus JSONL")->check(CLI::ExistingFile);

  PerturbArgs pa;
  auto* perturb = app.add_subcommand("perturb", "Apply a name-replacement strategy to a corpus");
  perturb->add_option("--corpus", pa.corpus, "Task corpus JSONL")->required()->check(CLI::ExistingFile);
  perturb->add_option("--roster-dir", pa.roster_dir, "Directory of roster JSON files")->required();
  perturb->add_option("--strategy", pa.strategy,
                      "mask, mask:<pattern>, cross-cultural[+swap] or same-cultural[+swap]")
      ->required();
  perturb->add_option("--seed", pa.seed, "Pool offset for name assignment")->capture_default_str();
  perturb->add_option("--pool", pa.pool, "Name pool JSON replacing the bundled one")->check(CLI::ExistingFile);
  perturb->add_option("--out", pa.out, "Output JSONL; name maps go to <out>.namemaps.json")->required();

  ProbeArgs pr;
  auto* probe = app.add_subcommand("probe", "Run the source-identification probe");
  probe->add_option("--probe-corpus", pr.probe_corpus, "Probe corpus JSONL")->required()->check(CLI::ExistingFile);
  probe->add_option("--roster-dir", pr.roster_dir, "Directory of roster JSON files");
  probe->add_option("--provider-config", pr.provider_config, "Provider config JSON")
      ->required()
      ->check(CLI::ExistingFile);
  probe->add_option("--models", pr.models, "Comma-separated model ids")->required();
  probe->add_option("--strategies", pr.strategies, "Comma-separated strategy ids; none = original text")
      ->capture_default_str();
  probe->add_option("--trials", pr.trials, "Trials per segment")->capture_default_str()->check(CLI::PositiveNumber);
  probe->add_option("--seed", pr.seed, "Pool offset for name assignment")->capture_default_str();
  probe->add_option("--concurrency", pr.concurrency, "Parallel requests")->capture_default_str()->check(CLI::PositiveNumber);
  probe->add_option("--out", pr.out, "Output directory")->required();

  RunArgs ra;
  auto* run = app.add_subcommand("run", "Execute an experiment plan and write reports");
  run->add_option("--plan", ra.plan, "Experiment plan JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--provider-config", ra.provider_config, "Provider config JSON")
      ->required()
      ->check(CLI::ExistingFile);
  run->add_option("--out", ra.out, "Output directory (results, reports, cache)")->required();
  run->add_option("--abort-after", ra.abort_after, "Stop after this many records (testing)")->group("");

  ReportArgs rp;
  auto* report = app.add_subcommand("report", "Rebuild reports from a results file");
  report->add_option("--results", rp.results, "results.jsonl from a run")->required()->check(CLI::ExistingFile);
  report->add_option("--format", rp.format, "markdown, csv, json or all")->capture_default_str();
  report->add_option("--out", rp.out, "Output directory (default: next to the results)");
  report->add_option("--nr-strategy", rp.nr_strategy, "Strategy used for the NR columns");

  try {
    std::vector<std::string> args;
    for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    // Usage errors keep code 2 regardless of CLI11's own numbering.
    if (json_errors) {
      report_error(err, true, {"UsageError", e.what(), 0, {}}, 2);
    } else {
      app.exit(e, out, err);
    }
    return 2;
  }

  try {
    if (*validate) return cmd_validate(va, out);
    if (*perturb) return cmd_perturb(pa, out);
    if (*probe) return cmd_probe(pr, out);
    if (*run) return cmd_run(ra, out);
    if (*report) return cmd_report(rp, out);
  } catch (const std::exception& e) {
    report_error(err, json_errors, describe(e), 1);
    return 1;
  }
  return 2;
}

}  // namespace charmem::cli
