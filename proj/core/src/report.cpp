#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "charmem/errors.hpp"
#include "charmem/runner.hpp"
#include "charmem/text.hpp"
#include "json_util.hpp"

namespace charmem {

namespace fs = std::filesystem;
using detail::json;

// ---------------------------------------------------------------- aggregate

namespace {

template <class T>
std::size_t rank_of(const std::vector<T>& order, const T& v) {
  auto it = std::find(order.begin(), order.end(), v);
  return static_cast<std::size_t>(it - order.begin());
}

// Header order when available, first appearance otherwise.
struct Ordering {
  std::vector<TaskKind> tasks;
  std::vector<std::string> strategies;
  std::vector<PromptCondition> conditions;
  std::vector<std::string> models;

  Ordering(const std::vector<TrialRecord>& records, const RunHeader* h) {
    if (h) {
      tasks = h->tasks;
      strategies = h->strategies;
      conditions = h->conditions;
      models = h->models;
    }
    for (const auto& r : records) {
      if (rank_of(tasks, r.cell.task) == tasks.size()) tasks.push_back(r.cell.task);
      if (rank_of(strategies, r.cell.strategy) == strategies.size()) strategies.push_back(r.cell.strategy);
      if (rank_of(conditions, r.cell.condition) == conditions.size()) conditions.push_back(r.cell.condition);
      if (rank_of(models, r.cell.model) == models.size()) models.push_back(r.cell.model);
    }
  }

  auto key(const CellKey& k) const {
    return std::make_tuple(rank_of(tasks, k.task), rank_of(strategies, k.strategy), rank_of(conditions, k.condition),
                           rank_of(models, k.model));
  }
};

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

std::vector<ConditionCell> aggregate(const std::vector<TrialRecord>& records, const RunHeader* order) {
  int trials = order ? order->trials : 0;
  for (const auto& r : records) trials = std::max(trials, r.trial + 1);

  std::map<CellKey, std::vector<const TrialRecord*>> groups;
  for (const auto& r : records) groups[r.cell].push_back(&r);

  Ordering ord(records, order);
  std::vector<CellKey> keys;
  for (const auto& [k, v] : groups) keys.push_back(k);
  std::sort(keys.begin(), keys.end(), [&](const CellKey& a, const CellKey& b) { return ord.key(a) < ord.key(b); });

  std::vector<ConditionCell> out;
  for (const auto& key : keys) {
    const auto& recs = groups.at(key);
    std::set<std::string> segments;
    std::size_t failures = 0;
    std::vector<MetricId> metrics;
    for (const auto* r : recs) {
      segments.insert(r->segment_id);
      if (!r->ok) ++failures;
      for (const auto& s : r->scores) {
        if (std::find(metrics.begin(), metrics.end(), s.metric) == metrics.end()) metrics.push_back(s.metric);
      }
    }
    // Headline metric first.
    auto hl = std::find(metrics.begin(), metrics.end(), headline_metric(key.task));
    if (hl != metrics.end()) std::rotate(metrics.begin(), hl, hl + 1);
    if (metrics.empty()) metrics.push_back(headline_metric(key.task));

    for (auto metric : metrics) {
      ConditionCell c;
      c.key = key;
      c.metric = metric;
      c.headline = metric == headline_metric(key.task);
      c.n_segments = segments.size();
      c.failures = failures;
      for (int t = 0; t < trials; ++t) {
        std::vector<double> values;
        std::set<std::string> scored;
        for (const auto* r : recs) {
          if (r->trial != t || !r->ok) continue;
          for (const auto& s : r->scores) {
            if (s.metric == metric && scored.insert(r->segment_id).second) values.push_back(s.value);
          }
        }
        if (scored.size() != segments.size()) c.complete = false;
        if (!values.empty()) c.per_trial.push_back(mean_of(values));
      }
      c.mean = mean_of(c.per_trial);
      out.push_back(std::move(c));
    }
  }
  return out;
}

// ---------------------------------------------------------------- deltas

DeltaRow make_delta_row(TaskKind task, std::string model, double origin, double nr, double nr_gist) {
  return {task, std::move(model), origin, nr, nr_gist, origin - nr, nr - nr_gist};
}

DeltaReport compute_deltas(const std::vector<ConditionCell>& cells, const std::string& nr_strategy) {
  DeltaReport rep;
  rep.nr_strategy = nr_strategy;
  std::vector<std::pair<TaskKind, std::string>> pairs;
  std::map<CellKey, const ConditionCell*> headline;
  for (const auto& c : cells) {
    if (!c.headline) continue;
    headline[c.key] = &c;
    std::pair<TaskKind, std::string> tm{c.key.task, c.key.model};
    if (std::find(pairs.begin(), pairs.end(), tm) == pairs.end()) pairs.push_back(tm);
  }
  // Task-major order, keeping first-appearance order inside each group.
  std::stable_sort(pairs.begin(), pairs.end(), [&](const auto& a, const auto& b) {
    auto first = [&](TaskKind t) {
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (pairs[i].first == t) return i;
      }
      return pairs.size();
    };
    return first(a.first) < first(b.first);
  });
  for (const auto& [task, model] : pairs) {
    std::string where = std::string(to_string(task)) + "/" + model;
    const ConditionCell* parts[3] = {nullptr, nullptr, nullptr};
    const CellKey keys[3] = {{task, std::string(kOriginStrategy), PromptCondition::Baseline, model},
                             {task, nr_strategy, PromptCondition::Baseline, model},
                             {task, nr_strategy, PromptCondition::Gist, model}};
    const char* names[3] = {"Origin", "NR", "NR+GIST"};
    bool usable = true;
    for (int i = 0; i < 3; ++i) {
      auto it = headline.find(keys[i]);
      if (it == headline.end()) {
        rep.warnings.push_back(where + ": no " + names[i] + " cell; row omitted");
        usable = false;
        break;
      }
      if (!it->second->complete) {
        rep.warnings.push_back(where + ": " + names[i] + " cell is incomplete; row omitted");
        usable = false;
        break;
      }
      parts[i] = it->second;
    }
    if (usable) rep.rows.push_back(make_delta_row(task, model, parts[0]->mean, parts[1]->mean, parts[2]->mean));
  }
  return rep;
}

std::string format_score(double value) {
  double v = value * 100.0;
  if (std::fabs(v) < 0.05) v = 0.0;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

std::string format_delta(double loss) {
  double v = loss * 100.0;
  if (std::fabs(v) < 0.05) return "(+0.0)";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", std::fabs(v));
  return v > 0 ? std::string("(\xE2\x88\x92") + buf + ")" : std::string("(+") + buf + ")";
}

// ---------------------------------------------------------------- build

ReportInputs build_report(const ResultsFile& results, const std::optional<std::string>& nr_strategy) {
  ReportInputs rep;
  if (results.header) rep.header = *results.header;
  Ordering ord(results.records, results.header ? &*results.header : nullptr);
  rep.header.tasks = ord.tasks;
  rep.header.strategies = ord.strategies;
  rep.header.conditions = ord.conditions;
  rep.header.models = ord.models;
  for (auto t : rep.header.tasks) {
    if (!rep.header.task_labels.count(t)) rep.header.task_labels[t] = default_task_label(t);
  }
  rep.cells = aggregate(results.records, &rep.header);
  std::optional<std::string> nr = nr_strategy;
  if (!nr) nr = rep.header.nr_strategy;
  if (!nr) nr = default_nr_strategy(rep.header.strategies);
  if (nr_strategy && !rep.cells.empty() &&
      std::find(rep.header.strategies.begin(), rep.header.strategies.end(), *nr_strategy) == rep.header.strategies.end()) {
    throw ConfigError("nr-strategy", "'" + *nr_strategy + "' does not occur in the results");
  }
  if (nr) {
    rep.deltas = compute_deltas(rep.cells, *nr);
  } else if (!rep.cells.empty()) {
    rep.deltas.warnings.push_back("no name-replacement strategy in the results; no delta rows");
  }
  rep.header.nr_strategy = nr;
  return rep;
}

// ---------------------------------------------------------------- render

namespace {

std::string label_of(const ReportInputs& r, TaskKind t) {
  auto it = r.header.task_labels.find(t);
  return it != r.header.task_labels.end() ? it->second : default_task_label(t);
}

std::string fixed(double v, int digits) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  return "\"" + text::replace_all(s, "\"", "\"\"") + "\"";
}

std::string per_trial_text(const ConditionCell& c) {
  std::vector<std::string> parts;
  for (double v : c.per_trial) parts.push_back(format_score(v));
  return text::join(parts, "; ");
}

const DeltaRow* find_row(const DeltaReport& d, TaskKind t, const std::string& model) {
  for (const auto& r : d.rows) {
    if (r.task == t && r.model == model) return &r;
  }
  return nullptr;
}

json cell_to_json(const ConditionCell& c) {
  return {{"task", std::string(to_string(c.key.task))},
          {"strategy", c.key.strategy},
          {"condition", std::string(to_string(c.key.condition))},
          {"model", c.key.model},
          {"metric_id", std::string(to_string(c.metric))},
          {"headline", c.headline},
          {"mean", c.mean},
          {"per_trial", c.per_trial},
          {"n_segments", c.n_segments},
          {"failures", c.failures},
          {"complete", c.complete}};
}

json deltas_to_json(const DeltaReport& d) {
  json rows = json::array();
  for (const auto& r : d.rows) {
    rows.push_back({{"task", std::string(to_string(r.task))},
                    {"model", r.model},
                    {"origin", r.origin},
                    {"nr", r.nr},
                    {"nr_gist", r.nr_gist},
                    {"drop_nr", r.drop_nr},
                    {"delta_gist", r.delta_gist}});
  }
  return {{"nr_strategy", d.nr_strategy}, {"rows", rows}, {"warnings", d.warnings}};
}

}  // namespace

std::string render_markdown(const ReportInputs& r) {
  std::string md = "# Character memorization report\n\n";
  md += "Plan hash: `" + (r.header.plan_hash.empty() ? std::string("unknown") : r.header.plan_hash) + "`\n\n";
  if (!r.header.model_specs.empty()) {
    md += "| Model | Provider | Model name | Temperature | Max tokens | Seed |\n|---|---|---|---|---|---|\n";
    for (const auto& m : r.header.model_specs) {
      md += "| " + m.id + " | " + m.provider_id + " | " + m.model_name + " | " + fixed(m.params.temperature, 2) +
            " | " + std::to_string(m.params.max_tokens) + " | " +
            (m.params.seed ? std::to_string(*m.params.seed) : std::string("-")) + " |\n";
    }
    md += "\n";
  }

  md += "## Name replacement";
  if (r.header.nr_strategy) md += " (" + *r.header.nr_strategy + ")";
  md += "\n\nNR shows the drop from Origin; NR+GIST shows the change from NR.\n\n| Tasks |";
  std::string rule = "|---|";
  for (const auto& m : r.header.models) {
    md += " " + m + " Origin | " + m + " NR | " + m + " NR+GIST |";
    rule += "---|---|---|";
  }
  md += "\n" + rule + "\n";
  for (auto t : r.header.tasks) {
    bool any = false;
    std::string line = "| " + label_of(r, t) + " |";
    for (const auto& m : r.header.models) {
      if (const DeltaRow* row = find_row(r.deltas, t, m)) {
        any = true;
        line += " " + format_score(row->origin) + " | " + format_score(row->nr) + " " + format_delta(row->drop_nr) +
                " | " + format_score(row->nr_gist) + " " + format_delta(row->delta_gist) + " |";
      } else {
        line += " n/a | n/a | n/a |";
      }
    }
    if (any) md += line + "\n";
  }

  md += "\n## Condition cells\n\n| Task | Strategy | Condition | Model | Metric | Mean | Per trial | Segments | Status |\n"
        "|---|---|---|---|---|---|---|---|---|\n";
  for (const auto& c : r.cells) {
    std::string status = c.complete ? "complete" : "incomplete";
    if (c.failures) status += " (" + std::to_string(c.failures) + " failed)";
    md += "| " + label_of(r, c.key.task) + " | " + c.key.strategy + " | " + std::string(to_string(c.key.condition)) +
          " | " + c.key.model + " | " + std::string(to_string(c.metric)) + " | " + format_score(c.mean) + " | " +
          per_trial_text(c) + " | " + std::to_string(c.n_segments) + " | " + status + " |\n";
  }
  if (!r.deltas.warnings.empty()) {
    md += "\n## Warnings\n\n";
    for (const auto& w : r.deltas.warnings) md += "- " + w + "\n";
  }
  return md;
}

std::string render_cells_csv(const ReportInputs& r) {
  std::string out = "task,strategy,condition,model,metric,headline,mean,per_trial,n_segments,failures,complete\n";
  for (const auto& c : r.cells) {
    std::vector<std::string> pt;
    for (double v : c.per_trial) pt.push_back(fixed(v, 6));
    out += std::string(to_string(c.key.task)) + "," + csv_field(c.key.strategy) + "," +
           std::string(to_string(c.key.condition)) + "," + csv_field(c.key.model) + "," +
           std::string(to_string(c.metric)) + "," + (c.headline ? "1" : "0") + "," + fixed(c.mean, 6) + "," +
           text::join(pt, ";") + "," + std::to_string(c.n_segments) + "," + std::to_string(c.failures) + "," +
           (c.complete ? "1" : "0") + "\n";
  }
  return out;
}

std::string render_deltas_csv(const ReportInputs& r) {
  std::string out = "task,task_label,model,origin,nr,nr_gist,drop_nr,delta_gist\n";
  for (const auto& d : r.deltas.rows) {
    out += std::string(to_string(d.task)) + "," + csv_field(label_of(r, d.task)) + "," + csv_field(d.model) + "," +
           format_score(d.origin) + "," + format_score(d.nr) + "," + format_score(d.nr_gist) + "," +
           format_score(d.drop_nr) + "," + format_score(d.delta_gist) + "\n";
  }
  return out;
}

std::string render_plot_conditions_csv(const ReportInputs& r) {
  std::string out = "task_label,model,strategy,condition,score_pct\n";
  for (const auto& c : r.cells) {
    if (!c.headline) continue;
    out += csv_field(label_of(r, c.key.task)) + "," + csv_field(c.key.model) + "," + csv_field(c.key.strategy) + "," +
           std::string(to_string(c.key.condition)) + "," + format_score(c.mean) + "\n";
  }
  return out;
}

std::string render_plot_drops_csv(const ReportInputs& r) {
  std::string out = "task_label,model,series,value_pct\n";
  for (const auto& d : r.deltas.rows) {
    std::string prefix = csv_field(label_of(r, d.task)) + "," + csv_field(d.model) + ",";
    out += prefix + "drop_nr," + format_score(d.drop_nr) + "\n";
    out += prefix + "delta_gist," + format_score(d.delta_gist) + "\n";
  }
  return out;
}

std::string render_report_json(const ReportInputs& r) {
  json models = json::array();
  for (const auto& m : r.header.model_specs) {
    json mj = {{"id", m.id},
               {"provider", m.provider_id},
               {"model_name", m.model_name},
               {"temperature", m.params.temperature},
               {"max_tokens", m.params.max_tokens}};
    mj["seed"] = m.params.seed ? json(*m.params.seed) : json(nullptr);
    models.push_back(mj);
  }
  json labels = json::object();
  for (const auto& [t, l] : r.header.task_labels) labels[std::string(to_string(t))] = l;
  json cells = json::array();
  for (const auto& c : r.cells) cells.push_back(cell_to_json(c));
  json j = {{"format_version", 1},   {"plan_hash", r.header.plan_hash}, {"models", models},
            {"task_labels", labels}, {"cells", cells},                  {"deltas", deltas_to_json(r.deltas)}};
  return j.dump(2) + "\n";
}

DeltaReport delta_report_from_json(std::string_view report_json) {
  json j = detail::parse_json(report_json, "report");
  const json& d = j.contains("deltas") ? j.at("deltas") : j;
  DeltaReport rep;
  try {
    rep.nr_strategy = d.value("nr_strategy", std::string());
    for (const auto& row : d.at("rows")) {
      auto t = parse_task_kind(row.at("task").get<std::string>());
      if (!t) throw ConfigError("deltas.rows", "unknown task");
      rep.rows.push_back({*t, row.at("model").get<std::string>(), row.at("origin").get<double>(),
                          row.at("nr").get<double>(), row.at("nr_gist").get<double>(), row.at("drop_nr").get<double>(),
                          row.at("delta_gist").get<double>()});
    }
    rep.warnings = d.value("warnings", std::vector<std::string>{});
  } catch (const json::exception& e) {
    throw ConfigError("deltas", e.what());
  }
  return rep;
}

std::optional<ReportFormat> parse_report_format(std::string_view s) {
  if (s == "markdown" || s == "md") return ReportFormat::markdown;
  if (s == "csv") return ReportFormat::csv;
  if (s == "json") return ReportFormat::json;
  if (s == "all") return ReportFormat::all;
  return std::nullopt;
}

std::vector<fs::path> emit_report(const ReportInputs& r, ReportFormat format, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw IoError("cannot create output directory " + out_dir.string());
  std::vector<fs::path> written;
  auto put = [&](const char* name, const std::string& content) {
    fs::path p = out_dir / name;
    write_file_atomic(p, content);
    written.push_back(p);
  };
  if (format == ReportFormat::markdown || format == ReportFormat::all) put("report.md", render_markdown(r));
  if (format == ReportFormat::csv || format == ReportFormat::all) {
    put("cells.csv", render_cells_csv(r));
    put("deltas.csv", render_deltas_csv(r));
    put("plot_conditions.csv", render_plot_conditions_csv(r));
    put("plot_drops.csv", render_plot_drops_csv(r));
  }
  if (format == ReportFormat::json || format == ReportFormat::all) put("report.json", render_report_json(r));
  return written;
}

}  // namespace charmem
