#include "charmem/runner.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <mutex>
#include <set>

#include "charmem/digest.hpp"
#include "charmem/errors.hpp"
#include "charmem/text.hpp"
#include "json_util.hpp"
#include "parallel.hpp"

namespace charmem {

namespace fs = std::filesystem;
using detail::json;

std::vector<CellKey> ExperimentPlan::cells() const {
  std::vector<CellKey> out;
  for (auto t : tasks)
    for (const auto& s : strategies)
      for (auto c : conditions)
        for (const auto& m : models) out.push_back({t, s, c, m});
  return out;
}

std::string default_task_label(TaskKind kind) {
  switch (kind) {
    case TaskKind::CharacterGuess: return "Tvshow Guess";
    case TaskKind::Coreference: return "Coreference";
    case TaskKind::QA: return "FriendsQA";
    case TaskKind::Summarize: return "ScreenSum";
    case TaskKind::RoleDetect: return "CSI Role Extract";
    case TaskKind::PersonalityMC: return "PERSONET";
  }
  return "?";
}

std::optional<std::string> default_nr_strategy(const std::vector<std::string>& strategies) {
  if (std::find(strategies.begin(), strategies.end(), "cross-cultural") != strategies.end()) return "cross-cultural";
  for (const auto& s : strategies) {
    if (s != kOriginStrategy) return s;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------- plan

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

const char* const kPlanKeys[] = {"format_version", "corpus",           "roster_dir",  "tasks",
                                 "strategies",     "conditions",       "models",      "trials",
                                 "seed",           "concurrency",      "ablations",   "pools",
                                 "templates",      "speaker_template", "task_labels", "nr_strategy",
                                 "description_model"};

template <class T>
std::vector<T> unique_list(const json& j, const std::string& key, auto&& convert) {
  const json& arr = detail::require(j, key, "");
  if (!arr.is_array()) throw ConfigError(key, "expected a list");
  if (arr.empty()) throw ConfigError(key, "must not be empty");
  std::vector<T> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    std::string path = detail::index_path(key, i);
    if (!arr[i].is_string()) throw ConfigError(path, "expected a string");
    T v = convert(arr[i].get<std::string>(), path);
    if (std::find(out.begin(), out.end(), v) != out.end()) throw ConfigError(path, "listed twice");
    out.push_back(std::move(v));
  }
  return out;
}

std::string family_of(const ReplacementStrategy& s) {
  if (s.is_mask()) return "mask";
  return std::holds_alternative<CrossCulturalStrategy>(s.variant()) ? "cross-cultural" : "same-cultural";
}

}  // namespace

ExperimentPlan parse_plan(std::string_view json_text, const fs::path& base_dir) {
  json j = detail::parse_json(json_text, "plan");
  if (!j.is_object()) throw ConfigError("", "plan must be a JSON object");
  detail::check_format_version(j, "");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find_if(std::begin(kPlanKeys), std::end(kPlanKeys), [&](const char* k) { return it.key() == k; }) ==
        std::end(kPlanKeys)) {
      throw ConfigError(it.key(), "unknown key");
    }
  }
  ExperimentPlan p;
  p.corpus = resolve(base_dir, detail::require_string(j, "corpus", ""));
  if (j.contains("roster_dir")) p.roster_dir = resolve(base_dir, j.at("roster_dir").get<std::string>());
  p.tasks = unique_list<TaskKind>(j, "tasks", [](const std::string& s, const std::string& path) {
    auto k = parse_task_kind(s);
    if (!k) throw ConfigError(path, "unknown task '" + s + "'");
    return *k;
  });
  p.strategies = unique_list<std::string>(j, "strategies", [](const std::string& s, const std::string& path) {
    if (s == kOriginStrategy) return std::string(kOriginStrategy);
    try {
      return ReplacementStrategy::parse(s).id();
    } catch (const ConfigError&) {
      throw ConfigError(path, "unknown strategy '" + s + "'");
    }
  });
  p.conditions = unique_list<PromptCondition>(j, "conditions", [](const std::string& s, const std::string& path) {
    auto c = parse_prompt_condition(s);
    if (!c) throw ConfigError(path, "unknown prompt condition '" + s + "'");
    return *c;
  });
  p.models = unique_list<std::string>(j, "models", [](const std::string& s, const std::string&) { return s; });
  try {
    p.trials = j.value("trials", 1);
    p.seed = j.value("seed", std::uint64_t{0});
    p.concurrency = j.value("concurrency", 4);
  } catch (const json::exception& e) {
    throw ConfigError("trials", e.what());
  }
  if (p.trials < 1) throw ConfigError("trials", "must be >= 1");
  if (p.concurrency < 1) throw ConfigError("concurrency", "must be >= 1");
  if (j.contains("ablations")) {
    const json& a = j.at("ablations");
    for (auto it = a.begin(); it != a.end(); ++it) {
      if (it.key() != "include_descriptions" && it.key() != "label_mapping") {
        throw ConfigError("ablations." + it.key(), "unknown ablation");
      }
      if (!it.value().is_boolean()) throw ConfigError("ablations." + it.key(), "expected true or false");
    }
    p.ablations.include_descriptions = a.value("include_descriptions", false);
    p.ablations.label_mapping = a.value("label_mapping", true);
  }
  if (j.contains("pools")) {
    for (auto it = j.at("pools").begin(); it != j.at("pools").end(); ++it) {
      if (it.key() != "cross-cultural" && it.key() != "same-cultural") {
        throw ConfigError("pools." + it.key(), "expected cross-cultural or same-cultural");
      }
      p.pools[it.key()] = resolve(base_dir, it.value().get<std::string>());
    }
  }
  if (j.contains("templates")) p.templates = resolve(base_dir, j.at("templates").get<std::string>());
  if (j.contains("speaker_template")) {
    p.speaker_template = j.at("speaker_template").get<std::string>();
    try {
      PlaceholderTemplate check(p.speaker_template);
    } catch (const Error& e) {
      throw ConfigError("speaker_template", e.what());
    }
  }
  if (j.contains("description_model")) p.description_model = j.at("description_model").get<std::string>();
  if (j.contains("task_labels")) {
    for (auto it = j.at("task_labels").begin(); it != j.at("task_labels").end(); ++it) {
      auto k = parse_task_kind(it.key());
      if (!k) throw ConfigError("task_labels." + it.key(), "unknown task");
      p.task_labels[*k] = it.value().get<std::string>();
    }
  }
  if (j.contains("nr_strategy")) {
    std::string s = j.at("nr_strategy").get<std::string>();
    if (std::find(p.strategies.begin(), p.strategies.end(), s) == p.strategies.end()) {
      throw ConfigError("nr_strategy", "'" + s + "' is not one of the plan strategies");
    }
    p.nr_strategy = s;
  }
  return p;
}

ExperimentPlan load_plan_file(const fs::path& path) {
  try {
    return parse_plan(read_file(path), path.parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string(), e.what());
  }
}

void validate_plan_models(const ExperimentPlan& plan, const ProviderConfig& config) {
  for (std::size_t i = 0; i < plan.models.size(); ++i) {
    if (!config.models.count(plan.models[i])) {
      throw ConfigError(detail::index_path("models", i), "unknown model id '" + plan.models[i] + "'");
    }
  }
  if (plan.description_model && !config.models.count(*plan.description_model)) {
    throw ConfigError("description_model", "unknown model id '" + *plan.description_model + "'");
  }
}

namespace {

json model_spec_json(const ModelSpec& m) {
  json j = {{"id", m.id},
            {"provider", m.provider_id},
            {"model_name", m.model_name},
            {"temperature", m.params.temperature},
            {"max_tokens", m.params.max_tokens}};
  j["seed"] = m.params.seed ? json(*m.params.seed) : json(nullptr);
  return j;
}

ModelSpec model_spec_from_json(const json& j) {
  ModelSpec m;
  m.id = j.value("id", std::string());
  m.provider_id = j.value("provider", std::string());
  m.model_name = j.value("model_name", std::string());
  m.params.temperature = j.value("temperature", 0.0);
  m.params.max_tokens = j.value("max_tokens", 512);
  if (j.contains("seed") && !j.at("seed").is_null()) {
    m.params.seed = j.at("seed").get<std::int64_t>();
  } else {
    m.params.seed.reset();
  }
  return m;
}

std::string file_digest(const fs::path& p) { return sha256_hex(read_file(p)); }

}  // namespace

std::string plan_hash(const ExperimentPlan& plan, const ProviderConfig& config) {
  json j;
  j["corpus"] = file_digest(plan.corpus);
  json rosters = json::object();
  if (!plan.roster_dir.empty() && fs::is_directory(plan.roster_dir)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(plan.roster_dir)) {
      if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) rosters[f.filename().string()] = file_digest(f);
  }
  j["rosters"] = rosters;
  json tasks = json::array();
  for (auto t : plan.tasks) tasks.push_back(std::string(to_string(t)));
  j["tasks"] = tasks;
  j["strategies"] = plan.strategies;
  json conds = json::array();
  for (auto c : plan.conditions) conds.push_back(std::string(to_string(c)));
  j["conditions"] = conds;
  json models = json::array();
  for (const auto& m : plan.models) models.push_back(model_spec_json(config.model(m)));
  j["models"] = models;
  j["trials"] = plan.trials;
  j["seed"] = plan.seed;
  j["ablations"] = {{"include_descriptions", plan.ablations.include_descriptions},
                    {"label_mapping", plan.ablations.label_mapping}};
  json pools = json::object();
  for (const auto& [k, path] : plan.pools) pools[k] = file_digest(path);
  j["pools"] = pools;
  j["templates"] = plan.templates ? json(file_digest(*plan.templates)) : json(nullptr);
  j["speaker_template"] = plan.speaker_template;
  j["description_model"] = plan.description_model ? json(*plan.description_model) : json(nullptr);
  return sha256_hex(j.dump());
}

// ---------------------------------------------------------------- results I/O

namespace {

json cell_json(const CellKey& k) {
  return {{"task", std::string(to_string(k.task))},
          {"strategy", k.strategy},
          {"condition", std::string(to_string(k.condition))},
          {"model", k.model}};
}

}  // namespace

std::string trial_record_to_json(const TrialRecord& r) {
  json j = cell_json(r.cell);
  j["record"] = "trial";
  j["trial"] = r.trial;
  j["segment_id"] = r.segment_id;
  j["work_id"] = r.work_id;
  j["status"] = r.ok ? "ok" : "error";
  if (!r.ok) j["error"] = r.error;
  if (!r.scores.empty()) {
    j["metric_id"] = std::string(to_string(r.scores.front().metric));
    j["value"] = r.scores.front().value;
    json all = json::array();
    for (const auto& s : r.scores) {
      all.push_back({{"metric_id", std::string(to_string(s.metric))}, {"value", s.value}, {"n_items", s.n_items}});
    }
    j["scores"] = all;
  }
  j["parsed"] = r.parsed;
  j["request_hash"] = r.request_hash;
  j["response_text"] = r.response_text;
  return j.dump();
}

std::string run_header_to_json(const RunHeader& h) {
  json tasks = json::array(), conds = json::array(), specs = json::array(), labels = json::object();
  for (auto t : h.tasks) tasks.push_back(std::string(to_string(t)));
  for (auto c : h.conditions) conds.push_back(std::string(to_string(c)));
  for (const auto& m : h.model_specs) specs.push_back(model_spec_json(m));
  for (const auto& [t, l] : h.task_labels) labels[std::string(to_string(t))] = l;
  json j = {{"record", "header"},     {"format_version", 1}, {"plan_hash", h.plan_hash},
            {"trials", h.trials},     {"tasks", tasks},      {"strategies", h.strategies},
            {"conditions", conds},    {"models", h.models},  {"model_specs", specs},
            {"task_labels", labels}};
  j["nr_strategy"] = h.nr_strategy ? json(*h.nr_strategy) : json(nullptr);
  return j.dump();
}

namespace {

TaskKind task_from(const json& j, const std::string& key) {
  auto k = parse_task_kind(j.at(key).get<std::string>());
  if (!k) throw ConfigError(key, "unknown task '" + j.at(key).get<std::string>() + "'");
  return *k;
}

PromptCondition condition_from(const std::string& s) {
  auto c = parse_prompt_condition(s);
  if (!c) throw ConfigError("condition", "unknown condition '" + s + "'");
  return *c;
}

RunHeader header_from_json(const json& j) {
  RunHeader h;
  h.plan_hash = j.value("plan_hash", std::string());
  h.trials = j.value("trials", 0);
  for (const auto& t : j.value("tasks", json::array())) {
    auto k = parse_task_kind(t.get<std::string>());
    if (!k) throw ConfigError("tasks", "unknown task");
    h.tasks.push_back(*k);
  }
  h.strategies = j.value("strategies", std::vector<std::string>{});
  for (const auto& c : j.value("conditions", json::array())) h.conditions.push_back(condition_from(c.get<std::string>()));
  h.models = j.value("models", std::vector<std::string>{});
  for (const auto& m : j.value("model_specs", json::array())) h.model_specs.push_back(model_spec_from_json(m));
  const json labels = j.value("task_labels", json::object());
  for (const auto& [k, v] : labels.items()) {
    auto t = parse_task_kind(k);
    if (t) h.task_labels[*t] = v.get<std::string>();
  }
  if (j.contains("nr_strategy") && !j.at("nr_strategy").is_null()) h.nr_strategy = j.at("nr_strategy").get<std::string>();
  return h;
}

TrialRecord record_from_json(const json& j) {
  TrialRecord r;
  r.cell.task = task_from(j, "task");
  r.cell.strategy = j.at("strategy").get<std::string>();
  r.cell.condition = condition_from(j.at("condition").get<std::string>());
  r.cell.model = j.at("model").get<std::string>();
  r.trial = j.at("trial").get<int>();
  if (r.trial < 0) throw ConfigError("trial", "must be >= 0");
  r.segment_id = j.at("segment_id").get<std::string>();
  r.work_id = j.value("work_id", std::string());
  r.ok = j.value("status", std::string("ok")) == "ok";
  r.error = j.value("error", std::string());
  if (j.contains("scores")) {
    for (const auto& s : j.at("scores")) {
      auto m = parse_metric_id(s.at("metric_id").get<std::string>());
      if (!m) throw ConfigError("metric_id", "unknown metric");
      r.scores.push_back({s.at("value").get<double>(), *m, s.value("n_items", std::size_t{1})});
    }
  } else if (j.contains("metric_id") && j.contains("value")) {
    auto m = parse_metric_id(j.at("metric_id").get<std::string>());
    if (!m) throw ConfigError("metric_id", "unknown metric");
    r.scores.push_back({j.at("value").get<double>(), *m, 1});
  }
  for (const auto& s : r.scores) {
    if (!(s.value >= 0.0 && s.value <= 1.0)) throw ConfigError("value", "score outside [0, 1]");
  }
  if (r.ok && r.scores.empty()) throw ConfigError("scores", "ok record without a score");
  r.parsed = j.value("parsed", false);
  r.request_hash = j.value("request_hash", std::string());
  r.response_text = j.value("response_text", std::string());
  return r;
}

}  // namespace

ResultsFile load_results(std::string_view jsonl) {
  ResultsFile out;
  std::size_t line_no = 0;
  for (const auto& line : text::split_lines(jsonl)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      json j = json::parse(line);
      if (!j.is_object()) throw ConfigError("", "expected a JSON object");
      if (j.value("record", std::string("trial")) == "header") {
        if (out.header || !out.records.empty()) throw ConfigError("record", "header must be the first line");
        out.header = header_from_json(j);
      } else {
        out.records.push_back(record_from_json(j));
      }
    } catch (const json::exception& e) {
      throw ParseError(std::string("corrupt results record: ") + e.what(), line_no);
    } catch (const Error& e) {
      throw ParseError(std::string("corrupt results record: ") + e.what(), line_no);
    }
  }
  return out;
}

ResultsFile load_results_file(const fs::path& path) {
  try {
    return load_results(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.message(), e.line());
  }
}

// ---------------------------------------------------------------- execute

namespace {

struct Prepared {
  Segment rendered;             // text the model sees (perturbed, speakers anonymized for CharacterGuess)
  Segment described;            // perturbed, speakers named: input for description generation
  TaskInstance gold;
  std::optional<Roster> roster;  // rendered roster for alias canonicalization
  const NameMap* map = nullptr;
  std::optional<std::string> prompt_no_desc[3];  // per condition index when descriptions are off
};

struct Job {
  std::size_t cell;
  int trial;
  std::size_t prepared;
};

bool has_named_speaker(const Segment& s) {
  return std::any_of(s.utterances.begin(), s.utterances.end(),
                     [](const Utterance& u) { return u.speaker && !is_placeholder(*u.speaker); });
}

std::size_t condition_index(PromptCondition c) { return static_cast<std::size_t>(c); }

// Forward-maps original names in a prediction to their replacements.
Prediction map_prediction(Prediction p, const NameMap& map) {
  auto fwd = [&](const std::string& s) { return apply_name_map_to_text(s, map); };
  std::visit(
      [&](auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, SpeakerAssignment>) {
          for (auto& [k, name] : v.labels) name = fwd(name);
        } else if constexpr (std::is_same_v<T, CorefLinks>) {
          for (auto& l : v.links) l.character = fwd(l.character);
        } else if constexpr (std::is_same_v<T, RoleMentions>) {
          for (auto& m : v.mentions) m = fwd(m);
        } else if constexpr (std::is_same_v<T, AnswerSpan> || std::is_same_v<T, ReferenceSummary>) {
          v.text = fwd(v.text);
        }
      },
      p.payload);
  return p;
}

class DescriptionStore {
 public:
  explicit DescriptionStore(fs::path root) : root_(std::move(root)) {}

  DescriptionCache& get(const std::string& model, const std::string& work_id, const NameMap* map) {
    std::string key = model + "/" + work_id + "-" + (map ? name_map_digest(*map).substr(0, 16) : "original");
    std::lock_guard lock(mu_);
    auto& slot = caches_[key];
    if (!slot) slot = std::make_unique<DescriptionCache>(root_ / (key + ".json"));
    return *slot;
  }

 private:
  fs::path root_;
  std::mutex mu_;
  std::map<std::string, std::unique_ptr<DescriptionCache>> caches_;
};

}  // namespace

RunSummary execute(const ExperimentPlan& plan, const ProviderConfig& config, CompletionService& service,
                   const ExecuteOptions& options) {
  validate_plan_models(plan, config);
  for (const auto& m : plan.models) {
    if (!service.has_provider(config.model(m).provider_id)) {
      throw ConfigError("models", "provider '" + config.model(m).provider_id + "' is not available");
    }
  }
  std::optional<TemplateSet> custom_templates;
  if (plan.templates) custom_templates = TemplateSet::load_file(*plan.templates);
  const TemplateSet& templates = custom_templates ? *custom_templates : TemplateSet::bundled();
  for (auto t : plan.tasks)
    for (auto c : plan.conditions) templates.task_template(t, c);

  auto corpus = load_corpus_file(plan.corpus);
  std::map<std::string, Roster> rosters;
  if (!plan.roster_dir.empty()) rosters = load_roster_dir(plan.roster_dir);
  PlaceholderTemplate speaker_tmpl(plan.speaker_template);

  std::map<TaskKind, std::vector<std::size_t>> by_task;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (std::find(plan.tasks.begin(), plan.tasks.end(), corpus[i].task.kind) != plan.tasks.end()) {
      by_task[corpus[i].task.kind].push_back(i);
    }
  }

  // Pools and one name map per (strategy, work).
  std::map<std::string, NamePool> pools;
  for (const auto& [family, path] : plan.pools) pools[family] = load_name_pool_file(path);
  std::map<std::string, std::map<std::string, NameMap>> maps;
  for (const auto& sid : plan.strategies) {
    if (sid == kOriginStrategy) continue;
    auto strategy = ReplacementStrategy::parse(sid);
    auto pit = pools.find(family_of(strategy));
    const NamePool& pool = pit != pools.end() ? pit->second : default_pool_for(strategy);
    for (const auto& [task, idx] : by_task) {
      for (auto i : idx) {
        const auto& w = corpus[i].work_id;
        if (maps[sid].count(w)) continue;
        auto rit = rosters.find(w);
        if (rit == rosters.end()) {
          throw ConfigError("strategies", "work '" + w + "' has no roster; '" + sid + "' needs one");
        }
        maps[sid].emplace(w, build_name_map(rit->second, strategy, pool, plan.seed));
      }
    }
  }

  // Perturb, anonymize and (without descriptions) render everything up front
  // so data problems surface before the first provider call.
  std::vector<Prepared> prepared;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> prepared_index;  // (strategy, segment) -> index
  for (std::size_t si = 0; si < plan.strategies.size(); ++si) {
    const auto& sid = plan.strategies[si];
    for (const auto& [task, idx] : by_task) {
      for (auto i : idx) {
        const Segment& seg = corpus[i];
        Prepared p;
        auto rit = rosters.find(seg.work_id);
        if (sid == kOriginStrategy) {
          p.described = seg;
          if (rit != rosters.end()) p.roster = rit->second;
        } else {
          p.map = &maps.at(sid).at(seg.work_id);
          p.described = apply_name_map(seg, *p.map).segment;
          p.roster = rendered_roster(rit->second, *p.map);
        }
        p.rendered = p.described;
        p.gold = p.described.task;
        if (task == TaskKind::CharacterGuess && has_named_speaker(seg)) {
          if (!p.roster) throw ConfigError("roster_dir", "work '" + seg.work_id + "' has no roster; speaker anonymization needs one");
          auto anon = anonymize_speakers(p.described, speaker_tmpl, *p.roster);
          p.rendered = std::move(anon.segment);
          p.gold.gold = anon.as_gold();
        }
        if (!plan.ablations.include_descriptions) {
          for (auto c : plan.conditions) p.prompt_no_desc[condition_index(c)] = render(p.rendered.task, c, p.rendered, nullptr, templates);
        }
        prepared_index[{si, i}] = prepared.size();
        prepared.push_back(std::move(p));
      }
    }
  }

  const auto cells = plan.cells();
  std::vector<Job> jobs;
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    const auto& cell = cells[ci];
    std::size_t si = static_cast<std::size_t>(
        std::find(plan.strategies.begin(), plan.strategies.end(), cell.strategy) - plan.strategies.begin());
    for (int t = 0; t < plan.trials; ++t) {
      for (auto i : by_task[cell.task]) jobs.push_back({ci, t, prepared_index.at({si, i})});
    }
  }

  RunHeader header;
  header.plan_hash = plan_hash(plan, config);
  header.trials = plan.trials;
  header.tasks = plan.tasks;
  header.strategies = plan.strategies;
  header.conditions = plan.conditions;
  header.models = plan.models;
  for (const auto& m : plan.models) header.model_specs.push_back(config.model(m));
  for (auto t : plan.tasks) {
    auto it = plan.task_labels.find(t);
    header.task_labels[t] = it != plan.task_labels.end() ? it->second : default_task_label(t);
  }
  header.nr_strategy = plan.nr_strategy ? plan.nr_strategy : default_nr_strategy(plan.strategies);

  fs::create_directories(options.out_dir);
  const fs::path results_path = options.out_dir / "results.jsonl";
  std::ofstream results(results_path, std::ios::binary | std::ios::trunc);
  if (!results) throw IoError("cannot write " + results_path.string());
  results << run_header_to_json(header) << "\n" << std::flush;

  {
    json audit = json::object();
    for (const auto& [sid, per_work] : maps) {
      for (const auto& [w, m] : per_work) audit[sid][w] = json::parse(name_map_to_json(m));
    }
    write_file_atomic(options.out_dir / "namemaps.json", audit.dump(2) + "\n");
  }

  DescriptionStore descriptions(options.out_dir / "descriptions");
  std::vector<std::optional<TrialRecord>> records(jobs.size());
  std::mutex out_mu;
  std::atomic<std::size_t> done{0};
  std::atomic<bool> stop{false};

  detail::parallel_for(
      jobs.size(), plan.concurrency,
      [&](std::size_t ji) {
        const Job& job = jobs[ji];
        const CellKey& cell = cells[job.cell];
        const Prepared& p = prepared[job.prepared];
        TrialRecord r;
        r.cell = cell;
        r.trial = job.trial;
        r.segment_id = p.rendered.id;
        r.work_id = p.rendered.work_id;
        try {
          const ModelSpec& model = config.model(cell.model);
          std::string prompt;
          if (plan.ablations.include_descriptions) {
            const ModelSpec& dmodel = config.model(plan.description_model.value_or(cell.model));
            CharacterDescriptionSet set;
            if (p.roster) {
              auto& cache = descriptions.get(dmodel.id, p.described.work_id, p.map);
              set = generate_descriptions(p.described, *p.roster, service, dmodel, templates, &cache);
            }
            Segment seg = p.rendered;
            if (seg.task.kind == TaskKind::CharacterGuess && seg.task.options.candidates.empty()) {
              for (const auto& [label, d] : set.entries) seg.task.options.candidates.push_back(label);
            }
            prompt = render(seg.task, cell.condition, seg, &set, templates);
          } else {
            prompt = *p.prompt_no_desc[condition_index(cell.condition)];
          }
          auto rec = service.complete(model, prompt, job.trial);
          r.request_hash = rec.request_hash;
          r.response_text = rec.response_text;
          Prediction pred = parse_prediction(rec.response_text, cell.task, p.rendered);
          r.parsed = pred.parsed;
          if (plan.ablations.label_mapping && p.map) pred = map_prediction(std::move(pred), *p.map);
          r.scores = score_prediction(pred, p.gold, p.roster ? &*p.roster : nullptr);
          r.ok = true;
        } catch (const std::exception& e) {
          r.ok = false;
          r.error = e.what();
          r.scores.clear();
        }
        {
          std::lock_guard lock(out_mu);
          results << trial_record_to_json(r) << "\n" << std::flush;
          if (options.on_record) options.on_record(r);
        }
        records[ji] = std::move(r);
        std::size_t n = ++done;
        if (options.abort_after && n >= *options.abort_after) stop = true;
      },
      [&] { return stop.load(); });
  results.close();

  RunSummary summary;
  summary.plan_hash = header.plan_hash;
  summary.cells = cells.size();
  summary.jobs = jobs.size();
  summary.stats = service.stats();
  std::vector<TrialRecord> finished;
  for (auto& r : records) {
    if (!r) continue;
    ++summary.completed;
    if (!r->ok) ++summary.failed;
    finished.push_back(std::move(*r));
  }
  summary.interrupted = summary.completed < jobs.size();
  if (summary.interrupted) return summary;

  // Rewrite in job order so the file does not depend on scheduling.
  std::string sorted = run_header_to_json(header) + "\n";
  for (const auto& r : finished) sorted += trial_record_to_json(r) + "\n";
  write_file_atomic(results_path, sorted);
  summary.outputs.push_back(results_path);
  summary.outputs.push_back(options.out_dir / "namemaps.json");

  ResultsFile rf{header, std::move(finished)};
  auto report = build_report(rf);
  for (auto& f : emit_report(report, ReportFormat::all, options.out_dir)) summary.outputs.push_back(f);
  return summary;
}

}  // namespace charmem
