#include "charmem/prompts.hpp"

#include <algorithm>
#include <set>

#include "bundled_data.hpp"
#include "charmem/errors.hpp"
#include "charmem/providers.hpp"
#include "charmem/text.hpp"
#include "json_util.hpp"

namespace charmem {

using detail::json;

std::string_view to_string(PromptCondition c) {
  switch (c) {
    case PromptCondition::Baseline: return "Baseline";
    case PromptCondition::Verbatim: return "Verbatim";
    case PromptCondition::Gist: return "Gist";
  }
  return "?";
}

std::optional<PromptCondition> parse_prompt_condition(std::string_view s) {
  for (auto c : kAllConditions) {
    if (text::iequals_ascii(s, to_string(c))) return c;
  }
  return std::nullopt;
}

namespace {

constexpr std::string_view kKnownSlots[] = {"dialogue", "question", "options", "descriptions"};

struct SlotRef {
  std::size_t pos;
  std::size_t len;
  std::string name;
};

// "{word}" references with a lowercase identifier.
std::vector<SlotRef> find_slots(std::string_view t) {
  std::vector<SlotRef> out;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] != '{') continue;
    std::size_t j = i + 1;
    while (j < t.size() && ((t[j] >= 'a' && t[j] <= 'z') || t[j] == '_')) ++j;
    if (j > i + 1 && j < t.size() && t[j] == '}') {
      out.push_back({i, j - i + 1, std::string(t.substr(i + 1, j - i - 1))});
      i = j;
    }
  }
  return out;
}

std::string substitute(std::string_view tmpl, const std::map<std::string, std::string>& values) {
  std::string out;
  std::size_t last = 0;
  for (const auto& s : find_slots(tmpl)) {
    auto it = values.find(s.name);
    if (it == values.end()) continue;
    out.append(tmpl.substr(last, s.pos - last));
    out += it->second;
    last = s.pos + s.len;
  }
  out.append(tmpl.substr(last));
  return out;
}

}  // namespace

std::vector<std::string_view> required_slots(TaskKind kind) {
  switch (kind) {
    case TaskKind::CharacterGuess:
    case TaskKind::Coreference: return {"dialogue", "options", "descriptions"};
    case TaskKind::PersonalityMC: return {"dialogue", "question", "options", "descriptions"};
    case TaskKind::RoleDetect:
    case TaskKind::QA: return {"dialogue", "question", "descriptions"};
    case TaskKind::Summarize: return {"dialogue", "descriptions"};
  }
  return {};
}

void validate_template(std::string_view tmpl, const std::vector<std::string_view>& required) {
  std::map<std::string, int> seen;
  for (const auto& s : find_slots(tmpl)) {
    if (std::find(std::begin(kKnownSlots), std::end(kKnownSlots), s.name) == std::end(kKnownSlots)) {
      throw TemplateError("unknown slot {" + s.name + "}");
    }
    if (std::find(required.begin(), required.end(), s.name) == required.end()) {
      throw TemplateError("slot {" + s.name + "} is not used by this template kind");
    }
    if (++seen[s.name] > 1) throw TemplateError("slot {" + s.name + "} appears more than once");
  }
  for (auto r : required) {
    if (!seen.count(std::string(r))) throw TemplateError("missing slot {" + std::string(r) + "}");
  }
}

// ---------------------------------------------------------------- templates

TemplateSet TemplateSet::load(std::string_view json_text) {
  json j = detail::parse_json(json_text, "templates");
  detail::check_format_version(j, "");
  TemplateSet t;
  t.source_probe_ = detail::require_string(j, "source_probe", "");
  t.description_request_ = detail::require_string(j, "description_request", "");
  try {
    validate_template(t.source_probe_, {"dialogue"});
  } catch (const TemplateError& e) {
    throw ConfigError("source_probe", e.what());
  }
  if (t.source_probe_.find('\n') == std::string::npos) {
    throw ConfigError("source_probe", "the instruction must be on its own line before {dialogue}");
  }
  try {
    validate_template(t.description_request_, {"dialogue"});
  } catch (const TemplateError& e) {
    throw ConfigError("description_request", e.what());
  }
  const json& tasks = detail::require(j, "tasks", "");
  if (!tasks.is_object()) throw ConfigError("tasks", "expected an object");
  for (auto it = tasks.begin(); it != tasks.end(); ++it) {
    auto kind = parse_task_kind(it.key());
    std::string path = detail::join_path("tasks", it.key());
    if (!kind) throw ConfigError(path, "unknown task kind");
    for (auto c = it.value().begin(); c != it.value().end(); ++c) {
      auto cond = parse_prompt_condition(c.key());
      std::string cpath = detail::join_path(path, c.key());
      if (!cond) throw ConfigError(cpath, "unknown prompt condition");
      if (!c.value().is_string()) throw ConfigError(cpath, "expected a string");
      std::string body = c.value().get<std::string>();
      try {
        validate_template(body, required_slots(*kind));
      } catch (const TemplateError& e) {
        throw ConfigError(cpath, e.what());
      }
      t.tasks_[{*kind, *cond}] = std::move(body);
    }
  }
  return t;
}

TemplateSet TemplateSet::load_file(const std::filesystem::path& path) {
  try {
    return load(read_file(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string(), e.what());
  }
}

const TemplateSet& TemplateSet::bundled() {
  static const TemplateSet t = load(bundled::templates_json());
  return t;
}

const std::string& TemplateSet::task_template(TaskKind kind, PromptCondition condition) const {
  auto it = tasks_.find({kind, condition});
  if (it == tasks_.end()) {
    throw ConfigError("tasks." + std::string(to_string(kind)) + "." + std::string(to_string(condition)),
                      "no template");
  }
  return it->second;
}

std::string TemplateSet::source_probe_instruction() const { return source_probe_.substr(0, source_probe_.find('\n')); }

// ---------------------------------------------------------------- render

namespace {

std::string render_options(const TaskInstance& task) {
  const auto& o = task.options;
  switch (task.kind) {
    case TaskKind::CharacterGuess:
      return o.candidates.empty() ? "" : "Candidates: " + text::join(o.candidates, ", ") + "\n\n";
    case TaskKind::Coreference: {
      std::vector<std::string> lines;
      for (const auto& m : o.mentions) lines.push_back(m.id + ": " + m.text);
      return text::join(lines, "\n");
    }
    case TaskKind::PersonalityMC: {
      std::vector<std::string> lines;
      for (std::size_t i = 0; i < o.choices.size(); ++i) {
        std::string letter = i < 26 ? std::string(1, static_cast<char>('A' + i)) : std::to_string(i + 1);
        lines.push_back(letter + ". " + o.choices[i]);
      }
      return text::join(lines, "\n");
    }
    default: return "";
  }
}

bool label_occurs(const std::string& label, const Segment& segment, const TaskOptions& options) {
  for (const auto& u : segment.utterances) {
    if (u.speaker && text::iequals_ascii(*u.speaker, label)) return true;
    if (text::contains_word(u.text, label)) return true;
  }
  for (const auto& c : options.candidates) {
    if (text::iequals_ascii(c, label)) return true;
  }
  for (const auto& m : options.mentions) {
    if (text::contains_word(m.text, label)) return true;
  }
  if (options.question && text::contains_word(*options.question, label)) return true;
  return false;
}

}  // namespace

std::string render(const TaskInstance& task, PromptCondition condition, const Segment& segment,
                   const CharacterDescriptionSet* descriptions, const TemplateSet& templates) {
  const std::string& tmpl = templates.task_template(task.kind, condition);
  std::map<std::string, std::string> values;
  values["dialogue"] = serialize_dialogue(segment.utterances);
  values["options"] = render_options(task);
  auto slots = required_slots(task.kind);
  if (std::find(slots.begin(), slots.end(), "question") != slots.end()) {
    if (!task.options.question) throw TemplateError("segment " + segment.id + ": task needs a question");
    values["question"] = *task.options.question;
  }
  std::string desc;
  if (descriptions && !descriptions->empty()) {
    desc = "\n\nCharacter descriptions:";
    for (const auto& [label, d] : descriptions->entries) {
      if (!label_occurs(label, segment, task.options)) {
        throw TemplateError("segment " + segment.id + ": description label '" + label +
                            "' does not occur in the segment");
      }
      desc += "\n" + label + ": " + d;
    }
  }
  values["descriptions"] = desc;
  return substitute(tmpl, values);
}

std::string render_source_probe(std::span<const Utterance> body, const TemplateSet& templates) {
  return substitute(templates.source_probe(), {{"dialogue", serialize_dialogue(body)}});
}

// ---------------------------------------------------------------- descriptions

std::vector<std::string> mains_present(const Segment& segment, const Roster& roster) {
  std::vector<std::string> out;
  for (const auto* e : roster.main_entries()) {
    bool found = false;
    for (const auto& u : segment.utterances) {
      for (const auto& a : e->aliases) {
        if ((u.speaker && text::iequals_ascii(*u.speaker, a)) || text::contains_word(u.text, a)) {
          found = true;
          break;
        }
      }
      if (found) break;
    }
    if (found) out.push_back(e->canonical);
  }
  return out;
}

namespace {

bool is_trim_char(char c) {
  return std::isspace(static_cast<unsigned char>(c)) || c == '\'' || c == '"' || c == '*' || c == '-' ||
         c == '#' || c == '\\';
}

// Strips surrounding quotes/markup and a trailing list number such as "2." or "2)".
std::string clean_description(std::string_view s) {
  std::string out(s);
  for (;;) {
    std::size_t before = out.size();
    while (!out.empty() && is_trim_char(out.back())) out.pop_back();
    if (out.ends_with("\xE2\x80\x99")) out.resize(out.size() - 3);
    std::size_t i = out.size();
    if (i > 0 && (out[i - 1] == '.' || out[i - 1] == ')')) {
      std::size_t j = i - 1;
      while (j > 0 && std::isdigit(static_cast<unsigned char>(out[j - 1]))) --j;
      if (j < i - 1) {
        std::size_t k = j;
        while (k > 0 && std::isspace(static_cast<unsigned char>(out[k - 1]))) --k;
        if (k == 0 || out[j - 1] == '\n' || out[k - 1] == '.' || out[k - 1] == '\\') {
          out.resize(j);
        }
      }
    }
    if (out.size() == before) break;
  }
  std::size_t b = 0;
  while (b < out.size() && (is_trim_char(out[b]) || out[b] == ':')) ++b;
  return out.substr(b);
}

}  // namespace

CharacterDescriptionSet parse_descriptions(std::string_view response, const std::vector<std::string>& labels,
                                           std::string work_id) {
  struct Hit {
    std::size_t start;
    std::size_t body;
    std::size_t label;
  };
  std::vector<Hit> hits;
  for (std::size_t li = 0; li < labels.size(); ++li) {
    const std::string& label = labels[li];
    for (std::size_t pos = text::find_word(response, label); pos != std::string::npos;
         pos = text::find_word(response, label, pos + label.size())) {
      std::size_t after = pos + label.size();
      while (after < response.size() && response[after] == '*') ++after;
      if (after < response.size() && response[after] == ':') {
        hits.push_back({pos, after + 1, li});
        break;
      }
    }
  }
  std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) { return a.start < b.start; });
  std::map<std::size_t, std::string> found;
  for (std::size_t i = 0; i < hits.size(); ++i) {
    std::size_t end = i + 1 < hits.size() ? hits[i + 1].start : response.size();
    std::string d = clean_description(response.substr(hits[i].body, end - hits[i].body));
    if (!d.empty()) found[hits[i].label] = std::move(d);
  }
  CharacterDescriptionSet set;
  set.work_id = std::move(work_id);
  std::vector<std::string> missing;
  for (std::size_t li = 0; li < labels.size(); ++li) {
    auto it = found.find(li);
    if (it == found.end()) {
      missing.push_back(labels[li]);
    } else {
      set.entries.emplace_back(labels[li], it->second);
    }
  }
  if (!missing.empty()) throw IncompleteDescriptionsError(std::move(missing));
  return set;
}

DescriptionCache::DescriptionCache(std::filesystem::path file) : file_(std::move(file)) {
  if (!std::filesystem::exists(file_)) return;
  json j = detail::parse_json(read_file(file_), file_.string());
  for (auto it = j.begin(); it != j.end(); ++it) {
    CharacterDescriptionSet s;
    s.work_id = it.value().value("work_id", std::string());
    for (const auto& e : it.value().at("entries")) {
      s.entries.emplace_back(e.at("label").get<std::string>(), e.at("description").get<std::string>());
    }
    sets_[it.key()] = std::move(s);
  }
}

std::optional<CharacterDescriptionSet> DescriptionCache::get(const std::string& segment_id) {
  std::lock_guard lock(mu_);
  auto it = sets_.find(segment_id);
  if (it == sets_.end()) return std::nullopt;
  return it->second;
}

void DescriptionCache::put(const std::string& segment_id, const CharacterDescriptionSet& set) {
  std::lock_guard lock(mu_);
  sets_[segment_id] = set;
  json j = json::object();
  for (const auto& [id, s] : sets_) {
    json entries = json::array();
    for (const auto& [label, d] : s.entries) entries.push_back({{"label", label}, {"description", d}});
    j[id] = {{"work_id", s.work_id}, {"entries", entries}};
  }
  write_file_atomic(file_, j.dump(2) + "\n");
}

CharacterDescriptionSet generate_descriptions(const Segment& segment, const Roster& rendered_roster,
                                              CompletionService& service, const ModelSpec& model,
                                              const TemplateSet& templates, DescriptionCache* cache) {
  if (cache) {
    if (auto hit = cache->get(segment.id)) return *hit;
  }
  auto labels = mains_present(segment, rendered_roster);
  CharacterDescriptionSet set{segment.work_id, {}};
  if (!labels.empty()) {
    std::string prompt =
        substitute(templates.description_request(), {{"dialogue", serialize_dialogue(segment.utterances)}});
    auto record = service.complete(model, prompt, 0);
    set = parse_descriptions(record.response_text, labels, segment.work_id);
  }
  if (cache) cache->put(segment.id, set);
  return set;
}

}  // namespace charmem
