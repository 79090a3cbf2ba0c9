#include "json_util.hpp"

#include "charmem/errors.hpp"
#include "charmem/text.hpp"

namespace charmem::detail {

json parse_json(std::string_view text, const std::string& what) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ConfigError(what, std::string("invalid JSON: ") + e.what());
  }
}

std::string join_path(const std::string& path, std::string_view key) {
  if (path.empty()) return std::string(key);
  return path + "." + std::string(key);
}

std::string index_path(const std::string& path, std::size_t i) {
  return path + "[" + std::to_string(i) + "]";
}

const json& require(const json& obj, std::string_view key, const std::string& path) {
  if (!obj.is_object()) throw ConfigError(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ConfigError(join_path(path, key), "missing required field");
  return *it;
}

std::string require_string(const json& obj, std::string_view key, const std::string& path) {
  const json& v = require(obj, key, path);
  if (!v.is_string()) throw ConfigError(join_path(path, key), "expected a string");
  return v.get<std::string>();
}

void check_format_version(const json& obj, const std::string& path) {
  const json& v = require(obj, "format_version", path);
  if (!v.is_number_integer() || v.get<int>() != 1) {
    throw ConfigError(join_path(path, "format_version"), "unsupported format_version (expected 1)");
  }
}

json utterance_to_json(const Utterance& u) {
  json j = json::object();
  if (u.speaker) j["speaker"] = *u.speaker;
  j["kind"] = u.kind == UtteranceKind::line ? "line" : "scene-direction";
  j["text"] = u.text;
  return j;
}

Utterance utterance_from_json(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "utterance must be an object");
  Utterance u;
  std::string kind = j.contains("kind") ? j.at("kind").get<std::string>()
                                        : (j.contains("speaker") ? "line" : "scene-direction");
  if (kind == "line") {
    u.kind = UtteranceKind::line;
    if (!j.contains("speaker") || !j.at("speaker").is_string()) {
      throw ConfigError(join_path(path, "speaker"), "dialogue line needs a speaker");
    }
    u.speaker = j.at("speaker").get<std::string>();
    if (text::trim(*u.speaker).empty()) throw ConfigError(join_path(path, "speaker"), "empty speaker");
  } else if (kind == "scene-direction") {
    u.kind = UtteranceKind::scene_direction;
    if (j.contains("speaker") && !j.at("speaker").is_null()) {
      throw ConfigError(join_path(path, "speaker"), "scene direction cannot have a speaker");
    }
  } else {
    throw ConfigError(join_path(path, "kind"), "unknown utterance kind '" + kind + "'");
  }
  u.text = require_string(j, "text", path);
  if (text::trim(u.text).empty()) throw ConfigError(join_path(path, "text"), "empty utterance text");
  return u;
}

json payload_to_json(const TaskPayload& payload) {
  return std::visit(
      [](const auto& p) -> json {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, SpeakerAssignment>) {
          json j = json::object();
          for (const auto& [k, v] : p.labels) j[k] = v;
          return j;
        } else if constexpr (std::is_same_v<T, CorefLinks>) {
          json j = json::array();
          for (const auto& l : p.links) j.push_back({{"mention", l.mention_id}, {"character", l.character}});
          return j;
        } else if constexpr (std::is_same_v<T, OptionChoice>) {
          return p.index ? json(*p.index) : json(nullptr);
        } else if constexpr (std::is_same_v<T, RoleMentions>) {
          return json(p.mentions);
        } else {
          return json(p.text);
        }
      },
      payload);
}

TaskPayload payload_from_json(TaskKind kind, const json& j, const std::string& path) {
  switch (kind) {
    case TaskKind::CharacterGuess: {
      if (!j.is_object()) throw ConfigError(path, "CharacterGuess gold must map placeholder to name");
      SpeakerAssignment a;
      for (const auto& [k, v] : j.items()) {
        if (!v.is_string()) throw ConfigError(join_path(path, k), "expected a name string");
        a.labels[k] = v.get<std::string>();
      }
      return a;
    }
    case TaskKind::Coreference: {
      if (!j.is_array()) throw ConfigError(path, "Coreference gold must be a list of links");
      CorefLinks links;
      for (std::size_t i = 0; i < j.size(); ++i) {
        std::string p = index_path(path, i);
        links.links.push_back({require_string(j[i], "mention", p), require_string(j[i], "character", p)});
      }
      return links;
    }
    case TaskKind::PersonalityMC: {
      if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<long long>() >= 0)) {
        throw ConfigError(path, "PersonalityMC gold must be a non-negative option index");
      }
      return OptionChoice{j.get<std::size_t>()};
    }
    case TaskKind::RoleDetect: {
      if (!j.is_array()) throw ConfigError(path, "RoleDetect gold must be a list of mention strings");
      RoleMentions r;
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_string()) throw ConfigError(index_path(path, i), "expected a string");
        r.mentions.push_back(j[i].get<std::string>());
      }
      return r;
    }
    case TaskKind::QA:
      if (!j.is_string()) throw ConfigError(path, "QA gold must be an answer string");
      return AnswerSpan{j.get<std::string>()};
    case TaskKind::Summarize:
      if (!j.is_string()) throw ConfigError(path, "Summarize gold must be a reference summary string");
      return ReferenceSummary{j.get<std::string>()};
  }
  throw ConfigError(path, "unknown task kind");
}

json options_to_json(const TaskOptions& o) {
  json j = json::object();
  if (o.question) j["question"] = *o.question;
  if (!o.choices.empty()) j["choices"] = o.choices;
  if (!o.mentions.empty()) {
    json m = json::array();
    for (const auto& x : o.mentions) m.push_back({{"id", x.id}, {"text", x.text}});
    j["mentions"] = m;
  }
  if (!o.candidates.empty()) j["candidates"] = o.candidates;
  return j;
}

TaskOptions options_from_json(const json& j, const std::string& path) {
  TaskOptions o;
  if (j.is_null()) return o;
  if (!j.is_object()) throw ConfigError(path, "options must be an object");
  if (j.contains("question")) o.question = j.at("question").get<std::string>();
  if (j.contains("choices")) o.choices = j.at("choices").get<std::vector<std::string>>();
  if (j.contains("candidates")) o.candidates = j.at("candidates").get<std::vector<std::string>>();
  if (j.contains("mentions")) {
    const json& m = j.at("mentions");
    for (std::size_t i = 0; i < m.size(); ++i) {
      std::string p = index_path(join_path(path, "mentions"), i);
      o.mentions.push_back({require_string(m[i], "id", p), require_string(m[i], "text", p)});
    }
  }
  return o;
}

json segment_to_json(const Segment& s) {
  json j = json::object();
  j["format_version"] = 1;
  j["id"] = s.id;
  j["work_id"] = s.work_id;
  json us = json::array();
  for (const auto& u : s.utterances) us.push_back(utterance_to_json(u));
  j["utterances"] = us;
  j["task"] = {{"kind", std::string(to_string(s.task.kind))},
               {"gold", payload_to_json(s.task.gold)},
               {"options", options_to_json(s.task.options)}};
  return j;
}

Segment segment_from_json(const json& j, const std::string& path) {
  check_format_version(j, path);
  Segment s;
  s.id = require_string(j, "id", path);
  if (s.id.empty()) throw ConfigError(join_path(path, "id"), "empty segment id");
  s.work_id = require_string(j, "work_id", path);
  const json& us = require(j, "utterances", path);
  if (!us.is_array()) throw ConfigError(join_path(path, "utterances"), "expected a list");
  for (std::size_t i = 0; i < us.size(); ++i) {
    s.utterances.push_back(utterance_from_json(us[i], index_path(join_path(path, "utterances"), i)));
  }
  const json& task = require(j, "task", path);
  std::string tpath = join_path(path, "task");
  std::string kind_s = require_string(task, "kind", tpath);
  auto kind = parse_task_kind(kind_s);
  if (!kind) throw ConfigError(join_path(tpath, "kind"), "unknown task kind '" + kind_s + "'");
  s.task.kind = *kind;
  s.task.gold = payload_from_json(*kind, require(task, "gold", tpath), join_path(tpath, "gold"));
  s.task.options = options_from_json(task.value("options", json()), join_path(tpath, "options"));
  if (*kind == TaskKind::PersonalityMC) {
    const auto& idx = std::get<OptionChoice>(s.task.gold).index;
    if (s.task.options.choices.empty() || *idx >= s.task.options.choices.size()) {
      throw ConfigError(join_path(tpath, "gold"), "option index out of range");
    }
  }
  if ((*kind == TaskKind::QA || *kind == TaskKind::PersonalityMC || *kind == TaskKind::RoleDetect) &&
      !s.task.options.question) {
    throw ConfigError(join_path(tpath, "options.question"), "task kind requires a question");
  }
  return s;
}

json entry_to_json(const CharacterEntry& e) {
  return {{"canonical", e.canonical},
          {"aliases", e.aliases},
          {"gender", std::string(to_string(e.gender))},
          {"is_main", e.is_main}};
}

CharacterEntry entry_from_json(const json& j, const std::string& path) {
  CharacterEntry e;
  e.canonical = require_string(j, "canonical", path);
  if (j.contains("aliases")) {
    const json& a = j.at("aliases");
    if (!a.is_array()) throw ConfigError(join_path(path, "aliases"), "expected a list");
    for (const auto& x : a) e.aliases.push_back(x.get<std::string>());
  }
  std::string g = j.value("gender", std::string("unspecified"));
  auto gender = parse_gender(g);
  if (!gender) throw ConfigError(join_path(path, "gender"), "unknown gender '" + g + "'");
  e.gender = *gender;
  e.is_main = j.value("is_main", false);
  return e;
}

}  // namespace charmem::detail
