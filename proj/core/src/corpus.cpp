#include "charmem/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "charmem/errors.hpp"
#include "charmem/text.hpp"
#include "json_util.hpp"

namespace charmem {

namespace fs = std::filesystem;
using detail::json;

Utterance Utterance::line(std::string speaker, std::string text) {
  return Utterance{std::move(speaker), std::move(text), UtteranceKind::line};
}

Utterance Utterance::direction(std::string text) {
  return Utterance{std::nullopt, std::move(text), UtteranceKind::scene_direction};
}

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::CharacterGuess: return "CharacterGuess";
    case TaskKind::Coreference: return "Coreference";
    case TaskKind::PersonalityMC: return "PersonalityMC";
    case TaskKind::RoleDetect: return "RoleDetect";
    case TaskKind::QA: return "QA";
    case TaskKind::Summarize: return "Summarize";
  }
  return "?";
}

std::optional<TaskKind> parse_task_kind(std::string_view s) {
  for (TaskKind k : kAllTaskKinds) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

TaskKind payload_kind(const TaskPayload& payload) {
  return static_cast<TaskKind>(payload.index());
}

TaskPayload empty_payload(TaskKind kind) {
  switch (kind) {
    case TaskKind::CharacterGuess: return SpeakerAssignment{};
    case TaskKind::Coreference: return CorefLinks{};
    case TaskKind::PersonalityMC: return OptionChoice{};
    case TaskKind::RoleDetect: return RoleMentions{};
    case TaskKind::QA: return AnswerSpan{};
    case TaskKind::Summarize: return ReferenceSummary{};
  }
  return SpeakerAssignment{};
}

std::string_view to_string(Gender g) {
  switch (g) {
    case Gender::female: return "female";
    case Gender::male: return "male";
    case Gender::unspecified: return "unspecified";
  }
  return "unspecified";
}

std::optional<Gender> parse_gender(std::string_view s) {
  std::string l = text::to_lower_ascii(s);
  if (l == "female" || l == "f") return Gender::female;
  if (l == "male" || l == "m") return Gender::male;
  if (l == "unspecified" || l == "u" || l.empty()) return Gender::unspecified;
  return std::nullopt;
}

// ---------------------------------------------------------------- roster

const CharacterEntry* Roster::resolve(std::string_view label) const {
  std::string key = text::trim(label);
  for (const auto& e : entries) {
    for (const auto& a : e.aliases) {
      if (text::iequals_ascii(a, key)) return &e;
    }
  }
  return nullptr;
}

std::vector<const CharacterEntry*> Roster::main_entries() const {
  std::vector<const CharacterEntry*> out;
  for (const auto& e : entries) {
    if (e.is_main) out.push_back(&e);
  }
  return out;
}

Roster make_roster(std::string work_id, std::vector<CharacterEntry> entries, std::string title) {
  std::map<std::string, std::string> owner;  // lowered alias -> canonical
  std::set<std::string> canonicals;
  for (auto& e : entries) {
    e.canonical = text::trim(e.canonical);
    if (e.canonical.empty()) throw RosterError(work_id + ": entry with empty canonical name");
    if (!canonicals.insert(text::to_lower_ascii(e.canonical)).second) {
      throw RosterError(work_id + ": duplicate canonical name '" + e.canonical + "'");
    }
    for (auto& a : e.aliases) a = text::trim(a);
    if (std::none_of(e.aliases.begin(), e.aliases.end(),
                     [&](const std::string& a) { return text::iequals_ascii(a, e.canonical); })) {
      e.aliases.insert(e.aliases.begin(), e.canonical);
    }
    std::set<std::string> own;
    for (const auto& a : e.aliases) {
      if (a.empty()) throw RosterError(work_id + ": '" + e.canonical + "' has an empty alias");
      if (!own.insert(text::to_lower_ascii(a)).second) {
        throw RosterError(work_id + ": '" + e.canonical + "' lists alias '" + a + "' twice");
      }
    }
  }
  for (const auto& e : entries) {
    for (const auto& a : e.aliases) {
      auto [it, inserted] = owner.emplace(text::to_lower_ascii(a), e.canonical);
      if (!inserted) {
        throw RosterError(work_id + ": alias '" + a + "' is shared by '" + it->second + "' and '" +
                          e.canonical + "'");
      }
    }
  }
  Roster r;
  r.work_id = std::move(work_id);
  r.title = std::move(title);
  r.entries = std::move(entries);
  return r;
}

Roster load_roster(std::string_view json_text) {
  json j = detail::parse_json(json_text, "roster");
  detail::check_format_version(j, "");
  std::string work_id = detail::require_string(j, "work_id", "");
  std::vector<CharacterEntry> entries;
  if (j.contains("entries")) {
    const json& es = j.at("entries");
    if (!es.is_array()) throw ConfigError("entries", "expected a list");
    for (std::size_t i = 0; i < es.size(); ++i) {
      entries.push_back(detail::entry_from_json(es[i], detail::index_path("entries", i)));
    }
  }
  return make_roster(std::move(work_id), std::move(entries), j.value("title", std::string()));
}

Roster load_roster_file(const fs::path& path) {
  try {
    return load_roster(read_file(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + (e.path().empty() ? "" : ":" + e.path()), e.what());
  } catch (const RosterError& e) {
    throw RosterError(path.string() + ": " + e.what());
  }
}

std::map<std::string, Roster> load_roster_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("roster directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& de : fs::directory_iterator(dir)) {
    if (de.is_regular_file() && de.path().extension() == ".json") files.push_back(de.path());
  }
  std::sort(files.begin(), files.end());
  std::map<std::string, Roster> out;
  for (const auto& f : files) {
    Roster r = load_roster_file(f);
    std::string id = r.work_id;
    if (!out.emplace(id, std::move(r)).second) {
      throw RosterError("two roster files declare work_id '" + id + "'");
    }
  }
  return out;
}

std::string roster_to_json(const Roster& roster) {
  json j = {{"format_version", 1}, {"work_id", roster.work_id}};
  if (!roster.title.empty()) j["title"] = roster.title;
  json es = json::array();
  for (const auto& e : roster.entries) es.push_back(detail::entry_to_json(e));
  j["entries"] = es;
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------- placeholders

PlaceholderTemplate::PlaceholderTemplate(std::string pattern) : pattern_(std::move(pattern)) {
  if (text::count_occurrences(pattern_, "{n}") != 1) {
    throw ConfigError("", "placeholder template '" + pattern_ + "' must contain exactly one {n}");
  }
  auto pos = pattern_.find("{n}");
  prefix_ = pattern_.substr(0, pos);
  suffix_ = pattern_.substr(pos + 3);
}

std::string PlaceholderTemplate::format(std::size_t n) const {
  return prefix_ + std::to_string(n) + suffix_;
}

std::optional<std::size_t> PlaceholderTemplate::match(std::string_view label) const {
  if (label.size() <= prefix_.size() + suffix_.size()) return std::nullopt;
  if (label.substr(0, prefix_.size()) != prefix_) return std::nullopt;
  if (label.substr(label.size() - suffix_.size()) != suffix_) return std::nullopt;
  std::string_view digits = label.substr(prefix_.size(), label.size() - prefix_.size() - suffix_.size());
  if (digits.empty() || digits.size() > 9) return std::nullopt;
  if (digits.size() > 1 && digits[0] == '0') return std::nullopt;
  std::size_t n = 0;
  for (char c : digits) {
    if (c < '0' || c > '9') return std::nullopt;
    n = n * 10 + static_cast<std::size_t>(c - '0');
  }
  return n;
}

const PlaceholderTemplate& PlaceholderTemplate::p_style() {
  static const PlaceholderTemplate t("P{n}");
  return t;
}

const PlaceholderTemplate& PlaceholderTemplate::speaker_style() {
  static const PlaceholderTemplate t("Speaker {n}");
  return t;
}

bool is_placeholder(std::string_view label) {
  return PlaceholderTemplate::p_style().match(label) || PlaceholderTemplate::speaker_style().match(label);
}

// ---------------------------------------------------------------- scripts

namespace {

// "<name>: <text>" with a colon-free name that neither starts nor ends with
// whitespace and a text that is not blank.
std::optional<Utterance> match_dialogue_line(const std::string& line) {
  auto colon = line.find(": ");
  if (colon == std::string::npos || colon == 0) return std::nullopt;
  std::string_view name(line.data(), colon);
  if (name.find(':') != std::string_view::npos) return std::nullopt;
  if (std::isspace(static_cast<unsigned char>(name.front())) ||
      std::isspace(static_cast<unsigned char>(name.back()))) {
    return std::nullopt;
  }
  std::string rest = line.substr(colon + 2);
  if (text::trim(rest).empty()) return std::nullopt;
  return Utterance::line(std::string(name), std::move(rest));
}

std::string strip_bom(std::string_view raw) {
  if (raw.size() >= 3 && raw.substr(0, 3) == "\xEF\xBB\xBF") raw.remove_prefix(3);
  return std::string(raw);
}

}  // namespace

std::vector<Utterance> parse_script(std::string_view raw, ScriptFormat format) {
  std::vector<Utterance> out;
  std::string body = strip_bom(raw);
  auto lines = text::split_lines(body);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string line = text::rtrim(lines[i]);
    if (text::trim(line).empty()) continue;
    if (format == ScriptFormat::labeled_lines) {
      if (auto u = match_dialogue_line(line)) {
        out.push_back(std::move(*u));
      } else {
        out.push_back(Utterance::direction(std::move(line)));
      }
      continue;
    }
    try {
      json j = json::parse(line);
      out.push_back(detail::utterance_from_json(j, ""));
    } catch (const json::exception& e) {
      throw ParseError(std::string("malformed jsonl record: ") + e.what(), i + 1);
    } catch (const ConfigError& e) {
      throw ParseError(std::string("malformed jsonl record: ") + e.what(), i + 1);
    }
  }
  return out;
}

std::string serialize_dialogue(std::span<const Utterance> utterances) {
  std::string out;
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    if (i) out += '\n';
    const Utterance& u = utterances[i];
    if (u.kind == UtteranceKind::line && u.speaker) {
      out += *u.speaker;
      out += ": ";
    }
    out += u.text;
  }
  return out;
}

// ---------------------------------------------------------------- validation

std::vector<Diagnostic> validate_segment(const Segment& segment, const Roster& roster) {
  std::vector<Diagnostic> out;
  std::set<std::string> reported;
  for (std::size_t i = 0; i < segment.utterances.size(); ++i) {
    const Utterance& u = segment.utterances[i];
    if (u.kind != UtteranceKind::line || !u.speaker) continue;
    const std::string& label = *u.speaker;
    if (is_placeholder(label) || roster.resolve(label)) continue;
    if (!reported.insert(label).second) continue;
    out.push_back({segment.id, label, i,
                   "speaker '" + label + "' does not resolve in roster '" + roster.work_id + "'"});
  }
  return out;
}

// ---------------------------------------------------------------- corpus io

std::vector<Segment> load_corpus(std::string_view jsonl) {
  std::vector<Segment> out;
  std::set<std::string> ids;
  auto lines = text::split_lines(strip_bom(jsonl));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (text::trim(lines[i]).empty()) continue;
    json j;
    try {
      j = json::parse(lines[i]);
    } catch (const json::exception& e) {
      throw ParseError(std::string("malformed corpus record: ") + e.what(), i + 1);
    }
    Segment s;
    try {
      s = detail::segment_from_json(j, "");
    } catch (const ConfigError& e) {
      throw ParseError(e.what(), i + 1);
    } catch (const json::exception& e) {
      throw ParseError(e.what(), i + 1);
    }
    if (!ids.insert(s.id).second) throw ParseError("duplicate segment id '" + s.id + "'", i + 1);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Segment> load_corpus_file(const fs::path& path) {
  try {
    return load_corpus(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.message(), e.line());
  }
}

std::string segment_to_json_line(const Segment& segment) {
  return detail::segment_to_json(segment).dump();
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& path, std::string_view content) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("write failed for " + path.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
}

}  // namespace charmem
