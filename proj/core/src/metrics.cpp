#include "charmem/metrics.hpp"

#include <map>
#include <set>

#include "charmem/text.hpp"

namespace charmem {

std::string_view to_string(MetricId id) {
  switch (id) {
    case MetricId::ExactMatch: return "ExactMatch";
    case MetricId::TokenF1: return "TokenF1";
    case MetricId::RougeL: return "RougeL";
    case MetricId::Rouge1: return "Rouge1";
    case MetricId::Rouge2: return "Rouge2";
    case MetricId::SpeakerAcc: return "SpeakerAcc";
    case MetricId::LinkF1: return "LinkF1";
    case MetricId::SetF1: return "SetF1";
  }
  return "?";
}

std::optional<MetricId> parse_metric_id(std::string_view s) {
  for (int i = 0; i <= static_cast<int>(MetricId::SetF1); ++i) {
    auto id = static_cast<MetricId>(i);
    if (to_string(id) == s) return id;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------- normalization

namespace {

bool is_ascii_punct(char32_t cp) { return cp < 0x80 && std::ispunct(static_cast<int>(cp)); }

bool is_unicode_punct(char32_t cp) {
  switch (cp) {
    case 0xA1: case 0xA7: case 0xAB: case 0xB6: case 0xB7: case 0xBB: case 0xBF:
      return true;
    default: break;
  }
  if (cp >= 0x2000 && cp <= 0x206F) return true;  // general punctuation (and spacing)
  if (cp >= 0x3000 && cp <= 0x303F) return true;  // CJK symbols and punctuation
  if (cp >= 0xFF01 && cp <= 0xFF0F) return true;  // fullwidth ASCII punctuation
  if (cp >= 0xFF1A && cp <= 0xFF20) return true;
  if (cp >= 0xFF3B && cp <= 0xFF40) return true;
  if (cp >= 0xFF5B && cp <= 0xFF65) return true;
  return false;
}

}  // namespace

std::string normalize_answer(std::string_view s) {
  std::string stripped;
  stripped.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) {
    std::size_t len = 1;
    char32_t cp = text::decode_utf8(s, i, len);
    if (cp == 0xFFFD && len == 1) {  // invalid byte
      i += 1;
      continue;
    }
    if (!is_ascii_punct(cp) && !is_unicode_punct(cp)) {
      if (cp < 0x80) {
        stripped += static_cast<char>(std::tolower(static_cast<int>(cp)));
      } else {
        stripped.append(s.substr(i, len));
      }
    }
    i += len;
  }
  std::vector<std::string> kept;
  for (auto& t : text::split_whitespace(stripped)) {
    if (t != "a" && t != "an" && t != "the") kept.push_back(std::move(t));
  }
  return text::join(kept, " ");
}

std::vector<std::string> answer_tokens(std::string_view s) { return text::split_whitespace(normalize_answer(s)); }

Score exact_match(std::string_view pred, std::string_view gold) {
  return {normalize_answer(pred) == normalize_answer(gold) ? 1.0 : 0.0, MetricId::ExactMatch, 1};
}

double f_measure(std::size_t overlap, std::size_t pred_total, std::size_t ref_total) {
  if (overlap == 0 || pred_total == 0 || ref_total == 0) return 0.0;
  double p = static_cast<double>(overlap) / static_cast<double>(pred_total);
  double r = static_cast<double>(overlap) / static_cast<double>(ref_total);
  return 2.0 * p * r / (p + r);
}

namespace {

std::size_t multiset_overlap(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::map<std::string, std::size_t> counts;
  for (const auto& t : b) ++counts[t];
  std::size_t common = 0;
  for (const auto& t : a) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  return common;
}

}  // namespace

Score token_f1(std::string_view pred, std::string_view gold) {
  auto p = answer_tokens(pred);
  auto g = answer_tokens(gold);
  if (p.empty() && g.empty()) return {1.0, MetricId::TokenF1, 1};
  return {f_measure(multiset_overlap(p, g), p.size(), g.size()), MetricId::TokenF1, 1};
}

// ---------------------------------------------------------------- rouge

std::vector<std::string> rouge_tokens(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    auto c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::isalnum(c)) {
      cur += static_cast<char>(std::tolower(c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

namespace {

std::vector<std::string> ngrams(std::span<const std::string> toks, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    std::string g = toks[i];
    for (std::size_t k = 1; k < n; ++k) g += " " + toks[i + k];
    out.push_back(std::move(g));
  }
  return out;
}

MetricId rouge_metric(RougeVariant v) {
  switch (v) {
    case RougeVariant::R1: return MetricId::Rouge1;
    case RougeVariant::R2: return MetricId::Rouge2;
    case RougeVariant::RL: break;
  }
  return MetricId::RougeL;
}

}  // namespace

double rouge_tokens_f(std::span<const std::string> pred, std::span<const std::string> ref, RougeVariant variant) {
  if (std::equal(pred.begin(), pred.end(), ref.begin(), ref.end())) return 1.0;
  if (pred.empty() || ref.empty()) return 0.0;
  if (variant == RougeVariant::RL) return f_measure(lcs_length(pred, ref), pred.size(), ref.size());
  std::size_t n = variant == RougeVariant::R1 ? 1 : 2;
  auto pg = ngrams(pred, n);
  auto rg = ngrams(ref, n);
  return f_measure(multiset_overlap(pg, rg), pg.size(), rg.size());
}

Score rouge(std::string_view pred, std::string_view ref, RougeVariant variant) {
  auto p = rouge_tokens(pred);
  auto r = rouge_tokens(ref);
  return {rouge_tokens_f(p, r, variant), rouge_metric(variant), 1};
}

// ---------------------------------------------------------------- structured

namespace {

std::string canonical_key(std::string_view name, const Roster* roster) {
  std::string n = text::trim(name);
  if (roster) {
    if (const auto* e = roster->resolve(n)) return normalize_answer(e->canonical);
  }
  return normalize_answer(n);
}

double set_overlap_f1(const std::set<std::string>& p, const std::set<std::string>& g) {
  if (p.empty() && g.empty()) return 1.0;
  std::size_t common = 0;
  for (const auto& x : p) common += g.count(x);
  return f_measure(common, p.size(), g.size());
}

}  // namespace

Score speaker_accuracy(const SpeakerAssignment& pred, const SpeakerAssignment& gold, const Roster* roster) {
  if (gold.labels.empty()) return {1.0, MetricId::SpeakerAcc, 1};
  std::size_t correct = 0;
  for (const auto& [label, name] : gold.labels) {
    auto it = pred.labels.find(label);
    if (it == pred.labels.end()) continue;
    std::string p = canonical_key(it->second, roster);
    if (!p.empty() && p == canonical_key(name, roster)) ++correct;
  }
  return {static_cast<double>(correct) / static_cast<double>(gold.labels.size()), MetricId::SpeakerAcc,
          gold.labels.size()};
}

Score link_f1(const CorefLinks& pred, const CorefLinks& gold, const Roster* roster) {
  auto keys = [&](const CorefLinks& l) {
    std::set<std::string> out;
    for (const auto& link : l.links) out.insert(text::trim(link.mention_id) + '\x1f' + canonical_key(link.character, roster));
    return out;
  };
  return {set_overlap_f1(keys(pred), keys(gold)), MetricId::LinkF1, std::max<std::size_t>(1, gold.links.size())};
}

Score set_f1(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
  auto keys = [](const std::vector<std::string>& v) {
    std::set<std::string> out;
    for (const auto& s : v) {
      auto n = normalize_answer(s);
      if (!n.empty()) out.insert(std::move(n));
    }
    return out;
  };
  return {set_overlap_f1(keys(pred), keys(gold)), MetricId::SetF1, std::max<std::size_t>(1, gold.size())};
}

// ---------------------------------------------------------------- parsing

namespace {

std::string strip_decoration(std::string s) {
  s = text::trim(s);
  auto is_deco = [](char c) { return c == '*' || c == '"' || c == '\'' || c == '`' || c == '.' || c == '_'; };
  while (!s.empty() && is_deco(s.back())) s.pop_back();
  std::size_t b = 0;
  while (b < s.size() && (is_deco(s[b]) || s[b] == '-')) ++b;
  return text::trim(s.substr(b));
}

// Text after the first case-insensitive "<prefix>" marker, else the input.
std::string after_marker(std::string_view raw, std::string_view marker) {
  std::string lower = text::to_lower_ascii(raw);
  auto pos = lower.find(text::to_lower_ascii(marker));
  if (pos == std::string::npos) return std::string(raw);
  return std::string(raw.substr(pos + marker.size()));
}

// Reads "<sep> name" right after a label; sep is one of ':', '->', '→', '=', '-'.
std::optional<std::string> read_assignment(std::string_view s, std::size_t pos) {
  auto skip = [&] {
    while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t' || s[pos] == '*')) ++pos;
  };
  skip();
  if (s.substr(pos).starts_with("->")) {
    pos += 2;
  } else if (s.substr(pos).starts_with("\xE2\x86\x92")) {
    pos += 3;
  } else if (pos < s.size() && (s[pos] == ':' || s[pos] == '=' || s[pos] == '-')) {
    pos += 1;
  } else {
    return std::nullopt;
  }
  skip();
  std::size_t end = pos;
  while (end < s.size() && s[end] != '\n' && s[end] != ',' && s[end] != ';' && s[end] != '(') ++end;
  std::string name = strip_decoration(std::string(s.substr(pos, end - pos)));
  if (name.empty()) return std::nullopt;
  return name;
}

std::map<std::string, std::string> parse_label_pairs(std::string_view raw, std::vector<std::string> labels) {
  std::map<std::string, std::string> out;
  if (labels.empty()) {
    for (const auto& line : text::split_lines(raw)) {
      auto colon = line.find(':');
      if (colon == std::string::npos) continue;
      std::string label = strip_decoration(line.substr(0, colon));
      if (auto name = read_assignment(line, colon); name && !label.empty()) out.emplace(label, *name);
    }
    return out;
  }
  // Longer labels first so "P1" never claims "P10".
  std::sort(labels.begin(), labels.end(), [](const auto& a, const auto& b) { return a.size() > b.size(); });
  for (const auto& label : labels) {
    for (std::size_t pos = text::find_word(raw, label); pos != std::string::npos;
         pos = text::find_word(raw, label, pos + label.size())) {
      if (auto name = read_assignment(raw, pos + label.size())) {
        out.emplace(label, *name);
        break;
      }
    }
  }
  return out;
}

std::optional<std::size_t> parse_choice(std::string_view raw, const std::vector<std::string>& choices) {
  const std::size_t n = choices.size();
  if (n == 0) return std::nullopt;
  std::string body = text::trim(after_marker(raw, "answer:"));
  std::string first = body.substr(0, body.find('\n'));
  // A bare letter or number, optionally followed by punctuation.
  std::size_t i = 0;
  while (i < first.size() && (first[i] == '(' || first[i] == '*' || first[i] == ' ')) ++i;
  if (i < first.size()) {
    char c = first[i];
    bool ends = i + 1 == first.size() || !std::isalnum(static_cast<unsigned char>(first[i + 1]));
    char up = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (ends && up >= 'A' && static_cast<std::size_t>(up - 'A') < n && std::isalpha(static_cast<unsigned char>(c))) {
      return static_cast<std::size_t>(up - 'A');
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      std::size_t j = i;
      std::size_t v = 0;
      while (j < first.size() && std::isdigit(static_cast<unsigned char>(first[j])) && v < 1000) {
        v = v * 10 + static_cast<std::size_t>(first[j] - '0');
        ++j;
      }
      if (v >= 1 && v <= n && (j == first.size() || !std::isalnum(static_cast<unsigned char>(first[j])))) return v - 1;
    }
  }
  std::optional<std::size_t> hit;
  std::size_t hits = 0;
  std::string nb = normalize_answer(body);
  for (std::size_t k = 0; k < n; ++k) {
    std::string nc = normalize_answer(choices[k]);
    if (!nc.empty() && text::contains_word(nb, nc)) {
      hit = k;
      ++hits;
    }
  }
  if (hits == 1) return hit;
  for (std::size_t k = 0; k + 2 < body.size(); ++k) {
    if (body[k] == '(' && body[k + 2] == ')') {
      char up = static_cast<char>(std::toupper(static_cast<unsigned char>(body[k + 1])));
      if (up >= 'A' && static_cast<std::size_t>(up - 'A') < n) return static_cast<std::size_t>(up - 'A');
    }
  }
  return std::nullopt;
}

std::vector<std::string> parse_list(std::string_view raw) {
  std::string body = text::trim(after_marker(raw, "answer:"));
  body = text::replace_all(body, " and ", ",");
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    std::string item = strip_decoration(cur);
    // "2. name" or "2) name"
    std::size_t d = 0;
    while (d < item.size() && std::isdigit(static_cast<unsigned char>(item[d]))) ++d;
    if (d > 0 && d < item.size() && (item[d] == '.' || item[d] == ')')) item.erase(0, d + 1);
    item = strip_decoration(item);
    if (!item.empty()) out.push_back(item);
    cur.clear();
  };
  for (char c : body) {
    if (c == ',' || c == ';' || c == '\n') {
      flush();
    } else {
      cur += c;
    }
  }
  flush();
  if (out.size() == 1 && normalize_answer(out[0]) == "none") out.clear();
  return out;
}

std::string first_nonempty_line(std::string_view s) {
  for (const auto& l : text::split_lines(s)) {
    auto t = text::trim(l);
    if (!t.empty()) return t;
  }
  return {};
}

}  // namespace

Prediction parse_prediction(std::string_view raw, TaskKind kind, const Segment& segment) {
  Prediction p{kind, empty_payload(kind), false};
  try {
    switch (kind) {
      case TaskKind::CharacterGuess: {
        std::vector<std::string> labels;
        for (const auto& u : segment.utterances) {
          if (u.speaker && is_placeholder(*u.speaker) &&
              std::find(labels.begin(), labels.end(), *u.speaker) == labels.end()) {
            labels.push_back(*u.speaker);
          }
        }
        SpeakerAssignment a{parse_label_pairs(raw, labels)};
        p.parsed = !a.labels.empty();
        p.payload = std::move(a);
        break;
      }
      case TaskKind::Coreference: {
        std::vector<std::string> ids;
        for (const auto& m : segment.task.options.mentions) ids.push_back(m.id);
        CorefLinks links;
        for (auto& [id, name] : parse_label_pairs(raw, ids)) links.links.push_back({id, name});
        p.parsed = !links.links.empty();
        p.payload = std::move(links);
        break;
      }
      case TaskKind::PersonalityMC: {
        OptionChoice c{parse_choice(raw, segment.task.options.choices)};
        p.parsed = c.index.has_value();
        p.payload = c;
        break;
      }
      case TaskKind::RoleDetect: {
        p.payload = RoleMentions{parse_list(raw)};
        p.parsed = !text::trim(raw).empty();
        break;
      }
      case TaskKind::QA: {
        std::string lower = text::to_lower_ascii(raw);
        std::string span;
        if (auto pos = lower.find("answer:"); pos != std::string::npos) {
          span = first_nonempty_line(raw.substr(pos + 7));
        } else {
          span = first_nonempty_line(raw);
        }
        span = strip_decoration(span);
        p.parsed = !span.empty();
        p.payload = AnswerSpan{span};
        break;
      }
      case TaskKind::Summarize: {
        std::string body = text::trim(raw);
        if (text::starts_with_ascii_ci(body, "summary:")) body = text::trim(body.substr(8));
        p.parsed = !body.empty();
        p.payload = ReferenceSummary{body};
        break;
      }
    }
  } catch (const std::exception&) {
    p.payload = empty_payload(kind);
    p.parsed = false;
  }
  return p;
}

MetricId headline_metric(TaskKind kind) {
  switch (kind) {
    case TaskKind::CharacterGuess: return MetricId::SpeakerAcc;
    case TaskKind::Coreference: return MetricId::LinkF1;
    case TaskKind::PersonalityMC: return MetricId::ExactMatch;
    case TaskKind::RoleDetect: return MetricId::SetF1;
    case TaskKind::QA: return MetricId::ExactMatch;
    case TaskKind::Summarize: return MetricId::RougeL;
  }
  return MetricId::ExactMatch;
}

std::vector<Score> score_prediction(const Prediction& pred, const TaskInstance& gold, const Roster* roster) {
  TaskPayload payload = pred.kind == gold.kind ? pred.payload : empty_payload(gold.kind);
  switch (gold.kind) {
    case TaskKind::CharacterGuess:
      return {speaker_accuracy(std::get<SpeakerAssignment>(payload), std::get<SpeakerAssignment>(gold.gold), roster)};
    case TaskKind::Coreference:
      return {link_f1(std::get<CorefLinks>(payload), std::get<CorefLinks>(gold.gold), roster)};
    case TaskKind::PersonalityMC: {
      const auto& p = std::get<OptionChoice>(payload);
      const auto& g = std::get<OptionChoice>(gold.gold);
      return {{p.index && g.index && *p.index == *g.index ? 1.0 : 0.0, MetricId::ExactMatch, 1}};
    }
    case TaskKind::RoleDetect:
      return {set_f1(std::get<RoleMentions>(payload).mentions, std::get<RoleMentions>(gold.gold).mentions)};
    case TaskKind::QA: {
      const auto& p = std::get<AnswerSpan>(payload).text;
      const auto& g = std::get<AnswerSpan>(gold.gold).text;
      return {exact_match(p, g), token_f1(p, g)};
    }
    case TaskKind::Summarize: {
      const auto& p = std::get<ReferenceSummary>(payload).text;
      const auto& g = std::get<ReferenceSummary>(gold.gold).text;
      return {rouge(p, g, RougeVariant::RL), rouge(p, g, RougeVariant::R1), rouge(p, g, RougeVariant::R2)};
    }
  }
  return {};
}

}  // namespace charmem
