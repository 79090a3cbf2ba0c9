#include "charmem/perturb.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "bundled_data.hpp"
#include "charmem/digest.hpp"
#include "charmem/errors.hpp"
#include "charmem/text.hpp"
#include "json_util.hpp"

namespace charmem {

using detail::json;

// ---------------------------------------------------------------- strategy

ReplacementStrategy::ReplacementStrategy(Variant v) : variant_(std::move(v)) {
  if (auto* m = std::get_if<MaskStrategy>(&variant_)) PlaceholderTemplate{m->pattern};
}

ReplacementStrategy ReplacementStrategy::parse(std::string_view id) {
  if (id == "mask") return MaskStrategy{};
  if (id.starts_with("mask:")) return MaskStrategy{std::string(id.substr(5))};
  if (id == "cross-cultural") return CrossCulturalStrategy{false};
  if (id == "cross-cultural+swap") return CrossCulturalStrategy{true};
  if (id == "same-cultural") return SameCulturalStrategy{false};
  if (id == "same-cultural+swap") return SameCulturalStrategy{true};
  throw ConfigError("", "unknown replacement strategy '" + std::string(id) + "'");
}

std::string ReplacementStrategy::id() const {
  return std::visit(
      [](const auto& s) -> std::string {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, MaskStrategy>) {
          return s.pattern == "P{n}" ? "mask" : "mask:" + s.pattern;
        } else if constexpr (std::is_same_v<T, CrossCulturalStrategy>) {
          return s.gender_swap ? "cross-cultural+swap" : "cross-cultural";
        } else {
          return s.gender_swap ? "same-cultural+swap" : "same-cultural";
        }
      },
      variant_);
}

bool ReplacementStrategy::gender_swap() const noexcept {
  if (auto* c = std::get_if<CrossCulturalStrategy>(&variant_)) return c->gender_swap;
  if (auto* s = std::get_if<SameCulturalStrategy>(&variant_)) return s->gender_swap;
  return false;
}

// ---------------------------------------------------------------- pools

NamePool load_name_pool(std::string_view json_text) {
  json j = detail::parse_json(json_text, "name pool");
  detail::check_format_version(j, "");
  NamePool pool;
  pool.culture_tag = detail::require_string(j, "culture_tag", "");
  const json& names = detail::require(j, "names", "");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < names.size(); ++i) {
    std::string path = detail::index_path("names", i);
    PoolName n;
    n.name = text::trim(detail::require_string(names[i], "name", path));
    std::string g = detail::require_string(names[i], "gender", path);
    auto gender = parse_gender(g);
    if (!gender) throw ConfigError(detail::join_path(path, "gender"), "unknown gender '" + g + "'");
    n.gender = *gender;
    if (n.name.empty()) throw ConfigError(detail::join_path(path, "name"), "empty name");
    if (!seen.insert(text::to_lower_ascii(n.name)).second) {
      throw ConfigError(detail::join_path(path, "name"), "duplicate pool name '" + n.name + "'");
    }
    pool.names.push_back(std::move(n));
  }
  return pool;
}

NamePool load_name_pool_file(const std::filesystem::path& path) {
  try {
    return load_name_pool(read_file(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + (e.path().empty() ? "" : ":" + e.path()), e.what());
  }
}

const NamePool& default_cross_cultural_pool() {
  static const NamePool pool = load_name_pool(bundled::cross_cultural_pool_json());
  return pool;
}

const NamePool& default_same_cultural_pool() {
  static const NamePool pool = load_name_pool(bundled::same_cultural_pool_json());
  return pool;
}

const NamePool& default_pool_for(const ReplacementStrategy& strategy) {
  static const NamePool empty{"mask", {}};
  if (std::holds_alternative<CrossCulturalStrategy>(strategy.variant())) return default_cross_cultural_pool();
  if (std::holds_alternative<SameCulturalStrategy>(strategy.variant())) return default_same_cultural_pool();
  return empty;
}

// ---------------------------------------------------------------- name maps

const NamePair* NameMap::find_by_alias(std::string_view name) const {
  std::string key = text::trim(name);
  for (const auto& p : pairs) {
    for (const auto& a : p.entry.aliases) {
      if (text::iequals_ascii(a, key)) return &p;
    }
  }
  return nullptr;
}

const NamePair* NameMap::find_by_replacement(std::string_view name) const {
  std::string key = text::trim(name);
  for (const auto& p : pairs) {
    if (text::iequals_ascii(p.replacement, key)) return &p;
  }
  return nullptr;
}

namespace {

Gender opposite(Gender g) {
  switch (g) {
    case Gender::female: return Gender::male;
    case Gender::male: return Gender::female;
    default: return Gender::unspecified;
  }
}

}  // namespace

NameMap build_name_map(const Roster& roster, const ReplacementStrategy& strategy, const NamePool& pool,
                       std::uint64_t seed) {
  NameMap map;
  map.strategy = strategy;
  map.seed = seed;
  map.work_id = roster.work_id;
  map.pool_tag = strategy.is_mask() ? "mask" : pool.culture_tag;

  std::set<std::string> blocked;
  for (const auto& e : roster.entries) {
    for (const auto& a : e.aliases) blocked.insert(text::to_lower_ascii(a));
  }
  const auto mains = roster.main_entries();

  if (const auto* mask = std::get_if<MaskStrategy>(&strategy.variant())) {
    PlaceholderTemplate tmpl(mask->pattern);
    for (std::size_t i = 0; i < mains.size(); ++i) {
      std::string r = tmpl.format(i);
      if (blocked.count(text::to_lower_ascii(r))) {
        throw PerturbError(roster.work_id + ": mask label '" + r + "' collides with a roster alias");
      }
      map.pairs.push_back({*mains[i], r, mains[i]->gender});
    }
    return map;
  }

  std::map<Gender, std::vector<const PoolName*>> available;
  for (const auto& n : pool.names) {
    if (!blocked.count(text::to_lower_ascii(n.name))) available[n.gender].push_back(&n);
  }
  std::map<Gender, std::size_t> need;
  std::vector<Gender> wanted;
  for (const auto* e : mains) {
    Gender g = e->gender == Gender::unspecified ? Gender::unspecified
                                                : (strategy.gender_swap() ? opposite(e->gender) : e->gender);
    wanted.push_back(g);
    if (g != Gender::unspecified) ++need[g];
  }
  std::vector<std::string> shortfalls;
  for (Gender g : {Gender::female, Gender::male}) {
    std::size_t have = available[g].size();
    if (need[g] > have) {
      shortfalls.push_back("need " + std::to_string(need[g]) + " " + std::string(to_string(g)) + " names, " +
                           std::to_string(have) + " available after excluding roster collisions");
    }
  }
  if (!shortfalls.empty()) {
    throw PoolExhaustedError(roster.work_id + ": name pool '" + pool.culture_tag +
                             "' exhausted: " + text::join(shortfalls, "; "));
  }

  std::set<std::string> used;
  std::map<Gender, std::size_t> taken;
  std::vector<std::size_t> unassigned;
  map.pairs.resize(mains.size());
  for (std::size_t i = 0; i < mains.size(); ++i) {
    Gender g = wanted[i];
    if (g == Gender::unspecified) {
      unassigned.push_back(i);
      continue;
    }
    const auto& cands = available[g];
    const PoolName* pick = cands[(seed + taken[g]++) % cands.size()];
    used.insert(text::to_lower_ascii(pick->name));
    map.pairs[i] = {*mains[i], pick->name, pick->gender};
  }
  if (!unassigned.empty()) {
    std::vector<const PoolName*> rest;
    for (const auto& n : pool.names) {
      std::string key = text::to_lower_ascii(n.name);
      if (!blocked.count(key) && !used.count(key)) rest.push_back(&n);
    }
    if (rest.size() < unassigned.size()) {
      throw PoolExhaustedError(roster.work_id + ": name pool '" + pool.culture_tag + "' exhausted: need " +
                               std::to_string(unassigned.size()) + " names for unspecified-gender entries, " +
                               std::to_string(rest.size()) + " available");
    }
    for (std::size_t k = 0; k < unassigned.size(); ++k) {
      const PoolName* pick = rest[(seed + k) % rest.size()];
      map.pairs[unassigned[k]] = {*mains[unassigned[k]], pick->name, pick->gender};
    }
  }
  return map;
}

std::string name_map_to_json(const NameMap& map) {
  json pairs = json::array();
  for (const auto& p : map.pairs) {
    json e = detail::entry_to_json(p.entry);
    e["replacement"] = p.replacement;
    e["replacement_gender"] = std::string(to_string(p.replacement_gender));
    pairs.push_back(std::move(e));
  }
  json j = {{"format_version", 1},  {"work_id", map.work_id}, {"strategy", map.strategy.id()},
            {"seed", map.seed},     {"pool", map.pool_tag},   {"pairs", pairs}};
  return j.dump(2) + "\n";
}

NameMap name_map_from_json(std::string_view json_text) {
  json j = detail::parse_json(json_text, "name map");
  detail::check_format_version(j, "");
  NameMap map;
  map.work_id = detail::require_string(j, "work_id", "");
  map.strategy = ReplacementStrategy::parse(detail::require_string(j, "strategy", ""));
  map.seed = detail::require(j, "seed", "").get<std::uint64_t>();
  map.pool_tag = j.value("pool", std::string());
  const json& pairs = detail::require(j, "pairs", "");
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    std::string path = detail::index_path("pairs", i);
    NamePair p;
    p.entry = detail::entry_from_json(pairs[i], path);
    p.replacement = detail::require_string(pairs[i], "replacement", path);
    p.replacement_gender =
        parse_gender(pairs[i].value("replacement_gender", std::string())).value_or(Gender::unspecified);
    map.pairs.push_back(std::move(p));
  }
  return map;
}

std::string name_map_digest(const NameMap& map) { return sha256_hex(name_map_to_json(map)); }

Roster rendered_roster(const Roster& roster, const NameMap& map) {
  if (map.empty()) return roster;
  Roster out;
  out.work_id = roster.work_id;
  out.title = roster.title;
  for (const auto& e : roster.entries) {
    const NamePair* p = nullptr;
    for (const auto& candidate : map.pairs) {
      if (candidate.entry.canonical == e.canonical) p = &candidate;
    }
    if (p) {
      out.entries.push_back({p->replacement, {p->replacement}, e.gender, e.is_main});
    } else {
      out.entries.push_back(e);
    }
  }
  return out;
}

// ---------------------------------------------------------------- substitution

namespace {

struct AliasRule {
  std::string alias;
  const NamePair* pair;
};

std::vector<AliasRule> alias_rules(const NameMap& map) {
  std::vector<AliasRule> rules;
  for (const auto& p : map.pairs) {
    for (const auto& a : p.entry.aliases) rules.push_back({a, &p});
  }
  std::stable_sort(rules.begin(), rules.end(),
                   [](const AliasRule& a, const AliasRule& b) { return a.alias.size() > b.alias.size(); });
  return rules;
}

std::string rendered_replacement(const std::string& original, const std::string& replacement) {
  if (original.size() > 1 && text::is_all_caps(original)) return text::to_upper_ascii(replacement);
  return replacement;
}

// Rewrites one field, appending log entries for slot.
std::string substitute(std::string_view in, const std::vector<AliasRule>& rules, std::size_t slot,
                       std::vector<Substitution>* log) {
  std::string out;
  out.reserve(in.size());
  std::size_t i = 0;
  while (i < in.size()) {
    const AliasRule* hit = nullptr;
    if (text::is_word_boundary_before(in, i)) {
      for (const auto& r : rules) {
        const std::size_t n = r.alias.size();
        if (i + n > in.size()) continue;
        if (!text::iequals_ascii(in.substr(i, n), r.alias)) continue;
        if (!text::is_word_boundary_after(in, i + n)) continue;
        hit = &r;
        break;
      }
    }
    if (hit) {
      std::string original(in.substr(i, hit->alias.size()));
      std::string inserted = rendered_replacement(original, hit->pair->replacement);
      if (log) log->push_back({slot, out.size(), inserted, original});
      out += inserted;
      i += hit->alias.size();
      continue;
    }
    std::size_t len = 1;
    text::decode_utf8(in, i, len);
    out.append(in.substr(i, len));
    i += len;
  }
  return out;
}

// Visits every free-text field of a segment in a fixed order.
template <class Seg, class Fn>
void visit_text_slots(Seg& s, Fn&& fn) {
  for (auto& u : s.utterances) {
    if (u.speaker) fn(*u.speaker);
    fn(u.text);
  }
  std::visit(
      [&](auto& g) {
        using T = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<T, SpeakerAssignment>) {
          for (auto& kv : g.labels) fn(kv.second);
        } else if constexpr (std::is_same_v<T, CorefLinks>) {
          for (auto& l : g.links) fn(l.character);
        } else if constexpr (std::is_same_v<T, RoleMentions>) {
          for (auto& m : g.mentions) fn(m);
        } else if constexpr (std::is_same_v<T, AnswerSpan> || std::is_same_v<T, ReferenceSummary>) {
          fn(g.text);
        }
      },
      s.task.gold);
  auto& o = s.task.options;
  if (o.question) fn(*o.question);
  for (auto& c : o.choices) fn(c);
  for (auto& m : o.mentions) fn(m.text);
  for (auto& c : o.candidates) fn(c);
}

}  // namespace

PerturbedSegment apply_name_map(const Segment& segment, const NameMap& map) {
  PerturbedSegment out{segment, {}};
  if (map.empty()) return out;
  const auto rules = alias_rules(map);
  std::size_t slot = 0;
  visit_text_slots(out.segment, [&](std::string& field) { field = substitute(field, rules, slot++, &out.log); });
  return out;
}

std::string apply_name_map_to_text(std::string_view text, const NameMap& map) {
  if (map.empty()) return std::string(text);
  return substitute(text, alias_rules(map), 0, nullptr);
}

Segment invert_name_map(const PerturbedSegment& perturbed, const NameMap& map) {
  Segment out = perturbed.segment;
  std::map<std::size_t, std::vector<const Substitution*>> by_slot;
  for (const auto& s : perturbed.log) by_slot[s.slot].push_back(&s);

  std::size_t slot = 0;
  visit_text_slots(out, [&](std::string& field) {
    auto it = by_slot.find(slot++);
    if (it == by_slot.end()) return;
    auto& subs = it->second;
    std::sort(subs.begin(), subs.end(),
              [](const Substitution* a, const Substitution* b) { return a->offset > b->offset; });
    for (const Substitution* s : subs) {
      if (s->offset + s->inserted.size() > field.size() ||
          field.compare(s->offset, s->inserted.size(), s->inserted) != 0) {
        throw IntegrityError("expected '" + s->inserted + "' at offset " + std::to_string(s->offset) +
                             " of field " + std::to_string(s->slot));
      }
      const NamePair* pair = map.find_by_replacement(s->inserted);
      const bool alias_ok =
          pair && std::any_of(pair->entry.aliases.begin(), pair->entry.aliases.end(),
                              [&](const std::string& a) { return text::iequals_ascii(a, s->original); });
      if (!alias_ok) {
        throw IntegrityError("replacement '" + s->inserted + "' for '" + s->original +
                             "' was not produced by this name map");
      }
      field.replace(s->offset, s->inserted.size(), s->original);
    }
    by_slot.erase(it);
  });
  if (!by_slot.empty()) {
    throw IntegrityError("substitution log references field " + std::to_string(by_slot.begin()->first) +
                         " which the segment does not have");
  }
  return out;
}

// ---------------------------------------------------------------- anonymization

SpeakerAssignment AnonymizedSegment::as_gold() const {
  SpeakerAssignment a;
  for (const auto& [placeholder, name] : label_map) a.labels[placeholder] = name;
  return a;
}

AnonymizedSegment anonymize_speakers(const Segment& segment, const PlaceholderTemplate& tmpl,
                                     const Roster& roster) {
  AnonymizedSegment out{segment, {}};
  std::map<std::string, std::string> placeholder_of;  // canonical -> placeholder
  for (auto& u : out.segment.utterances) {
    if (u.kind != UtteranceKind::line || !u.speaker) continue;
    const CharacterEntry* e = roster.resolve(*u.speaker);
    if (!e) throw PerturbError("cannot anonymize: speaker '" + *u.speaker + "' is not in roster '" +
                               roster.work_id + "'");
    auto [it, inserted] = placeholder_of.emplace(e->canonical, std::string());
    if (inserted) {
      it->second = tmpl.format(out.label_map.size());
      out.label_map.emplace_back(it->second, e->canonical);
    }
    u.speaker = it->second;
  }
  return out;
}

}  // namespace charmem
