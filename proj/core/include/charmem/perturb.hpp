#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "charmem/corpus.hpp"

namespace charmem {

struct MaskStrategy {
  std::string pattern = "P{n}";
  bool operator==(const MaskStrategy&) const = default;
};

struct CrossCulturalStrategy {
  bool gender_swap = false;
  bool operator==(const CrossCulturalStrategy&) const = default;
};

struct SameCulturalStrategy {
  bool gender_swap = false;
  bool operator==(const SameCulturalStrategy&) const = default;
};

class ReplacementStrategy {
 public:
  using Variant = std::variant<MaskStrategy, CrossCulturalStrategy, SameCulturalStrategy>;

  ReplacementStrategy() = default;
  ReplacementStrategy(Variant v);  // NOLINT(google-explicit-constructor)
  ReplacementStrategy(MaskStrategy s) : ReplacementStrategy(Variant(std::move(s))) {}           // NOLINT
  ReplacementStrategy(CrossCulturalStrategy s) : ReplacementStrategy(Variant(s)) {}            // NOLINT
  ReplacementStrategy(SameCulturalStrategy s) : ReplacementStrategy(Variant(s)) {}             // NOLINT

  // Ids: "mask", "mask:<pattern>", "cross-cultural", "cross-cultural+swap",
  // "same-cultural", "same-cultural+swap". Throws ConfigError otherwise.
  static ReplacementStrategy parse(std::string_view id);
  std::string id() const;

  const Variant& variant() const noexcept { return variant_; }
  bool is_mask() const noexcept { return std::holds_alternative<MaskStrategy>(variant_); }
  bool gender_swap() const noexcept;

  bool operator==(const ReplacementStrategy&) const = default;

 private:
  Variant variant_{MaskStrategy{}};
};

struct PoolName {
  std::string name;
  Gender gender = Gender::unspecified;
};

struct NamePool {
  std::string culture_tag;
  std::vector<PoolName> names;
};

NamePool load_name_pool(std::string_view json_text);
NamePool load_name_pool_file(const std::filesystem::path& path);
const NamePool& default_cross_cultural_pool();
const NamePool& default_same_cultural_pool();
// Bundled pool matching the strategy family; mask strategies get an empty pool.
const NamePool& default_pool_for(const ReplacementStrategy& strategy);

struct NamePair {
  CharacterEntry entry;
  std::string replacement;
  Gender replacement_gender = Gender::unspecified;
  bool operator==(const NamePair&) const = default;
};

struct NameMap {
  ReplacementStrategy strategy;
  std::uint64_t seed = 0;
  std::string work_id;
  std::string pool_tag;
  std::vector<NamePair> pairs;

  bool empty() const noexcept { return pairs.empty(); }
  // Replacement for a name given in any alias form, or nullptr.
  const NamePair* find_by_alias(std::string_view name) const;
  const NamePair* find_by_replacement(std::string_view name) const;
  bool operator==(const NameMap&) const = default;
};

// Maps every main entry of the roster, in roster order. Pool names of the
// required gender (same gender, or the opposite one under gender swap) are
// taken in pool order starting at offset seed; names colliding with any roster
// alias are skipped. Mask strategies number entries in roster order.
NameMap build_name_map(const Roster& roster, const ReplacementStrategy& strategy, const NamePool& pool,
                       std::uint64_t seed);

std::string name_map_to_json(const NameMap& map);
NameMap name_map_from_json(std::string_view json_text);
std::string name_map_digest(const NameMap& map);

// Roster as it looks after replacement: mapped entries are known only by
// their replacement string.
Roster rendered_roster(const Roster& roster, const NameMap& map);

// One replaced occurrence. slot indexes the segment's text fields in visiting
// order; offset is the byte position of the inserted text in that field.
struct Substitution {
  std::size_t slot = 0;
  std::size_t offset = 0;
  std::string inserted;
  std::string original;
  bool operator==(const Substitution&) const = default;
};

struct PerturbedSegment {
  Segment segment;
  std::vector<Substitution> log;
};

// Replaces whole-word, case-insensitive occurrences of every alias of every
// mapped entry (longest alias first) in speaker labels, dialogue, scene
// directions and the task payload. Inserted names are upper-cased when the
// matched occurrence is all caps. Pronouns and unmapped names are untouched.
PerturbedSegment apply_name_map(const Segment& segment, const NameMap& map);

// Exact inverse of apply_name_map. Throws IntegrityError if the log does not
// match the text or names a replacement this map did not produce.
Segment invert_name_map(const PerturbedSegment& perturbed, const NameMap& map);

// Replaces names in a free-standing string (descriptions, predictions).
std::string apply_name_map_to_text(std::string_view text, const NameMap& map);

struct AnonymizedSegment {
  Segment segment;
  // placeholder -> canonical, ordered by placeholder index
  std::vector<std::pair<std::string, std::string>> label_map;

  SpeakerAssignment as_gold() const;
};

// Numbers distinct speakers (by canonical name) in order of first dialogue
// line. Scene directions and dialogue text are left untouched.
AnonymizedSegment anonymize_speakers(const Segment& segment, const PlaceholderTemplate& tmpl,
                                     const Roster& roster);

}  // namespace charmem
