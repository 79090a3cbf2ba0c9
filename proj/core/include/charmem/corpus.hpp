#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace charmem {

enum class UtteranceKind { line, scene_direction };

struct Utterance {
  std::optional<std::string> speaker;  // absent for scene directions
  std::string text;
  UtteranceKind kind = UtteranceKind::line;

  static Utterance line(std::string speaker, std::string text);
  static Utterance direction(std::string text);

  bool operator==(const Utterance&) const = default;
};

enum class TaskKind { CharacterGuess, Coreference, PersonalityMC, RoleDetect, QA, Summarize };

inline constexpr TaskKind kAllTaskKinds[] = {TaskKind::CharacterGuess, TaskKind::Coreference,
                                             TaskKind::PersonalityMC,  TaskKind::RoleDetect,
                                             TaskKind::QA,             TaskKind::Summarize};

std::string_view to_string(TaskKind kind);
std::optional<TaskKind> parse_task_kind(std::string_view s);

// Gold/prediction payloads, one alternative per task kind (same order as TaskKind).
struct SpeakerAssignment {
  std::map<std::string, std::string> labels;  // placeholder -> character name
  bool operator==(const SpeakerAssignment&) const = default;
};

struct CorefLink {
  std::string mention_id;
  std::string character;
  auto operator<=>(const CorefLink&) const = default;
};

struct CorefLinks {
  std::vector<CorefLink> links;
  bool operator==(const CorefLinks&) const = default;
};

struct OptionChoice {
  std::optional<std::size_t> index;  // empty = no parseable choice
  bool operator==(const OptionChoice&) const = default;
};

struct RoleMentions {
  std::vector<std::string> mentions;
  bool operator==(const RoleMentions&) const = default;
};

struct AnswerSpan {
  std::string text;
  bool operator==(const AnswerSpan&) const = default;
};

struct ReferenceSummary {
  std::string text;
  bool operator==(const ReferenceSummary&) const = default;
};

using TaskPayload =
    std::variant<SpeakerAssignment, CorefLinks, OptionChoice, RoleMentions, AnswerSpan, ReferenceSummary>;

TaskKind payload_kind(const TaskPayload& payload);
TaskPayload empty_payload(TaskKind kind);

struct Mention {
  std::string id;
  std::string text;
  bool operator==(const Mention&) const = default;
};

struct TaskOptions {
  std::optional<std::string> question;
  std::vector<std::string> choices;     // PersonalityMC traits
  std::vector<Mention> mentions;        // Coreference mention inventory
  std::vector<std::string> candidates;  // CharacterGuess candidate names, optional
  bool operator==(const TaskOptions&) const = default;
};

struct TaskInstance {
  TaskKind kind = TaskKind::CharacterGuess;
  TaskPayload gold;
  TaskOptions options;
  bool operator==(const TaskInstance&) const = default;
};

struct Segment {
  std::string id;
  std::string work_id;
  std::vector<Utterance> utterances;
  TaskInstance task;
  bool operator==(const Segment&) const = default;
};

enum class Gender { female, male, unspecified };

std::string_view to_string(Gender g);
std::optional<Gender> parse_gender(std::string_view s);

struct CharacterEntry {
  std::string canonical;
  std::vector<std::string> aliases;  // always contains canonical
  Gender gender = Gender::unspecified;
  bool is_main = false;
  bool operator==(const CharacterEntry&) const = default;
};

struct Roster {
  std::string work_id;
  std::string title;
  std::vector<CharacterEntry> entries;

  // Case-insensitive alias lookup; nullptr when the label is unknown.
  const CharacterEntry* resolve(std::string_view label) const;
  std::vector<const CharacterEntry*> main_entries() const;
};

// Builds a roster and enforces its invariants: unique canonicals, no alias
// shared between entries, canonical listed among aliases.
Roster make_roster(std::string work_id, std::vector<CharacterEntry> entries, std::string title = {});

Roster load_roster(std::string_view json_text);
Roster load_roster_file(const std::filesystem::path& path);
// Every *.json file in dir, keyed by work_id.
std::map<std::string, Roster> load_roster_dir(const std::filesystem::path& dir);
std::string roster_to_json(const Roster& roster);

// Placeholder label pattern with exactly one "{n}" slot, e.g. "P{n}".
class PlaceholderTemplate {
 public:
  explicit PlaceholderTemplate(std::string pattern);

  std::string format(std::size_t n) const;
  std::optional<std::size_t> match(std::string_view label) const;
  const std::string& pattern() const noexcept { return pattern_; }

  static const PlaceholderTemplate& p_style();        // "P{n}"
  static const PlaceholderTemplate& speaker_style();  // "Speaker {n}"

 private:
  std::string pattern_;
  std::string prefix_;
  std::string suffix_;
};

bool is_placeholder(std::string_view label);

enum class ScriptFormat { labeled_lines, jsonl };

// labeled-lines: a line is dialogue iff it matches "<name>: <text>" where the
// name has no colon; other non-blank lines are scene directions. Blank lines
// are skipped. jsonl: one {speaker?, kind, text} object per line.
std::vector<Utterance> parse_script(std::string_view raw, ScriptFormat format);

// Renders "Label: text" lines and bare scene directions joined by '\n'.
std::string serialize_dialogue(std::span<const Utterance> utterances);

struct Diagnostic {
  std::string segment_id;
  std::string label;
  std::size_t utterance_index = 0;
  std::string message;
};

std::vector<Diagnostic> validate_segment(const Segment& segment, const Roster& roster);

// Corpus JSONL: one Segment per line with format_version 1.
std::vector<Segment> load_corpus(std::string_view jsonl);
std::vector<Segment> load_corpus_file(const std::filesystem::path& path);
std::string segment_to_json_line(const Segment& segment);

std::string read_file(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace charmem
