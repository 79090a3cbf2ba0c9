#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "charmem/corpus.hpp"

namespace charmem {

class CompletionService;
struct ModelSpec;

enum class PromptCondition { Baseline, Verbatim, Gist };

inline constexpr PromptCondition kAllConditions[] = {PromptCondition::Baseline, PromptCondition::Verbatim,
                                                     PromptCondition::Gist};

std::string_view to_string(PromptCondition c);
std::optional<PromptCondition> parse_prompt_condition(std::string_view s);

// Label/description pairs. Labels are names as they appear in the rendered
// segment (replacement names under name replacement).
struct CharacterDescriptionSet {
  std::string work_id;
  std::vector<std::pair<std::string, std::string>> entries;

  bool empty() const noexcept { return entries.empty(); }
  bool operator==(const CharacterDescriptionSet&) const = default;
};

// Instruction templates per (task kind, condition), plus the source probe and
// description request templates. Slots: {dialogue}, {question}, {options},
// {descriptions}.
class TemplateSet {
 public:
  static const TemplateSet& bundled();
  static TemplateSet load(std::string_view json_text);
  static TemplateSet load_file(const std::filesystem::path& path);

  // ConfigError when the pair has no template.
  const std::string& task_template(TaskKind kind, PromptCondition condition) const;
  const std::string& source_probe() const noexcept { return source_probe_; }
  const std::string& description_request() const noexcept { return description_request_; }

  // First line of the source probe template.
  std::string source_probe_instruction() const;

 private:
  std::map<std::pair<TaskKind, PromptCondition>, std::string> tasks_;
  std::string source_probe_;
  std::string description_request_;
};

// Slots a task kind's templates must contain exactly once.
std::vector<std::string_view> required_slots(TaskKind kind);

// Throws TemplateError on unknown, missing or repeated slots.
void validate_template(std::string_view tmpl, const std::vector<std::string_view>& required);

std::string render(const TaskInstance& task, PromptCondition condition, const Segment& segment,
                   const CharacterDescriptionSet* descriptions = nullptr,
                   const TemplateSet& templates = TemplateSet::bundled());

std::string render_source_probe(std::span<const Utterance> body,
                                const TemplateSet& templates = TemplateSet::bundled());

// Main characters of the (rendered) roster that occur in the segment as a
// speaker or a whole word, in roster order, by canonical name.
std::vector<std::string> mains_present(const Segment& segment, const Roster& roster);

// Pulls "Label: description" runs out of a free-form response. Throws
// IncompleteDescriptionsError naming the labels that were not found.
CharacterDescriptionSet parse_descriptions(std::string_view response, const std::vector<std::string>& labels,
                                           std::string work_id = {});

// One persistent JSON file of description sets keyed by segment id.
class DescriptionCache {
 public:
  explicit DescriptionCache(std::filesystem::path file);

  std::optional<CharacterDescriptionSet> get(const std::string& segment_id);
  void put(const std::string& segment_id, const CharacterDescriptionSet& set);

 private:
  std::filesystem::path file_;
  std::mutex mu_;
  std::map<std::string, CharacterDescriptionSet> sets_;
};

// Asks the model for a description of every main character present.
CharacterDescriptionSet generate_descriptions(const Segment& segment, const Roster& rendered_roster,
                                              CompletionService& service, const ModelSpec& model,
                                              const TemplateSet& templates = TemplateSet::bundled(),
                                              DescriptionCache* cache = nullptr);

}  // namespace charmem
