#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "charmem/corpus.hpp"
#include "charmem/metrics.hpp"
#include "charmem/perturb.hpp"
#include "charmem/prompts.hpp"
#include "charmem/providers.hpp"

namespace charmem {

inline constexpr std::string_view kOriginStrategy = "none";

struct Ablations {
  bool include_descriptions = false;
  // Forward-map predicted original names to their replacements before scoring.
  bool label_mapping = true;
};

struct CellKey {
  TaskKind task = TaskKind::CharacterGuess;
  std::string strategy;  // "none" or a replacement strategy id
  PromptCondition condition = PromptCondition::Baseline;
  std::string model;
  auto operator<=>(const CellKey&) const = default;
};

struct ExperimentPlan {
  std::filesystem::path corpus;
  std::filesystem::path roster_dir;
  std::vector<TaskKind> tasks;
  std::vector<std::string> strategies;  // canonical ids, "none" = original text
  std::vector<PromptCondition> conditions;
  std::vector<std::string> models;  // model ids of the provider config
  int trials = 1;
  std::uint64_t seed = 0;
  int concurrency = 4;
  Ablations ablations;
  std::map<std::string, std::filesystem::path> pools;  // "cross-cultural" / "same-cultural" -> pool file
  std::optional<std::filesystem::path> templates;
  std::string speaker_template = "P{n}";
  std::optional<std::string> description_model;  // defaults to the evaluated model
  std::map<TaskKind, std::string> task_labels;
  std::optional<std::string> nr_strategy;

  // tasks x strategies x conditions x models, in that nesting order.
  std::vector<CellKey> cells() const;
};

// Relative paths resolve against base_dir. Errors carry the offending key path.
ExperimentPlan parse_plan(std::string_view json_text, const std::filesystem::path& base_dir);
ExperimentPlan load_plan_file(const std::filesystem::path& path);

// Every plan model id exists in the provider config (ConfigError "models[i]").
void validate_plan_models(const ExperimentPlan& plan, const ProviderConfig& config);

// SHA-256 over the resolved plan, the model specs it uses and the content of
// the corpus, roster, pool and template files.
std::string plan_hash(const ExperimentPlan& plan, const ProviderConfig& config);

std::string default_task_label(TaskKind kind);

// cross-cultural when present, else the first strategy other than "none".
std::optional<std::string> default_nr_strategy(const std::vector<std::string>& strategies);

struct TrialRecord {
  CellKey cell;
  int trial = 0;
  std::string segment_id;
  std::string work_id;
  bool ok = false;
  std::string error;
  std::vector<Score> scores;  // headline first; empty on failure
  bool parsed = false;
  std::string request_hash;
  std::string response_text;
};

// Order and provenance information written as the first results line.
struct RunHeader {
  std::string plan_hash;
  int trials = 0;
  std::vector<TaskKind> tasks;
  std::vector<std::string> strategies;
  std::vector<PromptCondition> conditions;
  std::vector<std::string> models;
  std::vector<ModelSpec> model_specs;
  std::map<TaskKind, std::string> task_labels;
  std::optional<std::string> nr_strategy;
};

std::string trial_record_to_json(const TrialRecord& record);
std::string run_header_to_json(const RunHeader& header);

struct ResultsFile {
  std::optional<RunHeader> header;
  std::vector<TrialRecord> records;
};

// Throws ParseError with the 1-based line number of a corrupt line.
ResultsFile load_results(std::string_view jsonl);
ResultsFile load_results_file(const std::filesystem::path& path);

struct ConditionCell {
  CellKey key;
  MetricId metric = MetricId::ExactMatch;
  bool headline = true;
  double mean = 0.0;
  std::vector<double> per_trial;
  std::size_t n_segments = 0;
  std::size_t failures = 0;
  bool complete = true;  // every trial has a scored record for every segment
};

// Mean over segments within a trial, then over trials. trials = 0 infers the
// count from the highest trial index.
std::vector<ConditionCell> aggregate(const std::vector<TrialRecord>& records, const RunHeader* order = nullptr);

struct DeltaRow {
  TaskKind task = TaskKind::CharacterGuess;
  std::string model;
  double origin = 0.0;
  double nr = 0.0;
  double nr_gist = 0.0;
  double drop_nr = 0.0;     // origin - nr
  double delta_gist = 0.0;  // nr - nr_gist
  bool operator==(const DeltaRow&) const = default;
};

DeltaRow make_delta_row(TaskKind task, std::string model, double origin, double nr, double nr_gist);

struct DeltaReport {
  std::string nr_strategy;
  std::vector<DeltaRow> rows;
  std::vector<std::string> warnings;
  bool operator==(const DeltaReport&) const = default;
};

// Rows use the headline cells Origin(none, Baseline), NR(strategy, Baseline)
// and NR+GIST(strategy, Gist). Missing or incomplete cells drop the row with a warning.
DeltaReport compute_deltas(const std::vector<ConditionCell>& cells, const std::string& nr_strategy);

// Scores are stored in [0,1] and shown x100 to one decimal.
std::string format_score(double value);
// "(−46.2)" for a loss, "(+1.4)" for a gain, "(+0.0)" for no change.
std::string format_delta(double loss);

struct ReportInputs {
  RunHeader header;
  std::vector<ConditionCell> cells;
  DeltaReport deltas;
};

ReportInputs build_report(const ResultsFile& results, const std::optional<std::string>& nr_strategy = std::nullopt);

std::string render_markdown(const ReportInputs& report);
std::string render_cells_csv(const ReportInputs& report);
std::string render_deltas_csv(const ReportInputs& report);
std::string render_report_json(const ReportInputs& report);
std::string render_plot_conditions_csv(const ReportInputs& report);
std::string render_plot_drops_csv(const ReportInputs& report);

DeltaReport delta_report_from_json(std::string_view report_json);

enum class ReportFormat { markdown, csv, json, all };
std::optional<ReportFormat> parse_report_format(std::string_view s);

// Writes the files for the format into out_dir and returns their paths.
std::vector<std::filesystem::path> emit_report(const ReportInputs& report, ReportFormat format,
                                               const std::filesystem::path& out_dir);

struct ExecuteOptions {
  std::filesystem::path out_dir;
  // Stop handing out jobs after this many records (simulated interruption).
  std::optional<std::size_t> abort_after;
  std::function<void(const TrialRecord&)> on_record;
};

struct RunSummary {
  std::string plan_hash;
  std::size_t cells = 0;
  std::size_t jobs = 0;
  std::size_t completed = 0;
  std::size_t failed = 0;
  bool interrupted = false;
  CompletionStats stats;
  std::vector<std::filesystem::path> outputs;
};

// Loads corpus and rosters, runs every preflight check (ConfigError or
// PerturbError before any provider call), executes the job grid, then writes
// results.jsonl, namemaps.json and the reports into out_dir.
RunSummary execute(const ExperimentPlan& plan, const ProviderConfig& config, CompletionService& service,
                   const ExecuteOptions& options);

}  // namespace charmem
