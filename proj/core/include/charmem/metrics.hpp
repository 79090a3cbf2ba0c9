#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "charmem/corpus.hpp"

namespace charmem {

enum class MetricId { ExactMatch, TokenF1, RougeL, Rouge1, Rouge2, SpeakerAcc, LinkF1, SetF1 };

std::string_view to_string(MetricId id);
std::optional<MetricId> parse_metric_id(std::string_view s);

struct Score {
  double value = 0.0;  // in [0, 1]
  MetricId metric = MetricId::ExactMatch;
  std::size_t n_items = 1;
};

// Lowercase, drop punctuation (ASCII and common Unicode), drop the articles
// a/an/the, collapse whitespace. Invalid UTF-8 bytes are dropped.
std::string normalize_answer(std::string_view s);
std::vector<std::string> answer_tokens(std::string_view s);

Score exact_match(std::string_view pred, std::string_view gold);
Score token_f1(std::string_view pred, std::string_view gold);

enum class RougeVariant { R1, R2, RL };

// ROUGE tokens: lowercase, every non-alphanumeric byte run is a separator.
// Articles are kept.
std::vector<std::string> rouge_tokens(std::string_view s);

// Length of the longest common subsequence (two-row DP).
template <class T>
std::size_t lcs_length(std::span<const T> a, std::span<const T> b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      cur[j + 1] = a[i] == b[j] ? prev[j] + 1 : std::max(prev[j + 1], cur[j]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

// F-measure from an overlap count and the two totals.
double f_measure(std::size_t overlap, std::size_t pred_total, std::size_t ref_total);

// Token-level ROUGE F-measure. Identical token lists score 1 (including two
// empty lists); otherwise an empty side scores 0.
double rouge_tokens_f(std::span<const std::string> pred, std::span<const std::string> ref, RougeVariant variant);
Score rouge(std::string_view pred, std::string_view ref, RougeVariant variant);

// Names are compared after alias canonicalization through roster (when
// given) and normalize_answer. Missing predictions count as wrong.
Score speaker_accuracy(const SpeakerAssignment& pred, const SpeakerAssignment& gold, const Roster* roster = nullptr);
Score link_f1(const CorefLinks& pred, const CorefLinks& gold, const Roster* roster = nullptr);
Score set_f1(const std::vector<std::string>& pred, const std::vector<std::string>& gold);

struct Prediction {
  TaskKind kind = TaskKind::CharacterGuess;
  TaskPayload payload;
  bool parsed = false;  // false when nothing usable was found
};

// Lenient extraction of a task-shaped answer. Never throws.
Prediction parse_prediction(std::string_view raw_response, TaskKind kind, const Segment& segment);

MetricId headline_metric(TaskKind kind);

// All metrics for the task kind, headline first.
std::vector<Score> score_prediction(const Prediction& pred, const TaskInstance& gold, const Roster* roster = nullptr);

}  // namespace charmem
