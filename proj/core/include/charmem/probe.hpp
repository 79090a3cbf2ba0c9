#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "charmem/corpus.hpp"
#include "charmem/perturb.hpp"
#include "charmem/prompts.hpp"
#include "charmem/providers.hpp"

namespace charmem {

enum class Medium { tv, movie, novel };

std::string_view to_string(Medium m);
std::optional<Medium> parse_medium(std::string_view s);

struct ProbeSegment {
  std::string id;
  std::string work_id;
  std::string work_title;
  std::vector<std::string> work_aliases;
  std::vector<Utterance> body;
  Medium medium = Medium::tv;

  std::size_t word_count() const;
};

// JSONL, one {format_version, id, work_id, work_title, work_aliases, medium, body} per line.
std::vector<ProbeSegment> load_probe_corpus(std::string_view jsonl);
std::vector<ProbeSegment> load_probe_corpus_file(const std::filesystem::path& path);
std::string probe_segment_to_json_line(const ProbeSegment& segment);

// True iff the normalized response contains the normalized title or one of
// the aliases as a contiguous token run.
bool match_title(std::string_view response, std::string_view title, const std::vector<std::string>& aliases);

struct ProbeOutcome {
  std::string segment_id;
  std::vector<int> correct;  // per trial: 1, 0, or -1 when the trial failed
  std::vector<std::string> responses;
  std::vector<std::string> errors;
  bool excluded = false;  // every trial failed
};

struct ProbeResult {
  std::optional<ReplacementStrategy> strategy;  // nullopt = original text
  ModelSpec model;
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;  // successful (segment, trial) completions
  std::size_t excluded = 0;
  int trials = 1;
  std::vector<ProbeOutcome> outcomes;

  std::string strategy_id() const;  // "none" for the original text
};

struct ProbeOptions {
  int trials = 1;
  std::uint64_t seed = 0;
  int concurrency = 4;
  const NamePool* pool = nullptr;  // default pool for the strategy when null
  const TemplateSet* templates = nullptr;
};

// Throws Error("empty probe set") on an empty list and ConfigError when a
// strategy is set and a work has no roster.
ProbeResult run_probe(const std::vector<ProbeSegment>& segments, const std::optional<ReplacementStrategy>& strategy,
                      const std::map<std::string, Roster>& rosters, const ModelSpec& model,
                      CompletionService& service, const ProbeOptions& options = {});

// {"models": {model: {strategy: accuracy}}, "cells": [...]} and the matching heat-map CSV.
std::string probe_grid_json(const std::vector<ProbeResult>& results);
std::string probe_grid_csv(const std::vector<ProbeResult>& results);

}  // namespace charmem
