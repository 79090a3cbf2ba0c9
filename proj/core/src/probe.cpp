#include "charmem/probe.hpp"

#include <cstdio>

#include "charmem/errors.hpp"
#include "charmem/metrics.hpp"
#include "charmem/text.hpp"
#include "json_util.hpp"
#include "parallel.hpp"

namespace charmem {

using detail::json;

std::string_view to_string(Medium m) {
  switch (m) {
    case Medium::tv: return "tv";
    case Medium::movie: return "movie";
    case Medium::novel: return "novel";
  }
  return "?";
}

std::optional<Medium> parse_medium(std::string_view s) {
  for (auto m : {Medium::tv, Medium::movie, Medium::novel}) {
    if (text::iequals_ascii(s, to_string(m))) return m;
  }
  return std::nullopt;
}

std::size_t ProbeSegment::word_count() const {
  std::size_t n = 0;
  for (const auto& u : body) n += text::split_whitespace(u.text).size();
  return n;
}

std::vector<ProbeSegment> load_probe_corpus(std::string_view jsonl) {
  std::vector<ProbeSegment> out;
  std::size_t line_no = 0;
  for (const auto& line : text::split_lines(jsonl)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      json j = json::parse(line);
      detail::check_format_version(j, "");
      ProbeSegment s;
      s.id = detail::require_string(j, "id", "");
      s.work_id = detail::require_string(j, "work_id", "");
      s.work_title = detail::require_string(j, "work_title", "");
      if (text::trim(s.work_title).empty()) throw ConfigError("work_title", "title must be non-empty");
      if (j.contains("work_aliases")) s.work_aliases = j.at("work_aliases").get<std::vector<std::string>>();
      if (j.contains("medium")) {
        auto m = parse_medium(j.at("medium").get<std::string>());
        if (!m) throw ConfigError("medium", "expected tv, movie or novel");
        s.medium = *m;
      }
      const json& body = detail::require(j, "body", "");
      for (std::size_t i = 0; i < body.size(); ++i) {
        s.body.push_back(detail::utterance_from_json(body[i], detail::index_path("body", i)));
      }
      for (const auto& prev : out) {
        if (prev.id == s.id) throw ConfigError("id", "duplicate segment id '" + s.id + "'");
      }
      out.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw ParseError(e.what(), line_no);
    } catch (const ParseError& e) {
      throw ParseError(e.message(), line_no);
    } catch (const Error& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return out;
}

std::vector<ProbeSegment> load_probe_corpus_file(const std::filesystem::path& path) {
  try {
    return load_probe_corpus(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.message(), e.line());
  }
}

std::string probe_segment_to_json_line(const ProbeSegment& s) {
  json body = json::array();
  for (const auto& u : s.body) body.push_back(detail::utterance_to_json(u));
  json j = {{"format_version", 1}, {"id", s.id},       {"work_id", s.work_id},
            {"work_title", s.work_title}, {"work_aliases", s.work_aliases}, {"medium", std::string(to_string(s.medium))},
            {"body", body}};
  return j.dump();
}

bool match_title(std::string_view response, std::string_view title, const std::vector<std::string>& aliases) {
  auto resp = answer_tokens(response);
  auto contains = [&](std::string_view needle) {
    auto n = answer_tokens(needle);
    if (n.empty() || n.size() > resp.size()) return false;
    for (std::size_t i = 0; i + n.size() <= resp.size(); ++i) {
      if (std::equal(n.begin(), n.end(), resp.begin() + static_cast<std::ptrdiff_t>(i))) return true;
    }
    return false;
  };
  if (contains(title)) return true;
  return std::any_of(aliases.begin(), aliases.end(), [&](const std::string& a) { return contains(a); });
}

std::string ProbeResult::strategy_id() const { return strategy ? strategy->id() : "none"; }

ProbeResult run_probe(const std::vector<ProbeSegment>& segments, const std::optional<ReplacementStrategy>& strategy,
                      const std::map<std::string, Roster>& rosters, const ModelSpec& model,
                      CompletionService& service, const ProbeOptions& options) {
  if (segments.empty()) throw Error("empty probe set");
  if (options.trials < 1) throw ConfigError("trials", "must be >= 1");
  const TemplateSet& templates = options.templates ? *options.templates : TemplateSet::bundled();

  // One name map per work for the whole probe.
  std::map<std::string, NameMap> maps;
  if (strategy) {
    const NamePool& pool = options.pool ? *options.pool : default_pool_for(*strategy);
    for (const auto& s : segments) {
      if (maps.count(s.work_id)) continue;
      auto it = rosters.find(s.work_id);
      if (it == rosters.end()) throw ConfigError("rosters", "no roster for work '" + s.work_id + "'");
      maps.emplace(s.work_id, build_name_map(it->second, *strategy, pool, options.seed));
    }
  }

  std::vector<std::string> prompts;
  for (const auto& s : segments) {
    std::vector<Utterance> body = s.body;
    if (strategy) {
      Segment tmp;
      tmp.id = s.id;
      tmp.work_id = s.work_id;
      tmp.utterances = s.body;
      tmp.task = TaskInstance{TaskKind::Summarize, ReferenceSummary{}, {}};
      body = apply_name_map(tmp, maps.at(s.work_id)).segment.utterances;
    }
    prompts.push_back(render_source_probe(body, templates));
  }

  ProbeResult result;
  result.strategy = strategy;
  result.model = model;
  result.trials = options.trials;
  result.outcomes.resize(segments.size());
  for (std::size_t i = 0; i < segments.size(); ++i) {
    result.outcomes[i].segment_id = segments[i].id;
    result.outcomes[i].correct.assign(static_cast<std::size_t>(options.trials), -1);
    result.outcomes[i].responses.assign(static_cast<std::size_t>(options.trials), "");
    result.outcomes[i].errors.assign(static_cast<std::size_t>(options.trials), "");
  }
  const std::size_t trials = static_cast<std::size_t>(options.trials);
  detail::parallel_for(segments.size() * trials, options.concurrency, [&](std::size_t job) {
    std::size_t si = job / trials;
    std::size_t t = job % trials;
    auto& o = result.outcomes[si];
    try {
      auto rec = service.complete(model, prompts[si], static_cast<int>(t));
      o.responses[t] = rec.response_text;
      o.correct[t] = match_title(rec.response_text, segments[si].work_title, segments[si].work_aliases) ? 1 : 0;
    } catch (const std::exception& e) {
      o.errors[t] = e.what();
    }
  });
  for (auto& o : result.outcomes) {
    std::size_t ok = 0;
    for (int c : o.correct) {
      if (c < 0) continue;
      ++ok;
      result.correct += static_cast<std::size_t>(c);
    }
    result.total += ok;
    if (ok == 0) {
      o.excluded = true;
      ++result.excluded;
    }
  }
  result.accuracy = result.total ? static_cast<double>(result.correct) / static_cast<double>(result.total) : 0.0;
  return result;
}

std::string probe_grid_json(const std::vector<ProbeResult>& results) {
  json models = json::object();
  json cells = json::array();
  for (const auto& r : results) {
    models[r.model.id][r.strategy_id()] = r.accuracy;
    cells.push_back({{"model", r.model.id},
                     {"model_name", r.model.model_name},
                     {"provider", r.model.provider_id},
                     {"strategy", r.strategy_id()},
                     {"accuracy", r.accuracy},
                     {"correct", r.correct},
                     {"total", r.total},
                     {"excluded", r.excluded},
                     {"trials", r.trials}});
  }
  return json{{"models", models}, {"cells", cells}}.dump(2) + "\n";
}

std::string probe_grid_csv(const std::vector<ProbeResult>& results) {
  std::string out = "model,strategy,accuracy_pct,correct,total,excluded\n";
  for (const auto& r : results) {
    char pct[32];
    std::snprintf(pct, sizeof pct, "%.1f", r.accuracy * 100.0);
    out += r.model.id + "," + r.strategy_id() + "," + pct + "," + std::to_string(r.correct) + "," +
           std::to_string(r.total) + "," + std::to_string(r.excluded) + "\n";
  }
  return out;
}

}  // namespace charmem
