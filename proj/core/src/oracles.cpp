#include <algorithm>
#include <map>

#include "charmem/providers.hpp"
#include "charmem/text.hpp"
#include "json_util.hpp"

namespace charmem {

namespace {

std::string normalize_block(std::string_view s) {
  std::vector<std::string> lines;
  for (auto& l : text::split_lines(s)) {
    auto r = text::rtrim(l);
    if (!r.empty()) lines.push_back(std::move(r));
  }
  return text::join(lines, "\n");
}

// "P3: text" or "Speaker 3: text"; returns the label length or 0.
std::size_t placeholder_prefix(std::string_view line) {
  std::size_t i = 0;
  if (line.starts_with("Speaker ")) {
    i = 8;
  } else if (line.starts_with("P")) {
    i = 1;
  } else {
    return 0;
  }
  std::size_t digits = i;
  while (i < line.size() && line[i] >= '0' && line[i] <= '9') ++i;
  if (i == digits || line.substr(i, 2) != ": ") return 0;
  return i;
}

struct PlaceholderLine {
  std::string label;
  std::string text;
};

std::vector<PlaceholderLine> placeholder_lines(std::string_view prompt) {
  std::vector<PlaceholderLine> out;
  for (const auto& raw : text::split_lines(prompt)) {
    std::string line = text::rtrim(raw);
    if (std::size_t n = placeholder_prefix(line)) out.push_back({line.substr(0, n), line.substr(n + 2)});
  }
  return out;
}

// Labels in order of first appearance.
std::vector<std::string> label_order(const std::vector<PlaceholderLine>& lines) {
  std::vector<std::string> labels;
  for (const auto& l : lines) {
    if (std::find(labels.begin(), labels.end(), l.label) == labels.end()) labels.push_back(l.label);
  }
  return labels;
}

class VerbatimOracle : public Backend {
 public:
  VerbatimOracle(std::vector<WorkText> corpus, std::string instruction) : instruction_(std::move(instruction)) {
    for (auto& w : corpus) {
      Work work{std::move(w.title), normalize_block(w.raw_text), {}};
      for (const auto& line : text::split_lines(work.text)) {
        auto colon = line.find(": ");
        if (colon == std::string::npos || colon == 0) continue;
        std::string speaker = line.substr(0, colon);
        if (speaker.find(':') != std::string::npos) continue;
        work.lines.emplace(line.substr(colon + 2), speaker);  // first speaker of a repeated line wins
      }
      works_.push_back(std::move(work));
    }
  }

 protected:
  BackendReply do_send(const ModelSpec&, const std::string& prompt, int) override {
    BackendReply reply;
    if (prompt.starts_with(instruction_)) {
      reply.text = source(prompt);
      return reply;
    }
    reply.text = std::string(kUnknownSource);
    auto lines = placeholder_lines(prompt);
    if (lines.empty()) return reply;
    for (const auto& w : works_) {
      std::map<std::string, std::string> names;
      bool all = true;
      for (const auto& l : lines) {
        auto it = w.lines.find(l.text);
        if (it == w.lines.end()) {
          all = false;
          break;
        }
        names.emplace(l.label, it->second);
      }
      if (!all) continue;
      std::vector<std::string> out;
      for (const auto& label : label_order(lines)) out.push_back(label + ": " + names.at(label));
      reply.text = text::join(out, "\n");
      return reply;
    }
    return reply;
  }

 private:
  struct Work {
    std::string title;
    std::string text;
    std::map<std::string, std::string> lines;  // utterance text -> speaker
  };

  std::string source(const std::string& prompt) const {
    auto nl = prompt.find('\n');
    std::string body = normalize_block(nl == std::string::npos ? std::string_view{} : std::string_view(prompt).substr(nl + 1));
    if (body.empty()) return std::string(kUnknownSource);
    for (const auto& w : works_) {
      if (w.text.find(body) != std::string::npos) return w.title;
    }
    return std::string(kUnknownSource);
  }

  std::string instruction_;
  std::vector<Work> works_;
};

class GistOracle : public Backend {
 public:
  explicit GistOracle(std::vector<TraitProfile> db) : db_(std::move(db)) {
    for (auto& p : db_) {
      for (auto& k : p.keywords) k = text::to_lower_ascii(k);
    }
  }

 protected:
  BackendReply do_send(const ModelSpec&, const std::string& prompt, int) override {
    BackendReply reply;
    auto lines = placeholder_lines(prompt);
    if (lines.empty() || db_.empty()) {
      reply.text = std::string(kUnknownSource);
      return reply;
    }
    std::vector<std::string> out;
    detail::json low = detail::json::array();
    for (const auto& label : label_order(lines)) {
      std::string said;
      for (const auto& l : lines) {
        if (l.label == label) said += l.text + "\n";
      }
      std::size_t best = 0, best_count = 0;
      for (std::size_t i = 0; i < db_.size(); ++i) {
        std::size_t count = 0;
        for (const auto& k : db_[i].keywords) {
          for (std::size_t pos = text::find_word(said, k); pos != std::string::npos;
               pos = text::find_word(said, k, pos + k.size())) {
            ++count;
          }
        }
        if (count > best_count) {
          best = i;
          best_count = count;
        }
      }
      if (best_count == 0) low.push_back(label);
      out.push_back(label + ": " + db_[best].character);
    }
    reply.text = text::join(out, "\n");
    if (!low.empty()) reply.metadata = detail::json{{"low_confidence", low}}.dump();
    return reply;
  }

 private:
  std::vector<TraitProfile> db_;
};

}  // namespace

std::shared_ptr<Backend> make_verbatim_oracle(std::vector<WorkText> corpus, std::string probe_instruction) {
  return std::make_shared<VerbatimOracle>(std::move(corpus), std::move(probe_instruction));
}

std::shared_ptr<Backend> make_gist_oracle(std::vector<TraitProfile> trait_db) {
  return std::make_shared<GistOracle>(std::move(trait_db));
}

}  // namespace charmem
