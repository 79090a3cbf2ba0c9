#include "charmem/text.hpp"

#include <algorithm>
#include <cctype>

#include "charmem/errors.hpp"

namespace charmem {

IncompleteDescriptionsError::IncompleteDescriptionsError(std::vector<std::string> missing)
    : Error("description set incomplete; missing: " + text::join(missing, ", ")),
      missing_(std::move(missing)) {}

namespace text {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

}  // namespace

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

std::string rtrim(std::string_view s) {
  std::size_t e = s.size();
  while (e > 0 && is_space(s[e - 1])) --e;
  return std::string(s.substr(0, e));
}

std::string to_lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = lower(c);
  return out;
}

std::string to_upper_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

bool iequals_ascii(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (lower(a[i]) != lower(b[i])) return false;
  }
  return true;
}

bool starts_with_ascii_ci(std::string_view s, std::string_view prefix) {
  return s.size() >= prefix.size() && iequals_ascii(s.substr(0, prefix.size()), prefix);
}

std::vector<std::string> split_lines(std::string_view s) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < s.size()) {
    std::size_t nl = s.find('\n', start);
    std::size_t end = nl == std::string_view::npos ? s.size() : nl;
    std::string_view line = s.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.emplace_back(line);
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  return lines;
}

std::vector<std::string> split_whitespace(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    std::size_t j = i;
    while (j < s.size() && !is_space(s[j])) ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

char32_t decode_utf8(std::string_view s, std::size_t pos, std::size_t& len) {
  const auto byte = [&](std::size_t i) { return static_cast<unsigned char>(s[i]); };
  unsigned char c = byte(pos);
  len = 1;
  if (c < 0x80) return c;
  std::size_t need = 0;
  char32_t cp = 0;
  if ((c & 0xE0) == 0xC0) {
    need = 1;
    cp = c & 0x1F;
  } else if ((c & 0xF0) == 0xE0) {
    need = 2;
    cp = c & 0x0F;
  } else if ((c & 0xF8) == 0xF0) {
    need = 3;
    cp = c & 0x07;
  } else {
    return 0xFFFD;
  }
  if (pos + need >= s.size()) return 0xFFFD;
  for (std::size_t k = 1; k <= need; ++k) {
    unsigned char cc = byte(pos + k);
    if ((cc & 0xC0) != 0x80) return 0xFFFD;
    cp = (cp << 6) | (cc & 0x3F);
  }
  // Overlong forms and surrogates are malformed.
  if ((need == 1 && cp < 0x80) || (need == 2 && cp < 0x800) || (need == 3 && cp < 0x10000) ||
      cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
    return 0xFFFD;
  }
  len = need + 1;
  return cp;
}

std::size_t previous_code_point(std::string_view s, std::size_t pos) {
  if (pos == 0) return 0;
  std::size_t start = pos - 1;
  std::size_t steps = 0;
  while (start > 0 && steps < 3 && (static_cast<unsigned char>(s[start]) & 0xC0) == 0x80) {
    --start;
    ++steps;
  }
  std::size_t len = 0;
  decode_utf8(s, start, len);
  if (start + len == pos) return start;
  return pos - 1;
}

bool is_word_code_point(char32_t cp) {
  if (cp < 0x80) {
    return std::isalnum(static_cast<int>(cp)) != 0 || cp == U'_';
  }
  if (cp == 0xFFFD) return false;
  if (cp >= 0x80 && cp <= 0xBF) return false;        // Latin-1 controls, NBSP, symbols
  if (cp == 0xD7 || cp == 0xF7) return false;         // multiplication, division
  if (cp >= 0x2000 && cp <= 0x206F) return false;     // general punctuation
  if (cp >= 0x2E00 && cp <= 0x2E7F) return false;     // supplemental punctuation
  if (cp >= 0x3000 && cp <= 0x303F) return false;     // CJK punctuation
  if (cp >= 0xFF00 && cp <= 0xFF0F) return false;     // fullwidth punctuation
  if (cp == 0xFEFF) return false;
  return true;
}

bool is_word_boundary_before(std::string_view s, std::size_t pos) {
  if (pos == 0) return true;
  std::size_t start = previous_code_point(s, pos);
  std::size_t len = 0;
  return !is_word_code_point(decode_utf8(s, start, len));
}

bool is_word_boundary_after(std::string_view s, std::size_t pos) {
  if (pos >= s.size()) return true;
  std::size_t len = 0;
  return !is_word_code_point(decode_utf8(s, pos, len));
}

std::size_t find_word(std::string_view haystack, std::string_view needle, std::size_t from) {
  if (needle.empty() || needle.size() > haystack.size()) return std::string_view::npos;
  for (std::size_t i = from; i + needle.size() <= haystack.size(); ++i) {
    if (lower(haystack[i]) != lower(needle[0])) continue;
    if (!iequals_ascii(haystack.substr(i, needle.size()), needle)) continue;
    if (is_word_boundary_before(haystack, i) && is_word_boundary_after(haystack, i + needle.size())) {
      return i;
    }
  }
  return std::string_view::npos;
}

bool contains_word(std::string_view haystack, std::string_view needle) {
  return find_word(haystack, needle) != std::string_view::npos;
}

bool is_all_caps(std::string_view s) {
  bool any_letter = false;
  for (char c : s) {
    auto u = static_cast<unsigned char>(c);
    if (std::islower(u)) return false;
    if (std::isupper(u)) any_letter = true;
  }
  return any_letter;
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  if (from.empty()) return s;
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

std::size_t count_occurrences(std::string_view s, std::string_view needle) {
  if (needle.empty()) return 0;
  std::size_t n = 0;
  for (std::size_t pos = s.find(needle); pos != std::string_view::npos; pos = s.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

}  // namespace text
}  // namespace charmem
