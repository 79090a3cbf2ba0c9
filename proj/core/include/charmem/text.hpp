#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

// Byte-level helpers shared by the parsers, the perturbation engine and the
// metrics. Strings are UTF-8; case folding is ASCII-only.
namespace charmem::text {

std::string trim(std::string_view s);
std::string rtrim(std::string_view s);
std::string to_lower_ascii(std::string_view s);
bool iequals_ascii(std::string_view a, std::string_view b);

// Splits on '\n', dropping one trailing '\r' per line. A trailing newline
// does not produce an extra empty line.
std::vector<std::string> split_lines(std::string_view s);

std::vector<std::string> split_whitespace(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

bool starts_with_ascii_ci(std::string_view s, std::string_view prefix);

// Decodes the code point starting at pos. On malformed input returns
// U+FFFD and sets len to 1.
char32_t decode_utf8(std::string_view s, std::size_t pos, std::size_t& len);

// Start of the code point that ends right before pos.
std::size_t previous_code_point(std::string_view s, std::size_t pos);

// Word characters: ASCII alphanumerics, '_', and non-ASCII code points that
// are not punctuation or spacing.
bool is_word_code_point(char32_t cp);

bool is_word_boundary_before(std::string_view s, std::size_t pos);
bool is_word_boundary_after(std::string_view s, std::size_t pos);

// Case-insensitive (ASCII) search for needle as a whole word, starting at from.
std::size_t find_word(std::string_view haystack, std::string_view needle, std::size_t from = 0);

bool contains_word(std::string_view haystack, std::string_view needle);

// True if s has at least one ASCII letter and no ASCII lowercase letters.
bool is_all_caps(std::string_view s);
std::string to_upper_ascii(std::string_view s);

// Replaces every "{key}" occurrence.
std::string replace_all(std::string s, std::string_view from, std::string_view to);

std::size_t count_occurrences(std::string_view s, std::string_view needle);

}  // namespace charmem::text
