#pragma once

#include <string>
#include <string_view>

#include "charmem/corpus.hpp"
#include "json.hpp"

namespace charmem::detail {

using nlohmann::json;

// Throws ConfigError(path, ...) on shape errors.
json parse_json(std::string_view text, const std::string& what);
const json& require(const json& obj, std::string_view key, const std::string& path);
std::string require_string(const json& obj, std::string_view key, const std::string& path);
void check_format_version(const json& obj, const std::string& path);
std::string join_path(const std::string& path, std::string_view key);
std::string index_path(const std::string& path, std::size_t i);

json utterance_to_json(const Utterance& u);
Utterance utterance_from_json(const json& j, const std::string& path);

json payload_to_json(const TaskPayload& payload);
TaskPayload payload_from_json(TaskKind kind, const json& j, const std::string& path);

json options_to_json(const TaskOptions& options);
TaskOptions options_from_json(const json& j, const std::string& path);

json segment_to_json(const Segment& segment);
Segment segment_from_json(const json& j, const std::string& path);

json entry_to_json(const CharacterEntry& entry);
CharacterEntry entry_from_json(const json& j, const std::string& path);

}  // namespace charmem::detail
