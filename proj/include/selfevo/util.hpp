#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace selfevo {

using json = nlohmann::json;
namespace fs = std::filesystem;

// ---- text -------------------------------------------------------------------

std::string_view trim(std::string_view s);
std::string to_lower_ascii(std::string_view s);
bool contains_ci(std::string_view haystack, std::string_view needle);

/// Splits UTF-8 into code points. Invalid bytes become single-byte units.
std::vector<std::string_view> utf8_code_points(std::string_view s);
std::size_t utf8_length(std::string_view s);

/// Keeps at most `max_chars` code points. Returns true when text was cut.
bool truncate_utf8(std::string& s, std::size_t max_chars);

std::vector<std::string_view> split_whitespace(std::string_view s);

/// Replaces `{Name}` placeholders in a single left-to-right pass; substituted
/// values are never rescanned.
std::string render_placeholders(std::string_view tmpl,
                                const std::vector<std::pair<std::string, std::string>>& values);

/// 64-bit FNV-1a, used for deterministic mock behaviour only.
std::uint64_t fnv1a64(std::string_view s, std::uint64_t seed = 0xcbf29ce484222325ULL);

// ---- files ------------------------------------------------------------------

std::string read_file(const fs::path& path);
/// Writes via a temporary sibling and rename so readers never see a torn file.
void write_file_atomic(const fs::path& path, std::string_view content);

/// Calls `fn(record, line_no)` for every non-blank line. Malformed JSON and
/// non-object lines raise SchemaError with the line number.
void for_each_jsonl(const fs::path& path, const std::function<void(const json&, std::size_t)>& fn);

std::string to_jsonl(const std::vector<json>& records);

std::string sha256_hex(std::string_view data);
std::string sha256_file(const fs::path& path);

std::string utc_timestamp();

// ---- json field access ------------------------------------------------------

/// Required non-null string field; SchemaError naming the field otherwise.
std::string require_string(const json& obj, const char* field, std::size_t line = 0);

// ---- logging ----------------------------------------------------------------

enum class LogLevel { debug, info, warn, error, quiet };

void set_log_level(LogLevel level);
LogLevel log_level();
void log_line(LogLevel level, std::string_view message);
inline void log_info(std::string_view m) { log_line(LogLevel::info, m); }
inline void log_warn(std::string_view m) { log_line(LogLevel::warn, m); }
inline void log_debug(std::string_view m) { log_line(LogLevel::debug, m); }

}  // namespace selfevo
