#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace recipeforge {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

constexpr std::uint64_t fnv1a64(std::string_view text) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value);

std::string_view trim(std::string_view text) noexcept;
std::vector<std::string> split_lines(std::string_view text);
bool starts_with_ci(std::string_view text, std::string_view prefix) noexcept;
std::string to_lower_ascii(std::string_view text);

/// Dedup normalization: optional ASCII lowercasing, optional removal of
/// ASCII punctuation/symbols (bytes >= 0x80 count as characters), then
/// whitespace runs collapsed to one space and the ends trimmed.
std::string normalize_text(std::string_view text, bool lowercase, bool ignore_non_character);

/// Leakage normalization: lowercase, punctuation stripped, whitespace collapsed.
inline std::string normalize_for_match(std::string_view text) {
  return normalize_text(text, true, true);
}

std::vector<std::string_view> split_words(std::string_view normalized);

/// `%.{digits}g` formatting used for persisted numbers.
std::string format_number(double value, int significant_digits = 12);

/// Shortest representation that round-trips; integral values print without
/// a fractional part.
std::string shortest_number(double value);

/// JSON string literal (quotes included). Invalid UTF-8 is replaced by U+FFFD.
std::string json_quote(std::string_view text);

/// Serializes with sorted keys and no whitespace, invalid UTF-8 replaced.
std::string canonical_dump(const Json& value);
/// Pretty form used for persisted documents (sorted keys, 2-space indent).
std::string pretty_dump(const Json& value);

std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary sibling then renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// One JSON value per non-blank line. Throws IoError on unreadable files and
/// ParseError (with line number) on malformed lines.
std::vector<Json> read_jsonl(const std::filesystem::path& path);

}  // namespace recipeforge
