#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace trajsim::text {

// Number of Unicode code points in a UTF-8 string. Continuation bytes are not
// counted, so malformed input degrades gracefully instead of throwing.
std::size_t codepoint_count(std::string_view utf8);

// Decodes the code point starting at `pos` and advances `pos` past it.
char32_t next_codepoint(std::string_view utf8, std::size_t& pos);

std::string encode_codepoint(char32_t cp);

std::string_view trim(std::string_view s);

bool starts_with(std::string_view s, std::string_view prefix);
bool ends_with(std::string_view s, std::string_view suffix);

// Splits on any of the given (possibly multi-byte) separators; empty pieces kept.
std::vector<std::string> split_any(std::string_view s,
                                   const std::vector<std::string_view>& seps);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

std::string to_lower_ascii(std::string_view s);

// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

// UTC wall clock as 2026-01-31T12:00:00Z.
std::string iso_utc_now();

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

}  // namespace trajsim::text
