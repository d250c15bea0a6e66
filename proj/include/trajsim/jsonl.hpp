#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace trajsim {

// Insertion-ordered JSON keeps persisted records stable and diff-friendly.
using Json = nlohmann::ordered_json;

namespace jsonl {

std::vector<Json> read(const std::filesystem::path& path);
void write(const std::filesystem::path& path, const std::vector<Json>& records);
void append(const std::filesystem::path& path, const Json& record);

// Compact single-line form with UTF-8 passed through unescaped.
std::string dump_line(const Json& record);

}  // namespace jsonl
}  // namespace trajsim
