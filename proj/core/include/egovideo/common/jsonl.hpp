#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <vector>

namespace egovideo::io {

using Json = nlohmann::json;

std::vector<Json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& records);

// Parses JSON allowing // and /* */ comments.
Json read_json_with_comments(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const Json& value);

// 64-bit FNV-1a, stable across platforms and runs.
uint64_t fnv1a64(std::string_view bytes);
std::string hex64(uint64_t value);

}  // namespace egovideo::io
