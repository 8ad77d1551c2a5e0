#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace guide::io {

namespace fs = std::filesystem;

std::string read_file(const fs::path& path);
// Writes to a sibling temp file and renames over the target, so readers never
// observe a partially written artifact.
void write_file_atomic(const fs::path& path, std::string_view contents);

nlohmann::json read_json(const fs::path& path);
void write_json_atomic(const fs::path& path, const nlohmann::json& value);

std::vector<nlohmann::json> read_jsonl(const fs::path& path);
std::string to_jsonl(const std::vector<nlohmann::json>& records);

std::string sha256_hex(std::string_view data);
std::string base64_encode(std::string_view data);

}  // namespace guide::io
