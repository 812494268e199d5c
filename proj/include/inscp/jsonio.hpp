#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

namespace inscp {

using json = nlohmann::json;

// Parse that rejects syntax errors and duplicate object keys.
json parse_strict(const std::string& text, const std::string& what);

std::string read_file(const std::filesystem::path& path);

// Write via temp file + rename so partially written artifacts never look
// complete to the resume logic.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

// JSON-lines.  A line whose object has the single key "meta" is artifact
// metadata, not a record; readers skip it, writers put it first.
std::vector<json> read_jsonl(const std::filesystem::path& path);

// visit(record, 1-based line number)
void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(const json&, size_t)>& visit);

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records,
                 const json& meta = json());

std::string dump_line(const json& j);

}  // namespace inscp
