#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "inscp/jsonio.hpp"

namespace inscp {

/// One raw corpus item.
struct Document {
    std::string id;
    std::string text;
    std::optional<std::string> lang;
};

/// JSON-lines loader for {id, text, lang?} records.
std::vector<Document> read_documents(const std::filesystem::path& path);

void write_documents(const std::filesystem::path& path, const std::vector<Document>& docs,
                     const json& meta = json());

/// Ingest {id, text} or {id, question, answer} records.  With qa_split, a
/// question/answer record emits two documents (id#q, id#a).  Duplicate ids
/// and malformed lines are errors.
std::vector<Document> ingest(const std::filesystem::path& path, bool qa_split);

}  // namespace inscp
