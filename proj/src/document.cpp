#include "inscp/document.hpp"

#include <set>

#include "inscp/error.hpp"
#include "inscp/jsonio.hpp"

namespace inscp {

std::vector<Document> read_documents(const std::filesystem::path& path) {
    std::vector<Document> docs;
    for_each_jsonl(path, [&](const json& j, size_t lineno) {
        if (!j.is_object() || !j.contains("id") || !j.contains("text")) {
            throw DataError(path.string() + ":" + std::to_string(lineno) +
                            ": expected {id, text} object");
        }
        Document d;
        d.id = j.at("id").get<std::string>();
        d.text = j.at("text").get<std::string>();
        if (j.contains("lang") && !j.at("lang").is_null()) {
            d.lang = j.at("lang").get<std::string>();
        }
        docs.push_back(std::move(d));
    });
    return docs;
}

void write_documents(const std::filesystem::path& path, const std::vector<Document>& docs,
                     const json& meta) {
    std::vector<json> records;
    records.reserve(docs.size());
    for (const Document& d : docs) {
        json j{{"id", d.id}, {"text", d.text}};
        if (d.lang) {
            j["lang"] = *d.lang;
        }
        records.push_back(std::move(j));
    }
    write_jsonl(path, records, meta);
}

std::vector<Document> ingest(const std::filesystem::path& path, bool qa_split) {
    std::vector<Document> docs;
    std::set<std::string> seen;
    auto add = [&](Document d, size_t lineno) {
        if (!seen.insert(d.id).second) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": duplicate id \"" +
                            d.id + "\"");
        }
        docs.push_back(std::move(d));
    };
    for_each_jsonl(path, [&](const json& j, size_t lineno) {
        std::string where = path.string() + ":" + std::to_string(lineno);
        if (!j.is_object() || !j.contains("id")) {
            throw DataError(where + ": record has no id");
        }
        std::string id = j.at("id").get<std::string>();
        std::optional<std::string> lang;
        if (j.contains("lang") && !j.at("lang").is_null()) {
            lang = j.at("lang").get<std::string>();
        }
        if (j.contains("question") || j.contains("answer")) {
            if (!j.contains("question") || !j.contains("answer")) {
                throw DataError(where + ": question/answer record needs both fields");
            }
            std::string q = j.at("question").get<std::string>();
            std::string a = j.at("answer").get<std::string>();
            if (qa_split) {
                add({id + "#q", q, lang}, lineno);
                add({id + "#a", a, lang}, lineno);
            } else {
                add({id, q + "\n" + a, lang}, lineno);
            }
        } else if (j.contains("text")) {
            add({id, j.at("text").get<std::string>(), lang}, lineno);
        } else {
            throw DataError(where + ": record has neither text nor question/answer");
        }
    });
    return docs;
}

}  // namespace inscp
