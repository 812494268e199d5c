#include "inscp/jsonio.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "inscp/error.hpp"

namespace inscp {

namespace {

// SAX walk that only tracks object keys, per nesting level.
struct DuplicateKeyCheck : json::json_sax_t {
    std::vector<std::set<std::string>> scopes;
    std::string duplicate;
    std::string error;

    bool null() override { return true; }
    bool boolean(bool) override { return true; }
    bool number_integer(number_integer_t) override { return true; }
    bool number_unsigned(number_unsigned_t) override { return true; }
    bool number_float(number_float_t, const string_t&) override { return true; }
    bool string(string_t&) override { return true; }
    bool binary(binary_t&) override { return true; }
    bool start_object(std::size_t) override {
        scopes.emplace_back();
        return true;
    }
    bool key(string_t& k) override {
        if (!scopes.back().insert(k).second) {
            duplicate = k;
            return false;
        }
        return true;
    }
    bool end_object() override {
        scopes.pop_back();
        return true;
    }
    bool start_array(std::size_t) override { return true; }
    bool end_array() override { return true; }
    bool parse_error(std::size_t, const std::string&, const nlohmann::detail::exception& ex) override {
        error = ex.what();
        return false;
    }
};

}  // namespace

json parse_strict(const std::string& text, const std::string& what) {
    DuplicateKeyCheck check;
    if (!json::sax_parse(text, &check)) {
        if (!check.duplicate.empty()) {
            throw ConfigError(what + ": duplicate key \"" + check.duplicate + "\"");
        }
        throw ConfigError(what + ": " + check.error);
    }
    return json::parse(text);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw RuntimeError("cannot write " + tmp.string());
        }
        out << content;
        if (!out) {
            throw RuntimeError("write failed: " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

std::string dump_line(const json& j) {
    // invalid UTF-8 in model output must not kill serialization
    return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

static bool is_meta_line(const json& j) {
    return j.is_object() && j.size() == 1 && j.contains("meta");
}

void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(const json&, size_t)>& visit) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": malformed JSON line");
        }
        if (is_meta_line(j)) {
            continue;
        }
        visit(j, lineno);
    }
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
    std::vector<json> out;
    for_each_jsonl(path, [&](const json& j, size_t) { out.push_back(j); });
    return out;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records,
                 const json& meta) {
    std::ostringstream ss;
    if (!meta.is_null()) {
        ss << dump_line(json{{"meta", meta}}) << "\n";
    }
    for (const json& r : records) {
        ss << dump_line(r) << "\n";
    }
    write_file_atomic(path, ss.str());
}

}  // namespace inscp
