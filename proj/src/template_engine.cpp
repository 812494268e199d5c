#include "inscp/template_engine.hpp"

#include <algorithm>
#include <cassert>

#include "inscp/error.hpp"
#include "inscp/jsonio.hpp"

namespace inscp {

const char* wrap_mode_name(WrapMode mode) {
    return mode == WrapMode::kCp ? "cp" : "inscp";
}

WrapMode parse_wrap_mode(const std::string& name) {
    if (name == "cp") {
        return WrapMode::kCp;
    }
    if (name == "inscp") {
        return WrapMode::kInsCp;
    }
    throw ArgError("unknown wrap mode \"" + name + "\" (expected cp or inscp)");
}

size_t WrappedExample::mask_true_count() const {
    return static_cast<size_t>(std::count(loss_mask.begin(), loss_mask.end(), true));
}

namespace {

// slot content carries the response prefix only when non-empty, matching the
// template's empty user section
std::string slot(const std::string& content, const ChatTemplate& tpl) {
    return content.empty() ? std::string() : tpl.response_prefix + content;
}

std::string scaffold_prefix(const ChatTemplate& tpl) {
    return tpl.bos + tpl.header_open + tpl.role_user + tpl.header_close + slot(tpl.user_slot, tpl) +
           tpl.eot + tpl.header_open + tpl.role_assistant + tpl.header_close;
}

void warn_on_sentinels(const Document& doc, const Vocab& vocab, WrappedExample& ex) {
    for (const std::string& s : vocab.specials()) {
        if (doc.text.find(s) != std::string::npos) {
            ex.warnings.push_back("document " + doc.id + " contains sentinel " + s);
        }
    }
}

}  // namespace

WrappedExample wrap_inscp(const Document& doc, const ChatTemplate& tpl, const Vocab& vocab) {
    if (doc.text.empty()) {
        throw DataError("empty document \"" + doc.id + "\" cannot be wrapped");
    }
    WrappedExample ex;
    ex.doc_id = doc.id;
    ex.mode = WrapMode::kInsCp;

    const std::string scaffold = scaffold_prefix(tpl);
    std::vector<TokenId> scaffold_ids = encode(scaffold, vocab);
    std::vector<TokenId> prefix_ids = encode(tpl.response_prefix, vocab);
    std::vector<TokenId> content_ids = encode(doc.text, vocab);
    TokenId eot_id = vocab.special_id(tpl.eot);

    ex.text = scaffold + tpl.response_prefix + doc.text + tpl.eot;
    ex.tokens = scaffold_ids;
    ex.tokens.insert(ex.tokens.end(), prefix_ids.begin(), prefix_ids.end());
    ex.content_begin = ex.tokens.size();
    ex.tokens.insert(ex.tokens.end(), content_ids.begin(), content_ids.end());
    ex.content_end = ex.tokens.size();
    ex.tokens.push_back(eot_id);

    ex.loss_mask.assign(ex.tokens.size(), tpl.train_scaffold);
    for (size_t i = scaffold_ids.size(); i < ex.tokens.size(); ++i) {
        ex.loss_mask[i] = true;
    }
    warn_on_sentinels(doc, vocab, ex);
    return ex;
}

WrappedExample wrap_cp(const Document& doc, const Vocab& vocab) {
    if (doc.text.empty()) {
        throw DataError("empty document \"" + doc.id + "\" cannot be wrapped");
    }
    WrappedExample ex;
    ex.doc_id = doc.id;
    ex.mode = WrapMode::kCp;
    ex.text = doc.text;
    ex.tokens = encode(doc.text, vocab);
    ex.loss_mask.assign(ex.tokens.size(), true);
    ex.content_begin = 0;
    ex.content_end = ex.tokens.size();
    warn_on_sentinels(doc, vocab, ex);
    return ex;
}

std::string render_chat_prompt(const std::string& user_text, const ChatTemplate& tpl) {
    return tpl.bos + tpl.header_open + tpl.role_user + tpl.header_close + slot(user_text, tpl) +
           tpl.eot + tpl.header_open + tpl.role_assistant + tpl.header_close + tpl.response_prefix;
}

namespace {

const char* kRequiredKeys[] = {"name",        "bos",       "header_open",    "header_close",
                               "eot",         "role_user", "role_assistant", "response_prefix",
                               "specials"};

}  // namespace

TemplateProfile parse_template_config(const std::string& text) {
    json j = parse_strict(text, "template config");
    if (!j.is_object()) {
        throw ConfigError("template config: expected a JSON object");
    }
    for (const char* key : kRequiredKeys) {
        if (!j.contains(key)) {
            throw ConfigError(std::string("template config: missing key \"") + key + "\"");
        }
    }
    for (const auto& [key, value] : j.items()) {
        (void)value;
        bool known = key == "train_scaffold" || key == "user_slot";
        for (const char* k : kRequiredKeys) {
            known = known || key == k;
        }
        if (!known) {
            throw ConfigError("template config: unknown key \"" + key + "\"");
        }
    }

    ChatTemplate tpl;
    tpl.name = j.at("name").get<std::string>();
    tpl.bos = j.at("bos").get<std::string>();
    tpl.header_open = j.at("header_open").get<std::string>();
    tpl.header_close = j.at("header_close").get<std::string>();
    tpl.eot = j.at("eot").get<std::string>();
    tpl.role_user = j.at("role_user").get<std::string>();
    tpl.role_assistant = j.at("role_assistant").get<std::string>();
    tpl.response_prefix = j.at("response_prefix").get<std::string>();
    if (j.contains("train_scaffold")) {
        tpl.train_scaffold = j.at("train_scaffold").get<bool>();
    }
    if (j.contains("user_slot")) {
        tpl.user_slot = j.at("user_slot").get<std::string>();
    }

    std::vector<std::string> specials = j.at("specials").get<std::vector<std::string>>();
    Vocab vocab(specials);

    for (const std::string* sentinel : {&tpl.bos, &tpl.header_open, &tpl.header_close, &tpl.eot}) {
        if (vocab.special_id(*sentinel) < 0) {
            throw ConfigError("template config: sentinel \"" + *sentinel +
                              "\" is not a registered special");
        }
    }
    return TemplateProfile{tpl, vocab};
}

const std::string& builtin_llama3_profile() {
    static const std::string profile = R"({
  "name": "llama3",
  "bos": "<|begin_of_text|>",
  "header_open": "<|start_header_id|>",
  "header_close": "<|end_header_id|>",
  "eot": "<|eot_id|>",
  "role_user": "user",
  "role_assistant": "assistant",
  "response_prefix": " ",
  "specials": [
    "<|begin_of_text|>",
    "<|end_of_text|>",
    "<|start_header_id|>",
    "<|end_header_id|>",
    "<|eot_id|>",
    "<|eom_id|>",
    "<|python_tag|>",
    "<|pad_id|>"
  ]
})";
    return profile;
}

TemplateProfile load_template_profile(const std::string& path_or_builtin) {
    if (path_or_builtin == "builtin:llama3") {
        return parse_template_config(builtin_llama3_profile());
    }
    return parse_template_config(read_file(path_or_builtin));
}

namespace {

bool is_utf8_continuation(unsigned char c) { return (c & 0xC0) == 0x80; }

// chunk boundaries follow the tokenizer's scan and stay on UTF-8 code point
// boundaries so chunk text remains valid
std::vector<std::string> split_text(const std::string& text, const Vocab& vocab, size_t budget) {
    std::vector<std::string> chunks;
    size_t pos = 0;
    while (pos < text.size()) {
        size_t start = pos;
        size_t used = 0;
        size_t last_safe = pos;
        while (pos < text.size() && used < budget) {
            size_t step = 1;
            for (const std::string& s : vocab.specials()) {
                if (s.size() > step && text.compare(pos, s.size(), s) == 0) {
                    step = s.size();
                }
            }
            pos += step;
            ++used;
            if (pos >= text.size() || !is_utf8_continuation(static_cast<unsigned char>(text[pos]))) {
                last_safe = pos;
            }
        }
        if (pos < text.size() && last_safe > start) {
            pos = last_safe;
        }
        chunks.push_back(text.substr(start, pos - start));
    }
    return chunks;
}

}  // namespace

std::vector<WrappedExample> wrap_documents(const std::vector<Document>& docs, WrapMode mode,
                                           const ChatTemplate& tpl, const Vocab& vocab,
                                           size_t max_tokens) {
    size_t overhead = 0;
    if (mode == WrapMode::kInsCp) {
        overhead = token_count(scaffold_prefix(tpl) + tpl.response_prefix, vocab) + 1;
    }
    if (max_tokens <= overhead + 1) {
        throw ConfigError("context of " + std::to_string(max_tokens) +
                          " tokens leaves no room for document content");
    }
    const size_t budget = max_tokens - overhead;

    std::vector<WrappedExample> out;
    for (const Document& doc : docs) {
        if (doc.text.empty()) {
            throw DataError("empty document \"" + doc.id + "\" cannot be wrapped");
        }
        std::vector<std::string> chunks = split_text(doc.text, vocab, budget);
        for (size_t k = 0; k < chunks.size(); ++k) {
            Document piece{chunks.size() == 1 ? doc.id : doc.id + "#" + std::to_string(k),
                           chunks[k], doc.lang};
            out.push_back(mode == WrapMode::kInsCp ? wrap_inscp(piece, tpl, vocab)
                                                   : wrap_cp(piece, vocab));
        }
    }
    return out;
}

json wrapped_to_json(const WrappedExample& ex) {
    json mask = json::array();
    for (bool b : ex.loss_mask) mask.push_back(b ? 1 : 0);
    return json{{"doc_id", ex.doc_id},
                {"mode", wrap_mode_name(ex.mode)},
                {"tokens", ex.tokens},
                {"loss_mask", mask},
                {"text", ex.text},
                {"content_begin", ex.content_begin},
                {"content_end", ex.content_end}};
}

WrappedExample wrapped_from_json(const json& j) {
    WrappedExample ex;
    try {
        ex.doc_id = j.at("doc_id").get<std::string>();
        ex.mode = parse_wrap_mode(j.at("mode").get<std::string>());
        ex.tokens = j.at("tokens").get<std::vector<TokenId>>();
        for (const json& b : j.at("loss_mask")) ex.loss_mask.push_back(b.get<int>() != 0);
        ex.text = j.at("text").get<std::string>();
        ex.content_begin = j.at("content_begin").get<size_t>();
        ex.content_end = j.at("content_end").get<size_t>();
    } catch (const json::exception& e) {
        throw DataError(std::string("wrapped example: ") + e.what());
    }
    if (ex.tokens.size() != ex.loss_mask.size())
        throw DataError("wrapped example '" + ex.doc_id + "': mask length mismatch");
    return ex;
}

std::vector<WrappedExample> read_wrapped(const std::filesystem::path& path) {
    std::vector<WrappedExample> out;
    for_each_jsonl(path, [&](const json& j, size_t) { out.push_back(wrapped_from_json(j)); });
    return out;
}

void write_wrapped(const std::filesystem::path& path, const std::vector<WrappedExample>& examples,
                   const json& meta) {
    std::vector<json> lines;
    lines.reserve(examples.size());
    for (const WrappedExample& ex : examples) lines.push_back(wrapped_to_json(ex));
    write_jsonl(path, lines, meta);
}

}  // namespace inscp
