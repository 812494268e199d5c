#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "inscp/document.hpp"
#include "inscp/jsonio.hpp"
#include "inscp/tokenizer.hpp"

namespace inscp {

/// Declarative chat-template profile: the sentinel strings a chat model
/// expects around a conversation turn.
struct ChatTemplate {
    std::string name;
    std::string bos;
    std::string header_open;
    std::string header_close;
    std::string eot;
    std::string role_user;
    std::string role_assistant;
    // inserted between a header and non-empty slot content (llama3: one space)
    std::string response_prefix;
    // when true, scaffold tokens also carry loss (ablation flag)
    bool train_scaffold = false;
    // optional fixed user-slot text for inscp wrapping (default: empty slot)
    std::string user_slot;
};

enum class WrapMode { kCp, kInsCp };

const char* wrap_mode_name(WrapMode mode);
WrapMode parse_wrap_mode(const std::string& name);

/// Token ids plus per-token loss mask for one training example.
struct WrappedExample {
    std::string doc_id;
    WrapMode mode = WrapMode::kCp;
    std::vector<TokenId> tokens;
    std::vector<bool> loss_mask;
    std::string text;  // serialized form the tokens were produced from

    // token index range [content_begin, content_end) of the document text
    // inside tokens; for cp this is the full sequence
    size_t content_begin = 0;
    size_t content_end = 0;

    std::vector<std::string> warnings;

    size_t mask_true_count() const;
};

/// Template profile file: the chat template plus the special-token registry
/// (specials in id order) it is defined against.
struct TemplateProfile {
    ChatTemplate tpl;
    Vocab vocab;
};

/// Chat-template wrapping: document text goes into the assistant-response
/// slot; loss covers response prefix + content + terminating eot, scaffold
/// tokens are context only (unless train_scaffold).
WrappedExample wrap_inscp(const Document& doc, const ChatTemplate& tpl, const Vocab& vocab);

/// Plain next-token wrapping: tokens are the raw document, mask all true.
WrappedExample wrap_cp(const Document& doc, const Vocab& vocab);

/// Generation-ready prefix: user turn plus opened assistant turn.  Appending
/// a response and eot yields a complete serialized turn.
std::string render_chat_prompt(const std::string& user_text, const ChatTemplate& tpl);

/// Parse and validate a template profile (JSON object).  Unknown keys,
/// duplicate keys, missing sentinels and sentinels absent from the specials
/// registry are errors.
TemplateProfile parse_template_config(const std::string& text);

TemplateProfile load_template_profile(const std::string& path_or_builtin);

/// The bundled llama3-style profile.
const std::string& builtin_llama3_profile();

/// Corpus-level wrapping.  Documents whose wrapped form exceeds max_tokens
/// are split at UTF-8 boundaries into maximal chunks (ids get #0, #1, ...).
/// max_tokens counts the example tokens; the scoring bos is not included.
std::vector<WrappedExample> wrap_documents(const std::vector<Document>& docs, WrapMode mode,
                                           const ChatTemplate& tpl, const Vocab& vocab,
                                           size_t max_tokens);

json wrapped_to_json(const WrappedExample& ex);
WrappedExample wrapped_from_json(const json& j);
std::vector<WrappedExample> read_wrapped(const std::filesystem::path& path);
void write_wrapped(const std::filesystem::path& path, const std::vector<WrappedExample>& examples,
                   const json& meta);

}  // namespace inscp
