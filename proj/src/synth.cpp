#include "inscp/synth.hpp"

#include <cstdio>
#include <functional>
#include <set>

#include "inscp/error.hpp"

namespace inscp {

namespace {

std::vector<std::string> unique_words(int n_words, Rng& rng,
                                      const std::function<std::string()>& make) {
    std::set<std::string> seen;
    std::vector<std::string> words;
    int guard = 0;
    while (static_cast<int>(words.size()) < n_words) {
        if (++guard > n_words * 1000) throw RuntimeError("synth: word inventory too constrained");
        std::string w = make();
        if (seen.insert(w).second) words.push_back(std::move(w));
    }
    return words;
}

}  // namespace

SynthLanguage make_latin_language(int n_words, Rng& rng, const std::string& code) {
    if (n_words < 1) throw ArgError("synth: n_words must be >= 1");
    SynthLanguage lang;
    lang.code = code;
    lang.separator = " ";
    lang.terminator = ".";
    lang.words = unique_words(n_words, rng, [&] {
        const size_t len = 3 + rng.below(5);
        std::string w;
        for (size_t i = 0; i < len; ++i) w += static_cast<char>('a' + rng.below(26));
        return w;
    });
    return lang;
}

SynthLanguage make_cjk_language(int n_words, Rng& rng, const std::string& code) {
    if (n_words < 1) throw ArgError("synth: n_words must be >= 1");
    SynthLanguage lang;
    lang.code = code;
    lang.separator = "";
    lang.terminator = "\xE3\x80\x82";  // 。
    lang.words = unique_words(n_words, rng, [&] {
        const size_t len = 1 + rng.below(3);
        std::string w;
        for (size_t i = 0; i < len; ++i) {
            const uint32_t cp = 0x4E00 + static_cast<uint32_t>(rng.below(0x2000));
            w += static_cast<char>(0xE0 | (cp >> 12));
            w += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
            w += static_cast<char>(0x80 | (cp & 0x3F));
        }
        return w;
    });
    return lang;
}

std::string synth_sentence(const SynthLanguage& lang, Rng& rng, int min_words, int max_words) {
    if (lang.words.empty()) throw ArgError("synth: language has no words");
    if (min_words < 1 || min_words > max_words) throw ArgError("synth: bad word-count range");
    const size_t n =
        static_cast<size_t>(min_words) + rng.below(static_cast<uint64_t>(max_words - min_words + 1));
    std::string s;
    for (size_t i = 0; i < n; ++i) {
        if (i > 0) s += lang.separator;
        s += lang.words[rng.below(lang.words.size())];
    }
    return s + lang.terminator;
}

std::vector<std::string> synth_sentences(const SynthLanguage& lang, Rng& rng, int count,
                                         int min_words, int max_words) {
    std::vector<std::string> out;
    out.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) out.push_back(synth_sentence(lang, rng, min_words, max_words));
    return out;
}

std::vector<Document> synth_corpus(const SynthLanguage& lang, Rng& rng, int n_docs,
                                   int sentences_per_doc, const std::string& id_prefix) {
    std::vector<Document> docs;
    docs.reserve(static_cast<size_t>(n_docs));
    for (int i = 0; i < n_docs; ++i) {
        std::string text;
        for (int s = 0; s < sentences_per_doc; ++s) text += synth_sentence(lang, rng);
        char id[32];
        std::snprintf(id, sizeof id, "%s-%04d", id_prefix.c_str(), i);
        docs.push_back(Document{id, std::move(text), lang.code});
    }
    return docs;
}

}  // namespace inscp
