#pragma once

#include <string>
#include <vector>

#include "inscp/document.hpp"
#include "inscp/rng.hpp"

namespace inscp {

/// A toy language: a closed word inventory over one byte alphabet, so two
/// languages built from disjoint scripts never share a byte.
struct SynthLanguage {
    std::string code;
    std::vector<std::string> words;
    std::string separator;   // between words
    std::string terminator;  // sentence end
};

/// Lowercase-ASCII word inventory, space-separated, "." sentences.
SynthLanguage make_latin_language(int n_words, Rng& rng, const std::string& code = "lat");

/// CJK-ideograph word inventory (3-byte UTF-8), unspaced, "。" sentences.
SynthLanguage make_cjk_language(int n_words, Rng& rng, const std::string& code = "cjk");

std::string synth_sentence(const SynthLanguage& lang, Rng& rng, int min_words = 3,
                           int max_words = 8);

std::vector<std::string> synth_sentences(const SynthLanguage& lang, Rng& rng, int count,
                                         int min_words = 3, int max_words = 8);

/// Documents of `sentences_per_doc` sentences, ids `<prefix>-0000...`.
std::vector<Document> synth_corpus(const SynthLanguage& lang, Rng& rng, int n_docs,
                                   int sentences_per_doc, const std::string& id_prefix);

}  // namespace inscp
