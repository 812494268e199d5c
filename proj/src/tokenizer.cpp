#include "inscp/tokenizer.hpp"

#include <algorithm>

#include "inscp/error.hpp"
#include "inscp/rng.hpp"

namespace inscp {

Vocab::Vocab(std::vector<std::string> specials) : specials_(std::move(specials)) {
    for (size_t i = 0; i < specials_.size(); ++i) {
        if (specials_[i].empty()) {
            throw ConfigError("special token " + std::to_string(i) + " is empty");
        }
        for (size_t j = 0; j < specials_.size(); ++j) {
            if (i == j) {
                continue;
            }
            if (specials_[j].find(specials_[i]) != std::string::npos) {
                throw ConfigError("special token \"" + specials_[i] +
                                  "\" is a substring of \"" + specials_[j] + "\"");
            }
        }
    }
}

TokenId Vocab::special_id(std::string_view s) const {
    for (size_t i = 0; i < specials_.size(); ++i) {
        if (specials_[i] == s) {
            return static_cast<TokenId>(i);
        }
    }
    return -1;
}

uint64_t Vocab::hash() const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& s : specials_) {
        h = fnv1a64(s, h);
        h = fnv1a64(std::string_view("\x1f", 1), h);
    }
    return h;
}

namespace {

// longest special matching at position pos, or -1
TokenId match_special(std::string_view text, size_t pos, const Vocab& vocab) {
    TokenId best = -1;
    size_t best_len = 0;
    const auto& specials = vocab.specials();
    for (size_t i = 0; i < specials.size(); ++i) {
        const std::string& s = specials[i];
        if (s.size() > best_len && text.compare(pos, s.size(), s) == 0) {
            best = static_cast<TokenId>(i);
            best_len = s.size();
        }
    }
    return best;
}

}  // namespace

std::vector<TokenId> encode(std::string_view text, const Vocab& vocab) {
    std::vector<TokenId> ids;
    ids.reserve(text.size());
    const int offset = vocab.byte_offset();
    size_t pos = 0;
    while (pos < text.size()) {
        TokenId sp = match_special(text, pos, vocab);
        if (sp >= 0) {
            ids.push_back(sp);
            pos += vocab.specials()[sp].size();
        } else {
            ids.push_back(offset + static_cast<unsigned char>(text[pos]));
            ++pos;
        }
    }
    return ids;
}

std::string decode(const std::vector<TokenId>& ids, const Vocab& vocab) {
    std::string out;
    const int offset = vocab.byte_offset();
    for (TokenId id : ids) {
        if (id < 0 || id >= vocab.size()) {
            throw DataError("invalid token id " + std::to_string(id) + " for vocab of size " +
                            std::to_string(vocab.size()));
        }
        if (id < offset) {
            out += vocab.specials()[id];
        } else {
            out += static_cast<char>(id - offset);
        }
    }
    return out;
}

size_t token_count(std::string_view text, const Vocab& vocab) {
    size_t n = 0;
    size_t pos = 0;
    while (pos < text.size()) {
        TokenId sp = match_special(text, pos, vocab);
        pos += sp >= 0 ? vocab.specials()[sp].size() : 1;
        ++n;
    }
    return n;
}

}  // namespace inscp
