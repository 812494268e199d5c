#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace inscp {

using TokenId = int32_t;

/// Byte-level vocabulary with a reserved special-token registry.
/// Specials occupy ids 0..k-1, raw bytes follow at k..k+255.
class Vocab {
 public:
    explicit Vocab(std::vector<std::string> specials);

    int byte_offset() const { return static_cast<int>(specials_.size()); }
    int size() const { return byte_offset() + 256; }
    const std::vector<std::string>& specials() const { return specials_; }

    /// Id of a registered special; -1 when not registered.
    TokenId special_id(std::string_view s) const;
    bool is_special(TokenId id) const { return id >= 0 && id < byte_offset(); }

    uint64_t hash() const;

 private:
    std::vector<std::string> specials_;
};

/// Left-to-right scan; registered specials match longest-first, everything
/// else encodes as UTF-8 bytes shifted by the byte offset.  Total: any
/// string encodes.
std::vector<TokenId> encode(std::string_view text, const Vocab& vocab);

/// Inverse of encode.  Throws DataError on out-of-range ids.
std::string decode(const std::vector<TokenId>& ids, const Vocab& vocab);

/// Token count of text under vocab (no allocation of the id vector).
size_t token_count(std::string_view text, const Vocab& vocab);

}  // namespace inscp
