#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sidrec/errors.hpp"

namespace sidrec {

// Fixed-length sequence of level-indexed code indices identifying one item.
// codes[l] is in [0, K) for level l in [0, L). The flat token id of code c
// at level l is l*K + c, which is bijective over the code vocabulary.
struct SemanticId {
    std::vector<int> codes;

    SemanticId() = default;
    explicit SemanticId(std::vector<int> c) : codes(std::move(c)) {}

    int level_count() const { return static_cast<int>(codes.size()); }

    bool operator==(const SemanticId&) const = default;
    auto operator<=>(const SemanticId&) const = default;
};

struct SemanticIdHash {
    std::size_t operator()(const SemanticId& sid) const {
        std::size_t h = 0xcbf29ce484222325ull;
        for (int c : sid.codes) {
            h ^= static_cast<std::size_t>(c) + 0x9e3779b97f4a7c15ull;
            h *= 0x100000001b3ull;
        }
        return h;
    }
};

// Token id layout for a catalog with L levels of K codes: code tokens occupy
// [0, L*K), followed by the special tokens below. The two confidence tokens
// are never produced by SID generation; they exist for the confidence head.
struct Vocab {
    int levels = 4;
    int codebook_size = 16;

    int code_token(int level, int code) const { return level * codebook_size + code; }
    int bos() const { return levels * codebook_size; }
    int sep() const { return levels * codebook_size + 1; }
    int query() const { return levels * codebook_size + 2; }
    int c_high() const { return levels * codebook_size + 3; }
    int c_low() const { return levels * codebook_size + 4; }
    int size() const { return levels * codebook_size + 5; }
};

enum class NegativeClass {
    Partial,  // shares a non-empty prefix with the ground truth
    Wrong,    // mismatches the ground truth at the root level
};

inline int shared_prefix_len(const SemanticId& a, const SemanticId& b) {
    const int n = std::min(a.level_count(), b.level_count());
    int len = 0;
    while (len < n && a.codes[len] == b.codes[len]) ++len;
    return len;
}

inline NegativeClass classify_negative(const SemanticId& y, const SemanticId& y_star) {
    if (y == y_star) throw NotANegative("classify_negative: y equals the ground truth");
    return shared_prefix_len(y, y_star) > 0 ? NegativeClass::Partial : NegativeClass::Wrong;
}

// Text rendering: one bracketed token per level, levels lettered a, b, c, ...
// e.g. codes (147, 0, 248, 36) -> "<a_147><b_0><c_248><d_36>".
inline std::string render_sid(const SemanticId& sid) {
    std::string out;
    for (int l = 0; l < sid.level_count(); ++l) {
        out += '<';
        out += static_cast<char>('a' + l);
        out += '_';
        out += std::to_string(sid.codes[l]);
        out += '>';
    }
    return out;
}

}  // namespace sidrec
