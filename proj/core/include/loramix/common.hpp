#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace loramix {

using TokenSeq = std::vector<int>;

/// FNV-1a over a byte string, used for config hashing and seed derivation.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t state = 0xcbf29ce484222325ull) {
    for (unsigned char c : bytes) {
        state ^= c;
        state *= 0x100000001b3ull;
    }
    return state;
}

/// Derives a stream-specific seed from a base seed and a purpose tag.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) {
    std::uint64_t h = fnv1a64(tag);
    for (int i = 0; i < 8; ++i) {
        h ^= (base >> (8 * i)) & 0xff;
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace loramix
