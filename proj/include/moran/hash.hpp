#pragma once

#include <cstdint>
#include <string_view>

namespace moran {

// 64-bit FNV-1a; stable across platforms, used for state hashes and checksums.
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace moran
