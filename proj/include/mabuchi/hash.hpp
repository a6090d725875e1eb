#pragma once

#include <cstdint>
#include <cstdio>
#include <string>

namespace mabuchi {

/// 64-bit FNV-1a digest as 16 lowercase hex digits.
inline std::string fnv1a_hex(const std::string& text) {
    std::uint64_t hash = 14695981039346656037ULL;
    for (unsigned char ch : text) {
        hash ^= ch;
        hash *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

}  // namespace mabuchi
