#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace avp {

// 64-bit FNV-1a. Used for stream derivation, registry hashes and artifact
// manifests; not cryptographic.
constexpr std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string to_hex(std::uint64_t value);

// FNV-1a over a file's raw bytes. Throws Error("io", ...) if unreadable.
std::string hash_file(const std::string& path);

inline std::string hash_bytes(std::string_view bytes) { return to_hex(fnv1a64(bytes)); }

} // namespace avp
