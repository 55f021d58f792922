#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "masa/errors.hpp"

// Little-endian binary file helpers shared by the trial, feature and weight
// formats.
namespace masa::binio {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big,
              "mixed-endian platforms are not supported");

template <typename T>
T byteswap_if_needed(T v) {
    if constexpr (std::endian::native == std::endian::little) {
        return v;
    } else {
        T out;
        auto* src = reinterpret_cast<const unsigned char*>(&v);
        auto* dst = reinterpret_cast<unsigned char*>(&out);
        for (std::size_t i = 0; i < sizeof(T); ++i) dst[i] = src[sizeof(T) - 1 - i];
        return out;
    }
}

template <typename T>
void write_scalar(std::ostream& os, T v) {
    v = byteswap_if_needed(v);
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_scalar(std::istream& is, const std::string& what) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw IngestionError("truncated file while reading " + what);
    return byteswap_if_needed(v);
}

template <typename T>
void write_array(std::ostream& os, const T* data, std::size_t n) {
    if constexpr (std::endian::native == std::endian::little) {
        os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
    } else {
        for (std::size_t i = 0; i < n; ++i) write_scalar(os, data[i]);
    }
}

template <typename T>
void read_array(std::istream& is, T* data, std::size_t n, const std::string& what) {
    is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
    if (!is) throw IngestionError("truncated file while reading " + what);
    if constexpr (std::endian::native == std::endian::big) {
        for (std::size_t i = 0; i < n; ++i) data[i] = byteswap_if_needed(data[i]);
    }
}

inline void write_magic(std::ostream& os, const char (&magic)[9]) { os.write(magic, 8); }

inline void expect_magic(std::istream& is, const char (&magic)[9], const std::string& what) {
    char got[8];
    is.read(got, 8);
    if (!is || std::memcmp(got, magic, 8) != 0)
        throw IngestionError(what + ": bad magic bytes");
}

// FNV-1a, used for payload checksums and run-manifest input hashes.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t file_hash(const std::string& path);

}  // namespace masa::binio
