#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace pad {

// FNV-1a over raw bytes; used for parameter checksums and config hashes.
uint64_t fnv1a64(const void* data, size_t len, uint64_t seed = 0xcbf29ce484222325ULL);

inline uint64_t fnv1a64(const std::vector<double>& v) {
  return fnv1a64(v.data(), v.size() * sizeof(double));
}

std::string hex64(uint64_t x);

// CRC-32 (zlib polynomial) of a byte buffer.
uint32_t crc32_bytes(const void* data, size_t len);

}  // namespace pad
