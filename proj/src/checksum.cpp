#include "pad/checksum.hpp"

#include <zlib.h>

#include <cstdio>

namespace pad {

uint64_t fnv1a64(const void* data, size_t len, uint64_t seed) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  uint64_t h = seed;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(uint64_t x) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(x));
  return std::string(buf);
}

uint32_t crc32_bytes(const void* data, size_t len) {
  uLong c = ::crc32(0L, Z_NULL, 0);
  c = ::crc32(c, static_cast<const Bytef*>(data), static_cast<uInt>(len));
  return static_cast<uint32_t>(c);
}

}  // namespace pad
