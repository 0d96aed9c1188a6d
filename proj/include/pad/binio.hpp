#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "pad/error.hpp"

namespace pad {

// Little-endian byte buffer for the fixed binary formats.
class ByteWriter {
 public:
  void u8(uint8_t x) { buf_.push_back(x); }
  void u16(uint16_t x) { append(&x, sizeof(x)); }
  void u32(uint32_t x) { append(&x, sizeof(x)); }
  void u64(uint64_t x) { append(&x, sizeof(x)); }
  void f32(float x) { append(&x, sizeof(x)); }
  void bytes(const void* p, size_t n) { append(p, n); }
  const std::vector<uint8_t>& data() const { return buf_; }

 private:
  void append(const void* p, size_t n) {
    size_t off = buf_.size();
    buf_.resize(off + n);
    std::memcpy(buf_.data() + off, p, n);
  }
  std::vector<uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(const uint8_t* p, size_t n) : p_(p), n_(n) {}
  uint8_t u8() { return take<uint8_t>(); }
  uint16_t u16() { return take<uint16_t>(); }
  uint32_t u32() { return take<uint32_t>(); }
  uint64_t u64() { return take<uint64_t>(); }
  float f32() { return take<float>(); }
  size_t offset() const { return off_; }
  size_t remaining() const { return n_ - off_; }

 private:
  template <typename T>
  T take() {
    if (off_ + sizeof(T) > n_) raise(Err::FormatError, "truncated file");
    T x;
    std::memcpy(&x, p_ + off_, sizeof(T));
    off_ += sizeof(T);
    return x;
  }
  const uint8_t* p_;
  size_t n_;
  size_t off_ = 0;
};

std::vector<uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<uint8_t>& bytes);

}  // namespace pad
