#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

#include "omni/core/error.hpp"

namespace omni {

// Explicit little-endian packing for the on-disk formats. Values are byte
// packed rather than memcpy'd from structs so the layouts are unambiguous.

class ByteWriter {
 public:
  void u8(uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<uint8_t>(v >> (8 * i)));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<uint8_t>(v >> (8 * i)));
  }
  void i64(int64_t v) { u64(static_cast<uint64_t>(v)); }
  void f32(float v) { u32(std::bit_cast<uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<uint64_t>(v)); }
  void raw(const void* p, size_t n) {
    buf_.append(static_cast<const char*>(p), n);
  }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  const std::string& buffer() const { return buf_; }
  size_t size() const { return buf_.size(); }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  uint8_t u8() {
    need(1);
    return static_cast<uint8_t>(data_[off_++]);
  }
  uint32_t u32() {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(u8()) << (8 * i);
    return v;
  }
  uint64_t u64() {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(u8()) << (8 * i);
    return v;
  }
  int64_t i64() { return static_cast<int64_t>(u64()); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    uint32_t n = u32();
    need(n);
    std::string s(data_.substr(off_, n));
    off_ += n;
    return s;
  }
  void raw(void* dst, size_t n) {
    need(n);
    std::memcpy(dst, data_.data() + off_, n);
    off_ += n;
  }
  size_t offset() const { return off_; }
  size_t remaining() const { return data_.size() - off_; }

 private:
  void need(size_t n) const {
    if (off_ + n > data_.size())
      throw FormatError(FormatError::Kind::Truncated,
                        "file truncated: wanted " + std::to_string(n) +
                            " bytes at offset " + std::to_string(off_) +
                            " of " + std::to_string(data_.size()));
  }
  std::string_view data_;
  size_t off_ = 0;
};

// Whole-file helpers. Writes go to "<path>.tmp" then rename, so a crash never
// leaves a half-written file under the real name.
void write_file_atomic(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);  // PreconditionError if absent

}  // namespace omni
