#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "ecgi/errors.hpp"

namespace ecgi {

// Append-only little-endian byte sink.
class ByteWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
  }
  void raw(const void* p, size_t n) {
    const char* c = static_cast<const char*>(p);
    bytes_.insert(bytes_.end(), c, c + n);
  }
  void str(const std::string& s) { raw(s.data(), s.size()); }
  const std::string& bytes() const { return bytes_; }

 private:
  std::string bytes_;
};

// Bounds-checked little-endian reader over an in-memory buffer.
class ByteReader {
 public:
  explicit ByteReader(const std::string& bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    double v;
    std::memcpy(&v, &u, 8);
    return v;
  }
  std::string str(size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void f64_block(double* dst, size_t count) {
    for (size_t i = 0; i < count; ++i) dst[i] = f64();
  }
  bool exhausted() const { return pos_ == bytes_.size(); }
  size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(size_t n) {
    if (pos_ + n > bytes_.size()) {
      throw FormatError("truncated file: need " + std::to_string(n) + " bytes at offset " +
                        std::to_string(pos_) + ", have " + std::to_string(bytes_.size() - pos_));
    }
  }
  const std::string& bytes_;
  size_t pos_ = 0;
};

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

std::uint64_t fnv1a64(const std::string& bytes);
std::string hex64(std::uint64_t v);

}  // namespace ecgi
