#pragma once

/**
 * Byte-buffer building and bounds-checked reading. Big-endian accessors
 * serve the wire protocol; little-endian ones serve hashing inputs and
 * engine-state payloads.
 */

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dpc/errors.hpp"

namespace dpc {

class ByteWriter {
 public:
  void u8(uint8_t v) { buf_.push_back(v); }

  void u16be(uint16_t v) {
    buf_.push_back(static_cast<uint8_t>(v >> 8));
    buf_.push_back(static_cast<uint8_t>(v));
  }

  void u32be(uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) buf_.push_back(static_cast<uint8_t>(v >> s));
  }

  void u64be(uint64_t v) {
    for (int s = 56; s >= 0; s -= 8) buf_.push_back(static_cast<uint8_t>(v >> s));
  }

  void u32le(uint32_t v) {
    for (int s = 0; s < 32; s += 8) buf_.push_back(static_cast<uint8_t>(v >> s));
  }

  void u64le(uint64_t v) {
    for (int s = 0; s < 64; s += 8) buf_.push_back(static_cast<uint8_t>(v >> s));
  }

  void bytes(std::span<const uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }

  void str(std::string_view s) {
    buf_.insert(buf_.end(), s.begin(), s.end());
  }

  std::vector<uint8_t> take() { return std::move(buf_); }
  const std::vector<uint8_t>& view() const { return buf_; }
  size_t size() const { return buf_.size(); }

 private:
  std::vector<uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const uint8_t> data) : data_(data) {}

  uint8_t u8() { return take(1)[0]; }

  uint16_t u16be() {
    auto b = take(2);
    return static_cast<uint16_t>(b[0]) << 8 | b[1];
  }

  uint32_t u32be() {
    auto b = take(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = v << 8 | b[i];
    return v;
  }

  uint64_t u64be() {
    auto b = take(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = v << 8 | b[i];
    return v;
  }

  uint32_t u32le() {
    auto b = take(4);
    uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = v << 8 | b[i];
    return v;
  }

  uint64_t u64le() {
    auto b = take(8);
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = v << 8 | b[i];
    return v;
  }

  std::span<const uint8_t> bytes(size_t n) { return take(n); }

  size_t remaining() const { return data_.size() - pos_; }
  bool done() const { return remaining() == 0; }

  /// Throws unless the input was consumed exactly.
  void expect_end(const char* what) const {
    if (!done()) throw DecodeError(std::string(what) + ": trailing bytes");
  }

 private:
  std::span<const uint8_t> take(size_t n) {
    if (remaining() < n) throw DecodeError("truncated input");
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::span<const uint8_t> data_;
  size_t pos_ = 0;
};

}  // namespace dpc
