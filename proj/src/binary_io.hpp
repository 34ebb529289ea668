#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include <zlib.h>

#include "wordspot/errors.hpp"

namespace wordspot::detail {

/// Little-endian writer for the checkpoint and index formats.
class ByteWriter {
 public:
  void bytes(std::span<const std::uint8_t> data) { out_.insert(out_.end(), data.begin(), data.end()); }
  void raw(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s);
  }
  /// Appends the CRC32 of everything written so far.
  void crc_trailer() {
    u32(static_cast<std::uint32_t>(::crc32(0L, out_.data(), static_cast<uInt>(out_.size()))));
  }

  std::vector<std::uint8_t>& data() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> data, ErrorCode on_error)
      : data_(data), error_(on_error) {}

  std::span<const std::uint8_t> take(std::size_t n) {
    if (data_.size() - pos_ < n) throw Error(error_, "unexpected end of file");
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32() {
    auto s = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(s[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    auto s = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(s[i]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const auto n = u32();
    auto s = take(n);
    return {s.begin(), s.end()};
  }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
  ErrorCode error_;
};

/// Checks and strips a CRC32 trailer; throws `on_error` on mismatch.
inline std::span<const std::uint8_t> verify_crc_trailer(std::span<const std::uint8_t> bytes,
                                                        ErrorCode on_error) {
  if (bytes.size() < 4) throw Error(on_error, "file too short for checksum");
  const auto body = bytes.first(bytes.size() - 4);
  ByteReader tail(bytes.last(4), on_error);
  const auto stored = tail.u32();
  const auto actual =
      static_cast<std::uint32_t>(::crc32(0L, body.data(), static_cast<uInt>(body.size())));
  if (stored != actual) throw Error(on_error, "checksum mismatch");
  return body;
}

}  // namespace wordspot::detail
