#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fedid {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;
using Hash256 = std::array<std::uint8_t, 32>;

/// Thrown when a canonical encoding cannot be decoded.
class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string to_hex(ByteView data);

/// Strict lowercase hex; anything else is a DecodeError.
Bytes from_hex(std::string_view hex);

inline ByteView as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

inline Bytes to_bytes(std::string_view s) {
  auto v = as_bytes(s);
  return {v.begin(), v.end()};
}

inline std::string to_string(ByteView b) {
  return {reinterpret_cast<const char*>(b.data()), b.size()};
}

template <std::size_t N>
std::array<std::uint8_t, N> to_array(ByteView b) {
  if (b.size() != N) throw DecodeError("expected " + std::to_string(N) + " bytes");
  std::array<std::uint8_t, N> out{};
  std::copy(b.begin(), b.end(), out.begin());
  return out;
}

/// Constant-time equality for equal-length buffers; unequal lengths compare false.
bool ct_equal(ByteView a, ByteView b);

/// True if `needle` occurs anywhere in `haystack`.
bool contains(ByteView haystack, ByteView needle);

// Big-endian, length-prefixed canonical encoding. Every ledger, envelope and
// message format in the project goes through these two classes.
class Writer {
 public:
  Writer& u8(std::uint8_t v);
  Writer& u16(std::uint16_t v);
  Writer& u32(std::uint32_t v);
  Writer& u64(std::uint64_t v);
  Writer& raw(ByteView data);
  Writer& bytes16(ByteView data);  // u16 length prefix
  Writer& bytes32(ByteView data);  // u32 length prefix
  Writer& str16(std::string_view s) { return bytes16(as_bytes(s)); }

  const Bytes& data() const& { return buf_; }
  Bytes take() && { return std::move(buf_); }

 private:
  Bytes buf_;
};

class Reader {
 public:
  explicit Reader(ByteView data) : data_(data) {}

  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  ByteView raw(std::size_t n);
  template <std::size_t N>
  std::array<std::uint8_t, N> fixed() { return to_array<N>(raw(N)); }
  ByteView bytes16() { return raw(u16()); }
  ByteView bytes32() { return raw(u32()); }
  std::string str16() { return to_string(bytes16()); }

  std::size_t remaining() const { return data_.size() - pos_; }
  bool done() const { return remaining() == 0; }
  /// Throws unless every byte was consumed.
  void expect_done() const;

 private:
  ByteView data_;
  std::size_t pos_ = 0;
};

}  // namespace fedid
