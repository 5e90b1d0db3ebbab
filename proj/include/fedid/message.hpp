#pragma once

// Wire format for actor messages: an insertion-ordered list of named fields.
//
//   u16 count, then per field: str16 name, bytes32 value
//
// Senders put bulky ciphertext last so that a byte index counted from the end
// of the payload lands inside it.

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fedid/bytes.hpp"

namespace fedid::actors {

class MessageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Message {
 public:
  Message& put(std::string name, Bytes value);
  Message& put_text(std::string name, std::string_view text) { return put(std::move(name), to_bytes(text)); }
  Message& put_u64(std::string name, std::uint64_t value);
  Message& put_f64(std::string name, double value);

  bool has(std::string_view name) const;
  /// Throws MessageError if the field is missing or malformed.
  const Bytes& get(std::string_view name) const;
  std::string text(std::string_view name) const { return to_string(get(name)); }
  std::uint64_t u64(std::string_view name) const;
  double f64(std::string_view name) const;

  const std::vector<std::pair<std::string, Bytes>>& fields() const { return fields_; }

  Bytes serialize() const;
  /// Throws DecodeError on structure problems and MessageError on duplicate names.
  static Message parse(ByteView bytes);

 private:
  std::vector<std::pair<std::string, Bytes>> fields_;
};

Bytes encode_strings(const std::vector<std::string>& items);
std::vector<std::string> decode_strings(ByteView bytes);

Bytes encode_blobs(const std::vector<Bytes>& items);
std::vector<Bytes> decode_blobs(ByteView bytes);

/// Keys in ascending order; rejects unsorted or duplicate keys on decode.
Bytes encode_string_map(const std::map<std::string, std::string>& items);
std::map<std::string, std::string> decode_string_map(ByteView bytes);

}  // namespace fedid::actors
