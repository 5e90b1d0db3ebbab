#pragma once

// Symmetric primitives shared by every module. All of them are thin wrappers
// over OpenSSL libcrypto; nothing here is specific to identity management.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "fedid/bytes.hpp"

namespace fedid {

enum class HashAlg { sha1, sha256, sha512 };

Hash256 sha256(ByteView data);
std::array<std::uint8_t, 64> sha512(ByteView data);
/// RIPEMD-160(SHA-256(data)).
std::array<std::uint8_t, 20> hash160(ByteView data);

Bytes hmac(HashAlg alg, ByteView key, ByteView data);
std::array<std::uint8_t, 64> hmac_sha512(ByteView key, ByteView data);
Hash256 hmac_sha256(ByteView key, ByteView data);

Hash256 pbkdf2_sha256(std::string_view password, ByteView salt, std::uint32_t iterations);

/// Domain-separated SHA-256 over a sequence of length-prefixed fields.
Hash256 tagged_hash(std::string_view tag, std::initializer_list<ByteView> fields);

// AES-256-GCM with a 96-bit nonce and 128-bit tag.
struct Sealed {
  Bytes ciphertext;
  std::array<std::uint8_t, 16> tag{};
};
using AeadKey = std::array<std::uint8_t, 32>;
using AeadNonce = std::array<std::uint8_t, 12>;

Sealed aead_seal(const AeadKey& key, const AeadNonce& nonce, ByteView plaintext, ByteView aad);
/// std::nullopt on authentication failure.
std::optional<Bytes> aead_open(const AeadKey& key, const AeadNonce& nonce, ByteView ciphertext,
                               ByteView tag, ByteView aad);

std::string base58check_encode(ByteView payload);
/// Throws DecodeError on bad alphabet or checksum.
Bytes base58check_decode(std::string_view text);

/// RFC 4648 base32, uppercase, no padding on output; padding accepted on input.
std::string base32_encode(ByteView data);
Bytes base32_decode(std::string_view text);

/// HMAC-SHA256 deterministic random bit generator (SP 800-90A HMAC_DRBG
/// without reseed counters). Seeded instances give reproducible streams; the
/// default-constructed instance is seeded from the operating system.
class Drbg {
 public:
  Drbg();
  explicit Drbg(ByteView seed);
  static Drbg from_seed(std::uint64_t seed);

  void fill(std::span<std::uint8_t> out);
  Bytes bytes(std::size_t n);
  template <std::size_t N>
  std::array<std::uint8_t, N> array() {
    std::array<std::uint8_t, N> out{};
    fill(out);
    return out;
  }
  std::uint64_t next_u64();
  /// Uniform in [0, bound), bound > 0.
  std::uint64_t uniform(std::uint64_t bound);
  /// Independent child stream; same parent state + label gives the same child.
  Drbg fork(std::string_view label);

 private:
  void update(ByteView provided);

  Hash256 key_{};
  Hash256 value_{};
};

}  // namespace fedid
