#pragma once

// secp256k1 scalars and points as immutable value types.

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <stdexcept>

#include "fedid/bytes.hpp"

namespace fedid::ec {

class CurveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Big-endian group order n.
extern const std::array<std::uint8_t, 32> kOrder;

/// Integer in [1, n-1].
class Scalar {
 public:
  /// std::nullopt when the bytes encode 0 or a value >= n.
  static std::optional<Scalar> from_bytes(ByteView bytes32);
  /// Throws CurveError on an out-of-range value.
  static Scalar must(ByteView bytes32);

  const std::array<std::uint8_t, 32>& bytes() const { return bytes_; }

  /// (this + other) mod n; nullopt when the sum is 0.
  std::optional<Scalar> add(const Scalar& other) const;
  /// (this * other) mod n; never 0 because n is prime.
  Scalar mul(const Scalar& other) const;
  Scalar negate() const;
  Scalar inverse() const;

  friend bool operator==(const Scalar&, const Scalar&) = default;

 private:
  explicit Scalar(const std::array<std::uint8_t, 32>& b) : bytes_(b) {}
  std::array<std::uint8_t, 32> bytes_{};
};

/// Hash-to-scalar: SHA-256 of (tag, counter, data) with counter retry until
/// the digest lands in [1, n-1].
Scalar hash_to_scalar(std::string_view tag, ByteView data);

/// Non-identity curve point, held in 33-byte compressed form.
class Point {
 public:
  static std::optional<Point> parse(ByteView compressed33);
  static Point must_parse(ByteView compressed33);
  static Point base_mul(const Scalar& k);

  const std::array<std::uint8_t, 33>& compressed() const { return bytes_; }

  /// k * this.
  Point mul(const Scalar& k) const;
  /// this + k*G; nullopt if the sum is the identity.
  std::optional<Point> add_base_mul(const Scalar& k) const;
  /// this + other; nullopt if the sum is the identity.
  std::optional<Point> add(const Point& other) const;

  friend bool operator==(const Point&, const Point&) = default;
  friend auto operator<=>(const Point&, const Point&) = default;

 private:
  explicit Point(const std::array<std::uint8_t, 33>& b) : bytes_(b) {}
  std::array<std::uint8_t, 33> bytes_{};
};

/// Compact (r || s) ECDSA signature, low-s normalized.
struct Signature {
  std::array<std::uint8_t, 32> r{};
  std::array<std::uint8_t, 32> s{};

  std::array<std::uint8_t, 64> compact() const;
  static Signature from_compact(ByteView bytes64);

  friend bool operator==(const Signature&, const Signature&) = default;
};

/// Deterministic ECDSA: the nonce is HMAC-derived from key and digest (RFC 6979).
Signature ecdsa_sign(const Scalar& key, const Hash256& digest);
/// Never throws; rejects high-s and out-of-range components.
bool ecdsa_verify(const Point& pub, const Hash256& digest, const Signature& sig);

}  // namespace fedid::ec
