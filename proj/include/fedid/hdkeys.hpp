#pragma once

// Hierarchical deterministic key trees over secp256k1.
//
// Two re-randomization modes share one tree shape:
//   additive        child = parent + tweak        (BIP-32, used for vectors)
//   multiplicative  child = parent * tweak        (default)
// where tweak is the left half of HMAC-SHA512(chain_code, data) exactly as in
// BIP-32. The mode is carried by every key and inherited by its children; it
// is encoded in the version field of the 78-byte serialization.
//
// Key layout used by the rest of the system (see namespace `layout`):
//   Data Access root            master_A
//     data-owner key            master_A/d'        registered with owner d
//       transaction keys        master_A/d'/j      derived by the owner
//   Data Authorization root     master_B
//     identity-provider key     master_B/p'        registered with IDP p
//       login keys              master_B/p'/i

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fedid/bytes.hpp"
#include "fedid/ec.hpp"

namespace fedid::hd {

enum class Mode : std::uint8_t { additive = 0, multiplicative = 1 };

std::string_view to_string(Mode mode);
Mode mode_from_string(std::string_view text);

inline constexpr std::uint32_t kHardenedBit = 0x80000000u;

class HdError : public std::runtime_error {
 public:
  enum class Code {
    seed_length,
    depth_overflow,
    hardened_from_public,
    index_out_of_range,
    index_exhausted,
    bad_path,
    bad_encoding,
  };
  HdError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

using ChainCode = std::array<std::uint8_t, 32>;
using Fingerprint = std::array<std::uint8_t, 4>;
using Serialized = std::array<std::uint8_t, 78>;

class ExtendedPublicKey;

class ExtendedPrivateKey {
 public:
  const ec::Scalar& scalar() const { return scalar_; }
  /// scalar * G, computed once at construction.
  const ec::Point& point() const { return point_; }
  const ChainCode& chain_code() const { return chain_code_; }
  std::uint8_t depth() const { return depth_; }
  /// Raw index including the hardened bit.
  std::uint32_t child_index() const { return child_index_; }
  const Fingerprint& parent_fingerprint() const { return parent_fingerprint_; }
  Mode mode() const { return mode_; }

  Fingerprint fingerprint() const;
  Serialized serialize() const;
  std::string to_base58() const;

  static ExtendedPrivateKey deserialize(ByteView bytes78);
  static ExtendedPrivateKey from_base58(std::string_view text);

  friend bool operator==(const ExtendedPrivateKey&, const ExtendedPrivateKey&) = default;

 private:
  friend ExtendedPrivateKey master_from_seed(ByteView, Mode);
  friend ExtendedPrivateKey ckd_priv(const ExtendedPrivateKey&, std::uint32_t, bool);

  ExtendedPrivateKey(const ec::Scalar& scalar, const ChainCode& chain_code, std::uint8_t depth,
                     std::uint32_t child_index, const Fingerprint& parent_fp, Mode mode);

  ec::Scalar scalar_;
  ec::Point point_;
  ChainCode chain_code_;
  std::uint8_t depth_;
  std::uint32_t child_index_;
  Fingerprint parent_fingerprint_;
  Mode mode_;
};

class ExtendedPublicKey {
 public:
  const ec::Point& point() const { return point_; }
  const ChainCode& chain_code() const { return chain_code_; }
  std::uint8_t depth() const { return depth_; }
  std::uint32_t child_index() const { return child_index_; }
  const Fingerprint& parent_fingerprint() const { return parent_fingerprint_; }
  Mode mode() const { return mode_; }

  Fingerprint fingerprint() const;
  Serialized serialize() const;
  std::string to_base58() const;

  static ExtendedPublicKey deserialize(ByteView bytes78);
  static ExtendedPublicKey from_base58(std::string_view text);

  friend bool operator==(const ExtendedPublicKey&, const ExtendedPublicKey&) = default;

 private:
  friend ExtendedPublicKey neuter(const ExtendedPrivateKey&);
  friend ExtendedPublicKey ckd_pub(const ExtendedPublicKey&, std::uint32_t);

  ExtendedPublicKey(const ec::Point& point, const ChainCode& chain_code, std::uint8_t depth,
                    std::uint32_t child_index, const Fingerprint& parent_fp, Mode mode);

  ec::Point point_;
  ChainCode chain_code_;
  std::uint8_t depth_;
  std::uint32_t child_index_;
  Fingerprint parent_fingerprint_;
  Mode mode_;
};

/// Seed must be 16..64 bytes.
ExtendedPrivateKey master_from_seed(ByteView seed, Mode mode = Mode::multiplicative);

/// `index` must be below 2^31; `hardened` sets the top bit. If the tweak for
/// an index is invalid the next index is used instead, so the returned key's
/// child_index() may exceed the requested one.
ExtendedPrivateKey ckd_priv(const ExtendedPrivateKey& parent, std::uint32_t index, bool hardened);

/// `index` is a raw index; anything with the hardened bit set is rejected.
ExtendedPublicKey ckd_pub(const ExtendedPublicKey& parent, std::uint32_t index);

ExtendedPublicKey neuter(const ExtendedPrivateKey& key);

/// The tweak that ckd_priv/ckd_pub apply for a given parent and raw index, or
/// nullopt when the index is invalid for the parent's mode. Exposed for audit
/// and for the multiplicative-mode consistency checks.
std::optional<ec::Scalar> child_tweak(const ExtendedPublicKey& parent, std::uint32_t raw_index);

struct PathStep {
  std::uint32_t index = 0;  // below 2^31
  bool hardened = false;
  friend bool operator==(const PathStep&, const PathStep&) = default;
};

class DerivationPath {
 public:
  DerivationPath() = default;
  explicit DerivationPath(std::vector<PathStep> steps);

  /// Accepts "m", "m/1'/2/3"; hardened markers ', h and H.
  static DerivationPath parse(std::string_view text);
  std::string to_string() const;

  const std::vector<PathStep>& steps() const { return steps_; }
  std::size_t size() const { return steps_.size(); }
  bool empty() const { return steps_.empty(); }
  bool all_public() const;

  DerivationPath child(std::uint32_t index, bool hardened = false) const;

  friend bool operator==(const DerivationPath&, const DerivationPath&) = default;

 private:
  std::vector<PathStep> steps_;
};

ExtendedPrivateKey derive_path(const ExtendedPrivateKey& root, const DerivationPath& path);
ExtendedPublicKey derive_path(const ExtendedPublicKey& root, const DerivationPath& path);

using Signature = ec::Signature;

/// ECDSA over SHA-256(message) with a deterministic nonce.
Signature sign(const ExtendedPrivateKey& key, ByteView message);
/// False on any mismatch or malformed input; never throws.
bool verify(const ExtendedPublicKey& key, ByteView message, const Signature& sig);

namespace layout {

/// The user's two independent roots, both derived from one wallet seed.
struct RootKeys {
  ExtendedPrivateKey data_access;
  ExtendedPrivateKey data_authorization;

  static RootKeys from_seed(ByteView seed, Mode mode = Mode::multiplicative);
};

inline ExtendedPrivateKey data_owner_key(const ExtendedPrivateKey& data_access, std::uint32_t owner) {
  return ckd_priv(data_access, owner, true);
}
inline ExtendedPublicKey transaction_key(const ExtendedPublicKey& owner_key, std::uint32_t counter) {
  return ckd_pub(owner_key, counter);
}
inline ExtendedPrivateKey identity_provider_key(const ExtendedPrivateKey& data_authorization,
                                                std::uint32_t idp) {
  return ckd_priv(data_authorization, idp, true);
}
inline ExtendedPrivateKey login_key(const ExtendedPrivateKey& idp_key, std::uint32_t index) {
  return ckd_priv(idp_key, index, false);
}

}  // namespace layout

}  // namespace fedid::hd
