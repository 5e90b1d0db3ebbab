#pragma once

// Identity-based conditional proxy re-encryption, hybrid construction.
//
// A key generation center holds a MasterSecret and extracts one secret key per
// identity string. Identity public keys are certified by the master key and
// published in SystemParams, so an encryptor needs only the params and the
// recipient's identity.
//
// Let a be the recipient's secret, A = aG, and h = H(commit(c, id)) a scalar
// bound to the condition tag c. Encryption picks r and wraps a fresh content
// key under KDF(r*h*A). A re-encryption key from A to B under c is
//     t = a * h * d^-1,   d = H(X, B, x*B, c),  X = xG,
// so the proxy turns E = rG into E' = tE and the delegatee recovers
// d*E' = r*a*h*G using b*X = x*B. Applying t to a ciphertext under another tag
// yields the wrong point, so conditionality is enforced by the algebra and not
// only by the commitment check. The payload ciphertext is never touched by
// the proxy.

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "fedid/bytes.hpp"
#include "fedid/crypto.hpp"
#include "fedid/ec.hpp"

namespace fedid::ibcpre {

inline constexpr std::size_t kMaxPlaintext = 16u * 1024u * 1024u;
inline constexpr std::uint8_t kEnvelopeVersion = 1;

class IbcpreError : public std::runtime_error {
 public:
  enum class Code {
    unsupported_parameter,
    empty_identity,
    bad_condition,
    oversize_plaintext,
    unknown_identity,
    bad_certificate,
    self_delegation,
    level_mismatch,
    identity_mismatch,
    condition_mismatch,
  };
  IbcpreError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

/// The only error decrypt() ever raises, whatever the cause.
class DecryptionFailed : public std::runtime_error {
 public:
  DecryptionFailed() : std::runtime_error("decryption failed") {}
};

/// UTF-8 tag, 1..256 bytes, compared byte-exact.
class ConditionTag {
 public:
  explicit ConditionTag(std::string value);
  const std::string& value() const { return value_; }
  friend bool operator==(const ConditionTag&, const ConditionTag&) = default;

 private:
  std::string value_;
};

struct IdentityPublicKey {
  std::string identity;
  ec::Point point;
  ec::Signature certificate;  // master signature over (identity, point)
};

struct SystemParams {
  unsigned security_bits = 128;
  ec::Point master_public;
  std::string suite;  // hash/KDF label set, derived from security_bits
  std::map<std::string, IdentityPublicKey, std::less<>> directory;

  /// Adds an identity after checking its certificate against master_public.
  void publish(const IdentityPublicKey& key);
  const IdentityPublicKey& lookup(std::string_view identity) const;
  bool has(std::string_view identity) const;
};

class MasterSecret {
 public:
  explicit MasterSecret(const std::array<std::uint8_t, 32>& seed) : seed_(seed) {}
  const std::array<std::uint8_t, 32>& seed() const { return seed_; }
  ec::Scalar scalar() const;

 private:
  std::array<std::uint8_t, 32> seed_;
};

struct IdentitySecretKey {
  std::string identity;
  ec::Scalar secret;

  ec::Point public_point() const { return ec::Point::base_mul(secret); }
  friend bool operator==(const IdentitySecretKey&, const IdentitySecretKey&) = default;
};

enum class Level : std::uint8_t { original = 0, reencrypted = 1 };

struct Envelope {
  Level level;
  std::string recipient;
  Hash256 condition_commitment;
  ec::Point ephemeral;
  Bytes wrapped_key;
  Bytes payload;
  std::array<std::uint8_t, 16> auth_tag{};

  /// version(1) level(1) recipient(2+n) commitment(32) ephemeral(33)
  /// wrapped_key(2+n) payload(4+n) auth_tag(16)
  Bytes serialize() const;
  /// Throws DecodeError on any structural problem.
  static Envelope parse(ByteView bytes);

  friend bool operator==(const Envelope&, const Envelope&) = default;
};

struct ReEncryptionKey {
  std::string delegator;
  std::string delegatee;
  ConditionTag condition;
  Bytes translation_token;  // X(33) || t(32)

  Bytes serialize() const;
  static ReEncryptionKey parse(ByteView bytes);
};

struct Setup {
  SystemParams params;
  MasterSecret master;
};

/// security_bits must be 128 or 256. Deterministic for a given rng state.
Setup setup(unsigned security_bits, Drbg& rng);
Setup setup(unsigned security_bits, std::uint64_t seed);

IdentitySecretKey extract(const MasterSecret& master, std::string_view identity);
/// Certified public half of an extracted key, ready for SystemParams::publish.
IdentityPublicKey certify(const MasterSecret& master, const IdentitySecretKey& key);

Hash256 condition_commitment(const ConditionTag& condition, std::string_view identity);

Envelope encrypt(const SystemParams& params, std::string_view recipient,
                 const ConditionTag& condition, ByteView plaintext, Drbg& rng);

ReEncryptionKey rkgen(const SystemParams& params, const IdentitySecretKey& delegator,
                      std::string_view delegatee, const ConditionTag& condition, Drbg& rng);

/// Single hop: only level-original envelopes are accepted.
Envelope reencrypt(const ReEncryptionKey& rk, const Envelope& ct);

/// Throws DecryptionFailed on wrong identity, wrong condition or any tamper.
Bytes decrypt(const IdentitySecretKey& key, const Envelope& ct, const ConditionTag& condition);
/// Parses first; malformed bytes are reported as DecryptionFailed too.
Bytes decrypt(const IdentitySecretKey& key, ByteView envelope_bytes, const ConditionTag& condition);

}  // namespace fedid::ibcpre
