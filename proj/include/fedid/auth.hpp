#pragma once

// Local credential checks at the identity provider: PBKDF2 password records
// and RFC 6238 TOTP with a per-user replay guard.

#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

#include "fedid/bytes.hpp"
#include "fedid/crypto.hpp"

namespace fedid::auth {

inline constexpr std::size_t kMinPasswordLength = 8;  // code points
inline constexpr std::uint32_t kMinIterations = 10000;
inline constexpr std::size_t kTotpSecretLength = 20;

class AuthError : public std::runtime_error {
 public:
  enum class Code { password_policy, iterations, totp_parameters };
  AuthError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

using Salt = std::array<std::uint8_t, 16>;

struct PasswordRecord {
  Salt salt{};
  std::uint32_t iterations = kMinIterations;
  Hash256 digest{};

  Bytes serialize() const;
  static PasswordRecord parse(ByteView bytes);
  friend bool operator==(const PasswordRecord&, const PasswordRecord&) = default;
};

/// Number of UTF-8 code points; continuation bytes are not counted.
std::size_t utf8_length(std::string_view text);

/// Throws AuthError(password_policy) below kMinPasswordLength code points.
PasswordRecord hash_password(std::string_view password, const Salt& salt,
                             std::uint32_t iterations = kMinIterations);
/// Constant-time over the fixed-length digest.
bool verify_password(const PasswordRecord& record, std::string_view candidate);

struct TotpSecret {
  Bytes key;
  std::uint32_t step_seconds = 30;
  unsigned digits = 6;
  unsigned skew_windows = 1;
  HashAlg alg = HashAlg::sha1;

  /// Fresh 20-byte key with default parameters.
  static TotpSecret generate(Drbg& rng);
  /// Authenticator-app text form of the key.
  std::string key_base32() const;
  static TotpSecret from_base32(std::string_view text);

  /// Throws AuthError(totp_parameters) on an empty key, zero step or digits not 6/8.
  void validate() const;
};

std::uint64_t totp_counter(const TotpSecret& secret, std::uint64_t unix_time);
/// HOTP dynamic truncation at a given counter, zero-padded to secret.digits.
std::string hotp_code(const TotpSecret& secret, std::uint64_t counter);
std::string totp_code(const TotpSecret& secret, std::uint64_t unix_time);

/// Stateless match; returns the matched window counter within +-skew.
std::optional<std::uint64_t> totp_match(const TotpSecret& secret, std::uint64_t unix_time,
                                        std::string_view code);

/// Accepts each (username, window) at most once. Not thread-safe; one per IDP.
class ReplayGuard {
 public:
  bool totp_verify(const std::string& username, const TotpSecret& secret, std::uint64_t unix_time,
                   std::string_view code);
  bool seen(const std::string& username, std::uint64_t window) const;
  std::size_t size() const { return used_.size(); }

 private:
  std::set<std::pair<std::string, std::uint64_t>> used_;
};

}  // namespace fedid::auth
