#include "fedid/auth.hpp"

namespace fedid::auth {

using Code = AuthError::Code;

std::size_t utf8_length(std::string_view text) {
  std::size_t n = 0;
  for (unsigned char c : text) {
    if ((c & 0xc0) != 0x80) ++n;
  }
  return n;
}

Bytes PasswordRecord::serialize() const {
  Writer w;
  w.raw(salt).u32(iterations).raw(digest);
  return std::move(w).take();
}

PasswordRecord PasswordRecord::parse(ByteView bytes) {
  Reader r(bytes);
  PasswordRecord rec{r.fixed<16>(), r.u32(), {}};
  rec.digest = r.fixed<32>();
  r.expect_done();
  return rec;
}

PasswordRecord hash_password(std::string_view password, const Salt& salt, std::uint32_t iterations) {
  if (utf8_length(password) < kMinPasswordLength) {
    throw AuthError(Code::password_policy, "password must be at least 8 characters");
  }
  if (iterations < kMinIterations) {
    throw AuthError(Code::iterations, "at least 10000 iterations required");
  }
  return {salt, iterations, pbkdf2_sha256(password, salt, iterations)};
}

bool verify_password(const PasswordRecord& record, std::string_view candidate) {
  if (record.iterations < kMinIterations) return false;
  return ct_equal(pbkdf2_sha256(candidate, record.salt, record.iterations), record.digest);
}

TotpSecret TotpSecret::generate(Drbg& rng) {
  TotpSecret s;
  s.key = rng.bytes(kTotpSecretLength);
  return s;
}

std::string TotpSecret::key_base32() const { return base32_encode(key); }

TotpSecret TotpSecret::from_base32(std::string_view text) {
  TotpSecret s;
  s.key = base32_decode(text);
  s.validate();
  return s;
}

void TotpSecret::validate() const {
  if (key.empty()) throw AuthError(Code::totp_parameters, "empty TOTP key");
  if (step_seconds == 0) throw AuthError(Code::totp_parameters, "TOTP step must be positive");
  if (digits != 6 && digits != 8) throw AuthError(Code::totp_parameters, "TOTP digits must be 6 or 8");
}

std::uint64_t totp_counter(const TotpSecret& secret, std::uint64_t unix_time) {
  secret.validate();
  return unix_time / secret.step_seconds;
}

std::string hotp_code(const TotpSecret& secret, std::uint64_t counter) {
  secret.validate();
  Writer w;
  w.u64(counter);
  auto mac = hmac(secret.alg, secret.key, w.data());
  const std::size_t offset = mac.back() & 0x0f;
  const std::uint32_t binary = (static_cast<std::uint32_t>(mac[offset] & 0x7f) << 24) |
                               (static_cast<std::uint32_t>(mac[offset + 1]) << 16) |
                               (static_cast<std::uint32_t>(mac[offset + 2]) << 8) |
                               static_cast<std::uint32_t>(mac[offset + 3]);
  const std::uint32_t modulus = secret.digits == 8 ? 100000000u : 1000000u;
  auto digits = std::to_string(binary % modulus);
  return std::string(secret.digits - digits.size(), '0') + digits;
}

std::string totp_code(const TotpSecret& secret, std::uint64_t unix_time) {
  return hotp_code(secret, totp_counter(secret, unix_time));
}

std::optional<std::uint64_t> totp_match(const TotpSecret& secret, std::uint64_t unix_time,
                                        std::string_view code) {
  if (code.size() != secret.digits) return std::nullopt;
  const auto now = totp_counter(secret, unix_time);
  const auto lo = now >= secret.skew_windows ? now - secret.skew_windows : 0;
  for (auto w = lo; w <= now + secret.skew_windows; ++w) {
    if (ct_equal(as_bytes(hotp_code(secret, w)), as_bytes(code))) return w;
  }
  return std::nullopt;
}

bool ReplayGuard::totp_verify(const std::string& username, const TotpSecret& secret,
                              std::uint64_t unix_time, std::string_view code) {
  auto window = totp_match(secret, unix_time, code);
  if (!window) return false;
  return used_.emplace(username, *window).second;
}

bool ReplayGuard::seen(const std::string& username, std::uint64_t window) const {
  return used_.count({username, window}) != 0;
}

}  // namespace fedid::auth
