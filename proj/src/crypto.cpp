#include "fedid/crypto.hpp"

#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/rand.h>

#include <memory>
#include <stdexcept>

// RIPEMD-160 lives in the legacy provider for EVP on OpenSSL 3.0; the
// low-level one-shot is still exported and is all hash160 needs.
#include <openssl/ripemd.h>

namespace fedid {

namespace {

const EVP_MD* evp(HashAlg alg) {
  switch (alg) {
    case HashAlg::sha1:
      return EVP_sha1();
    case HashAlg::sha256:
      return EVP_sha256();
    case HashAlg::sha512:
      return EVP_sha512();
  }
  throw std::invalid_argument("unknown hash");
}

struct CipherCtxFree {
  void operator()(EVP_CIPHER_CTX* c) const { EVP_CIPHER_CTX_free(c); }
};
using CipherCtx = std::unique_ptr<EVP_CIPHER_CTX, CipherCtxFree>;

void check(int rc, const char* what) {
  if (rc != 1) throw std::runtime_error(std::string("openssl: ") + what);
}

constexpr char kBase58[] = "123456789ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz";
constexpr char kBase32[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZ234567";

}  // namespace

Hash256 sha256(ByteView data) {
  Hash256 out{};
  check(EVP_Digest(data.data(), data.size(), out.data(), nullptr, EVP_sha256(), nullptr), "sha256");
  return out;
}

std::array<std::uint8_t, 64> sha512(ByteView data) {
  std::array<std::uint8_t, 64> out{};
  check(EVP_Digest(data.data(), data.size(), out.data(), nullptr, EVP_sha512(), nullptr), "sha512");
  return out;
}

std::array<std::uint8_t, 20> hash160(ByteView data) {
  auto inner = sha256(data);
  std::array<std::uint8_t, 20> out{};
#pragma GCC diagnostic push
#pragma GCC diagnostic ignored "-Wdeprecated-declarations"
  RIPEMD160(inner.data(), inner.size(), out.data());
#pragma GCC diagnostic pop
  return out;
}

Bytes hmac(HashAlg alg, ByteView key, ByteView data) {
  Bytes out(EVP_MAX_MD_SIZE);
  unsigned int len = 0;
  if (HMAC(evp(alg), key.data(), static_cast<int>(key.size()), data.data(), data.size(), out.data(),
           &len) == nullptr) {
    throw std::runtime_error("openssl: hmac");
  }
  out.resize(len);
  return out;
}

std::array<std::uint8_t, 64> hmac_sha512(ByteView key, ByteView data) {
  return to_array<64>(hmac(HashAlg::sha512, key, data));
}

Hash256 hmac_sha256(ByteView key, ByteView data) {
  return to_array<32>(hmac(HashAlg::sha256, key, data));
}

Hash256 pbkdf2_sha256(std::string_view password, ByteView salt, std::uint32_t iterations) {
  Hash256 out{};
  check(PKCS5_PBKDF2_HMAC(password.data(), static_cast<int>(password.size()), salt.data(),
                          static_cast<int>(salt.size()), static_cast<int>(iterations), EVP_sha256(),
                          static_cast<int>(out.size()), out.data()),
        "pbkdf2");
  return out;
}

Hash256 tagged_hash(std::string_view tag, std::initializer_list<ByteView> fields) {
  Writer w;
  w.str16(tag);
  for (auto f : fields) w.bytes32(f);
  return sha256(w.data());
}

Sealed aead_seal(const AeadKey& key, const AeadNonce& nonce, ByteView plaintext, ByteView aad) {
  CipherCtx ctx(EVP_CIPHER_CTX_new());
  if (!ctx) throw std::bad_alloc();
  check(EVP_EncryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, key.data(), nonce.data()),
        "gcm init");
  int len = 0;
  if (!aad.empty()) {
    check(EVP_EncryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())),
          "gcm aad");
  }
  Sealed out;
  out.ciphertext.resize(plaintext.size());
  if (!plaintext.empty()) {
    check(EVP_EncryptUpdate(ctx.get(), out.ciphertext.data(), &len, plaintext.data(),
                            static_cast<int>(plaintext.size())),
          "gcm update");
  }
  check(EVP_EncryptFinal_ex(ctx.get(), out.ciphertext.data() + plaintext.size(), &len),
        "gcm final");
  check(EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, 16, out.tag.data()), "gcm tag");
  return out;
}

std::optional<Bytes> aead_open(const AeadKey& key, const AeadNonce& nonce, ByteView ciphertext,
                               ByteView tag, ByteView aad) {
  if (tag.size() != 16) return std::nullopt;
  CipherCtx ctx(EVP_CIPHER_CTX_new());
  if (!ctx) throw std::bad_alloc();
  check(EVP_DecryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, key.data(), nonce.data()),
        "gcm init");
  int len = 0;
  if (!aad.empty() &&
      EVP_DecryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())) != 1) {
    return std::nullopt;
  }
  Bytes out(ciphertext.size());
  if (!ciphertext.empty() &&
      EVP_DecryptUpdate(ctx.get(), out.data(), &len, ciphertext.data(),
                        static_cast<int>(ciphertext.size())) != 1) {
    return std::nullopt;
  }
  Bytes tag_copy(tag.begin(), tag.end());
  check(EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, 16, tag_copy.data()), "gcm tag");
  if (EVP_DecryptFinal_ex(ctx.get(), out.data() + out.size(), &len) != 1) return std::nullopt;
  return out;
}

std::string base58check_encode(ByteView payload) {
  Bytes data(payload.begin(), payload.end());
  auto checksum = sha256(sha256(payload));
  data.insert(data.end(), checksum.begin(), checksum.begin() + 4);

  std::size_t zeros = 0;
  while (zeros < data.size() && data[zeros] == 0) ++zeros;

  // Repeated division of the big-endian number by 58.
  std::vector<std::uint8_t> digits;
  Bytes num(data.begin() + static_cast<std::ptrdiff_t>(zeros), data.end());
  while (!num.empty()) {
    unsigned rem = 0;
    Bytes quotient;
    for (auto byte : num) {
      unsigned acc = rem * 256 + byte;
      auto q = static_cast<std::uint8_t>(acc / 58);
      rem = acc % 58;
      if (!quotient.empty() || q != 0) quotient.push_back(q);
    }
    digits.push_back(static_cast<std::uint8_t>(rem));
    num = std::move(quotient);
  }
  std::string out(zeros, '1');
  for (auto it = digits.rbegin(); it != digits.rend(); ++it) out.push_back(kBase58[*it]);
  return out;
}

Bytes base58check_decode(std::string_view text) {
  std::size_t zeros = 0;
  while (zeros < text.size() && text[zeros] == '1') ++zeros;

  Bytes num;  // big-endian accumulator
  for (std::size_t i = zeros; i < text.size(); ++i) {
    const char* pos = std::char_traits<char>::find(kBase58, 58, text[i]);
    if (pos == nullptr) throw DecodeError("invalid base58 character");
    unsigned carry = static_cast<unsigned>(pos - kBase58);
    for (auto it = num.rbegin(); it != num.rend(); ++it) {
      carry += static_cast<unsigned>(*it) * 58;
      *it = static_cast<std::uint8_t>(carry & 0xff);
      carry >>= 8;
    }
    while (carry != 0) {
      num.insert(num.begin(), static_cast<std::uint8_t>(carry & 0xff));
      carry >>= 8;
    }
  }
  Bytes data(zeros, 0);
  data.insert(data.end(), num.begin(), num.end());
  if (data.size() < 4) throw DecodeError("base58check payload too short");
  ByteView payload(data.data(), data.size() - 4);
  auto checksum = sha256(sha256(payload));
  if (!std::equal(checksum.begin(), checksum.begin() + 4, data.end() - 4)) {
    throw DecodeError("base58check checksum mismatch");
  }
  return {payload.begin(), payload.end()};
}

std::string base32_encode(ByteView data) {
  std::string out;
  std::uint32_t buffer = 0;
  int bits = 0;
  for (auto b : data) {
    buffer = (buffer << 8) | b;
    bits += 8;
    while (bits >= 5) {
      out.push_back(kBase32[(buffer >> (bits - 5)) & 0x1f]);
      bits -= 5;
    }
  }
  if (bits > 0) out.push_back(kBase32[(buffer << (5 - bits)) & 0x1f]);
  return out;
}

Bytes base32_decode(std::string_view text) {
  Bytes out;
  std::uint32_t buffer = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=') break;
    if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
    const char* pos = std::char_traits<char>::find(kBase32, 32, c);
    if (pos == nullptr) throw DecodeError("invalid base32 character");
    buffer = (buffer << 5) | static_cast<std::uint32_t>(pos - kBase32);
    bits += 5;
    if (bits >= 8) {
      out.push_back(static_cast<std::uint8_t>(buffer >> (bits - 8)));
      bits -= 8;
    }
  }
  return out;
}

Drbg::Drbg() {
  Hash256 seed{};
  check(RAND_bytes(seed.data(), static_cast<int>(seed.size())), "rand");
  value_.fill(0x01);
  update(seed);
}

Drbg::Drbg(ByteView seed) {
  value_.fill(0x01);
  update(seed);
}

Drbg Drbg::from_seed(std::uint64_t seed) {
  Writer w;
  w.raw(as_bytes("fedid-drbg")).u64(seed);
  return Drbg(w.data());
}

void Drbg::update(ByteView provided) {
  Writer w;
  w.raw(value_).u8(0x00).raw(provided);
  key_ = hmac_sha256(key_, w.data());
  value_ = hmac_sha256(key_, value_);
  if (provided.empty()) return;
  Writer w2;
  w2.raw(value_).u8(0x01).raw(provided);
  key_ = hmac_sha256(key_, w2.data());
  value_ = hmac_sha256(key_, value_);
}

void Drbg::fill(std::span<std::uint8_t> out) {
  std::size_t pos = 0;
  while (pos < out.size()) {
    value_ = hmac_sha256(key_, value_);
    auto n = std::min(out.size() - pos, value_.size());
    std::copy_n(value_.begin(), n, out.begin() + static_cast<std::ptrdiff_t>(pos));
    pos += n;
  }
  update({});
}

Bytes Drbg::bytes(std::size_t n) {
  Bytes out(n);
  fill(out);
  return out;
}

std::uint64_t Drbg::next_u64() {
  auto b = array<8>();
  std::uint64_t v = 0;
  for (auto x : b) v = (v << 8) | x;
  return v;
}

std::uint64_t Drbg::uniform(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("uniform bound must be positive");
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
  std::uint64_t v = 0;
  do {
    v = next_u64();
  } while (v >= limit);
  return v % bound;
}

Drbg Drbg::fork(std::string_view label) {
  auto material = bytes(32);
  Writer w;
  w.raw(material).str16(label);
  return Drbg(w.data());
}

}  // namespace fedid
