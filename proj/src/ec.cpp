#include "fedid/ec.hpp"

#include <openssl/bn.h>
#include <secp256k1.h>

#include <memory>

#include "fedid/crypto.hpp"

namespace fedid::ec {

const std::array<std::uint8_t, 32> kOrder = {
    0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xfe,
    0xba, 0xae, 0xdc, 0xe6, 0xaf, 0x48, 0xa0, 0x3b, 0xbf, 0xd2, 0x5e, 0x8c, 0xd0, 0x36, 0x41, 0x41};

namespace {

const secp256k1_context* ctx() {
  static const secp256k1_context* c =
      secp256k1_context_create(SECP256K1_CONTEXT_SIGN | SECP256K1_CONTEXT_VERIFY);
  return c;
}

secp256k1_pubkey load(const std::array<std::uint8_t, 33>& bytes) {
  secp256k1_pubkey pk;
  if (!secp256k1_ec_pubkey_parse(ctx(), &pk, bytes.data(), bytes.size())) {
    throw CurveError("invalid point encoding");
  }
  return pk;
}

std::array<std::uint8_t, 33> store(const secp256k1_pubkey& pk) {
  std::array<std::uint8_t, 33> out{};
  std::size_t len = out.size();
  secp256k1_ec_pubkey_serialize(ctx(), out.data(), &len, &pk, SECP256K1_EC_COMPRESSED);
  return out;
}

struct BnFree {
  void operator()(BIGNUM* b) const { BN_clear_free(b); }
};
struct BnCtxFree {
  void operator()(BN_CTX* c) const { BN_CTX_free(c); }
};
using Bn = std::unique_ptr<BIGNUM, BnFree>;

}  // namespace

std::optional<Scalar> Scalar::from_bytes(ByteView bytes32) {
  if (bytes32.size() != 32) return std::nullopt;
  auto arr = to_array<32>(bytes32);
  if (!secp256k1_ec_seckey_verify(ctx(), arr.data())) return std::nullopt;
  return Scalar(arr);
}

Scalar Scalar::must(ByteView bytes32) {
  auto s = from_bytes(bytes32);
  if (!s) throw CurveError("scalar out of range");
  return *s;
}

std::optional<Scalar> Scalar::add(const Scalar& other) const {
  auto out = bytes_;
  if (!secp256k1_ec_seckey_tweak_add(ctx(), out.data(), other.bytes_.data())) return std::nullopt;
  return Scalar(out);
}

Scalar Scalar::mul(const Scalar& other) const {
  auto out = bytes_;
  if (!secp256k1_ec_seckey_tweak_mul(ctx(), out.data(), other.bytes_.data())) {
    throw CurveError("scalar multiplication failed");
  }
  return Scalar(out);
}

Scalar Scalar::negate() const {
  auto out = bytes_;
  if (!secp256k1_ec_seckey_negate(ctx(), out.data())) throw CurveError("negation failed");
  return Scalar(out);
}

Scalar Scalar::inverse() const {
  // libsecp256k1 exposes no public scalar inverse; BIGNUM handles this one.
  std::unique_ptr<BN_CTX, BnCtxFree> bctx(BN_CTX_new());
  Bn a(BN_bin2bn(bytes_.data(), 32, nullptr));
  Bn n(BN_bin2bn(kOrder.data(), 32, nullptr));
  Bn inv(BN_mod_inverse(nullptr, a.get(), n.get(), bctx.get()));
  if (!inv) throw CurveError("scalar inverse failed");
  std::array<std::uint8_t, 32> out{};
  BN_bn2binpad(inv.get(), out.data(), 32);
  return Scalar(out);
}

Scalar hash_to_scalar(std::string_view tag, ByteView data) {
  for (std::uint32_t counter = 0;; ++counter) {
    Writer w;
    w.u32(counter);
    auto digest = tagged_hash(tag, {w.data(), data});
    if (auto s = Scalar::from_bytes(digest)) return *s;
  }
}

std::optional<Point> Point::parse(ByteView compressed33) {
  if (compressed33.size() != 33) return std::nullopt;
  auto arr = to_array<33>(compressed33);
  secp256k1_pubkey pk;
  if (!secp256k1_ec_pubkey_parse(ctx(), &pk, arr.data(), arr.size())) return std::nullopt;
  // Re-serialize so the stored form is canonical.
  return Point(store(pk));
}

Point Point::must_parse(ByteView compressed33) {
  auto p = parse(compressed33);
  if (!p) throw CurveError("invalid point encoding");
  return *p;
}

Point Point::base_mul(const Scalar& k) {
  secp256k1_pubkey pk;
  if (!secp256k1_ec_pubkey_create(ctx(), &pk, k.bytes().data())) {
    throw CurveError("base multiplication failed");
  }
  return Point(store(pk));
}

Point Point::mul(const Scalar& k) const {
  auto pk = load(bytes_);
  if (!secp256k1_ec_pubkey_tweak_mul(ctx(), &pk, k.bytes().data())) {
    throw CurveError("point multiplication failed");
  }
  return Point(store(pk));
}

std::optional<Point> Point::add_base_mul(const Scalar& k) const {
  auto pk = load(bytes_);
  if (!secp256k1_ec_pubkey_tweak_add(ctx(), &pk, k.bytes().data())) return std::nullopt;
  return Point(store(pk));
}

std::optional<Point> Point::add(const Point& other) const {
  auto a = load(bytes_);
  auto b = load(other.bytes_);
  const secp256k1_pubkey* ins[2] = {&a, &b};
  secp256k1_pubkey out;
  if (!secp256k1_ec_pubkey_combine(ctx(), &out, ins, 2)) return std::nullopt;
  return Point(store(out));
}

std::array<std::uint8_t, 64> Signature::compact() const {
  std::array<std::uint8_t, 64> out{};
  std::copy(r.begin(), r.end(), out.begin());
  std::copy(s.begin(), s.end(), out.begin() + 32);
  return out;
}

Signature Signature::from_compact(ByteView bytes64) {
  if (bytes64.size() != 64) throw DecodeError("signature must be 64 bytes");
  Signature sig;
  std::copy_n(bytes64.begin(), 32, sig.r.begin());
  std::copy_n(bytes64.begin() + 32, 32, sig.s.begin());
  return sig;
}

Signature ecdsa_sign(const Scalar& key, const Hash256& digest) {
  secp256k1_ecdsa_signature raw;
  if (!secp256k1_ecdsa_sign(ctx(), &raw, digest.data(), key.bytes().data(),
                            secp256k1_nonce_function_rfc6979, nullptr)) {
    throw CurveError("signing failed");
  }
  // libsecp256k1 already emits low-s signatures.
  std::array<std::uint8_t, 64> compact{};
  secp256k1_ecdsa_signature_serialize_compact(ctx(), compact.data(), &raw);
  return Signature::from_compact(compact);
}

bool ecdsa_verify(const Point& pub, const Hash256& digest, const Signature& sig) {
  secp256k1_pubkey pk;
  const auto& pb = pub.compressed();
  if (!secp256k1_ec_pubkey_parse(ctx(), &pk, pb.data(), pb.size())) return false;
  auto compact = sig.compact();
  secp256k1_ecdsa_signature raw;
  if (!secp256k1_ecdsa_signature_parse_compact(ctx(), &raw, compact.data())) return false;
  // Verification fails on high-s input, which is the normalization rule we want.
  return secp256k1_ecdsa_verify(ctx(), &raw, digest.data(), &pk) == 1;
}

}  // namespace fedid::ec
