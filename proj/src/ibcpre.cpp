#include "fedid/ibcpre.hpp"

namespace fedid::ibcpre {

namespace {

using Code = IbcpreError::Code;

constexpr AeadNonce kZeroNonce{};  // every AEAD key below is single-use

Hash256 certificate_digest(std::string_view identity, const ec::Point& point) {
  return tagged_hash("fedid/ibcpre/cert", {as_bytes(identity), point.compressed()});
}

Hash256 condition_digest(const ConditionTag& c) {
  return tagged_hash("fedid/ibcpre/cond", {as_bytes(c.value())});
}

ec::Scalar condition_scalar(const Hash256& commitment) {
  return ec::hash_to_scalar("fedid/ibcpre/cond-scalar", commitment);
}

AeadKey kek(const ec::Point& shared, const ec::Point& ephemeral, const Hash256& commitment,
            std::string_view recipient) {
  return tagged_hash("fedid/ibcpre/kek",
                     {shared.compressed(), ephemeral.compressed(), commitment, as_bytes(recipient)});
}

ec::Scalar delegation_scalar(const ec::Point& x_pub, const ec::Point& delegatee_pub,
                             const ec::Point& shared, const ConditionTag& condition,
                             std::string_view delegator, std::string_view delegatee) {
  auto cd = condition_digest(condition);
  Writer w;
  w.raw(x_pub.compressed())
      .raw(delegatee_pub.compressed())
      .raw(shared.compressed())
      .raw(cd)
      .str16(delegator)
      .str16(delegatee);
  return ec::hash_to_scalar("fedid/ibcpre/delegate", w.data());
}

ec::Scalar random_scalar(Drbg& rng) {
  for (;;) {
    auto bytes = rng.array<32>();
    if (auto s = ec::Scalar::from_bytes(bytes)) return *s;
  }
}

void check_identity(std::string_view identity) {
  if (identity.empty()) throw IbcpreError(Code::empty_identity, "identity must be nonempty");
  if (identity.size() > 0xffff) throw IbcpreError(Code::empty_identity, "identity too long");
}

// Wrapped-key body of a re-encrypted envelope.
struct Translated {
  ec::Point x_pub;
  ec::Point original_ephemeral;
  std::string delegator;
  Bytes original_wrapped;

  Bytes serialize() const {
    Writer w;
    w.raw(x_pub.compressed()).raw(original_ephemeral.compressed()).str16(delegator).bytes16(
        original_wrapped);
    return std::move(w).take();
  }

  static Translated parse(ByteView bytes) {
    Reader r(bytes);
    auto x = ec::Point::parse(r.raw(33));
    auto e = ec::Point::parse(r.raw(33));
    if (!x || !e) throw DecodeError("invalid point in translated key");
    Translated t{*x, *e, r.str16(), {}};
    auto w = r.bytes16();
    t.original_wrapped.assign(w.begin(), w.end());
    r.expect_done();
    return t;
  }
};

Bytes unwrap(const AeadKey& key, ByteView wrapped, const Hash256& commitment) {
  if (wrapped.size() != 48) throw DecryptionFailed();
  auto k = aead_open(key, kZeroNonce, wrapped.first(32), wrapped.subspan(32), commitment);
  if (!k || k->size() != 32) throw DecryptionFailed();
  return *k;
}

}  // namespace

ConditionTag::ConditionTag(std::string value) : value_(std::move(value)) {
  if (value_.empty() || value_.size() > 256) {
    throw IbcpreError(Code::bad_condition, "condition tag must be 1..256 bytes");
  }
}

void SystemParams::publish(const IdentityPublicKey& key) {
  check_identity(key.identity);
  if (!ec::ecdsa_verify(master_public, certificate_digest(key.identity, key.point), key.certificate)) {
    throw IbcpreError(Code::bad_certificate, "identity certificate does not verify: " + key.identity);
  }
  directory.insert_or_assign(key.identity, key);
}

const IdentityPublicKey& SystemParams::lookup(std::string_view identity) const {
  auto it = directory.find(identity);
  if (it == directory.end()) {
    throw IbcpreError(Code::unknown_identity, "no published key for identity " + std::string(identity));
  }
  return it->second;
}

bool SystemParams::has(std::string_view identity) const { return directory.find(identity) != directory.end(); }

ec::Scalar MasterSecret::scalar() const { return ec::hash_to_scalar("fedid/ibcpre/master", seed_); }

Setup setup(unsigned security_bits, Drbg& rng) {
  if (security_bits != 128 && security_bits != 256) {
    throw IbcpreError(Code::unsupported_parameter, "security parameter must be 128 or 256");
  }
  MasterSecret master(rng.array<32>());
  SystemParams params{security_bits, ec::Point::base_mul(master.scalar()),
                      "secp256k1/sha256/aes256gcm/" + std::to_string(security_bits), {}};
  return {std::move(params), master};
}

Setup setup(unsigned security_bits, std::uint64_t seed) {
  auto rng = Drbg::from_seed(seed);
  return setup(security_bits, rng);
}

IdentitySecretKey extract(const MasterSecret& master, std::string_view identity) {
  check_identity(identity);
  for (std::uint32_t counter = 0;; ++counter) {
    Writer w;
    w.str16(identity).u32(counter);
    auto digest = hmac_sha256(master.seed(), w.data());
    if (auto s = ec::Scalar::from_bytes(digest)) return {std::string(identity), *s};
  }
}

IdentityPublicKey certify(const MasterSecret& master, const IdentitySecretKey& key) {
  auto point = key.public_point();
  return {key.identity, point, ec::ecdsa_sign(master.scalar(), certificate_digest(key.identity, point))};
}

Hash256 condition_commitment(const ConditionTag& condition, std::string_view identity) {
  return tagged_hash("fedid/ibcpre/commit", {as_bytes(condition.value()), as_bytes(identity)});
}

Bytes Envelope::serialize() const {
  Writer w;
  w.u8(kEnvelopeVersion)
      .u8(static_cast<std::uint8_t>(level))
      .str16(recipient)
      .raw(condition_commitment)
      .raw(ephemeral.compressed())
      .bytes16(wrapped_key)
      .bytes32(payload)
      .raw(auth_tag);
  return std::move(w).take();
}

Envelope Envelope::parse(ByteView bytes) {
  Reader r(bytes);
  if (r.u8() != kEnvelopeVersion) throw DecodeError("unsupported envelope version");
  auto level = r.u8();
  if (level > 1) throw DecodeError("invalid envelope level");
  auto recipient = r.str16();
  auto commitment = r.fixed<32>();
  auto eph = ec::Point::parse(r.raw(33));
  if (!eph) throw DecodeError("invalid ephemeral point");
  auto wrapped = r.bytes16();
  auto payload = r.bytes32();
  if (payload.size() > kMaxPlaintext) throw DecodeError("payload too large");
  auto tag = r.fixed<16>();
  r.expect_done();
  return {static_cast<Level>(level), std::move(recipient), commitment, *eph,
          Bytes(wrapped.begin(), wrapped.end()), Bytes(payload.begin(), payload.end()), tag};
}

Bytes ReEncryptionKey::serialize() const {
  Writer w;
  w.str16(delegator).str16(delegatee).str16(condition.value()).bytes16(translation_token);
  return std::move(w).take();
}

ReEncryptionKey ReEncryptionKey::parse(ByteView bytes) {
  Reader r(bytes);
  auto delegator = r.str16();
  auto delegatee = r.str16();
  auto condition = r.str16();
  auto token = r.bytes16();
  r.expect_done();
  if (token.size() != 65) throw DecodeError("translation token must be 65 bytes");
  return {delegator, delegatee, ConditionTag(condition), Bytes(token.begin(), token.end())};
}

Envelope encrypt(const SystemParams& params, std::string_view recipient,
                 const ConditionTag& condition, ByteView plaintext, Drbg& rng) {
  check_identity(recipient);
  if (plaintext.size() > kMaxPlaintext) {
    throw IbcpreError(Code::oversize_plaintext, "plaintext exceeds 16 MiB");
  }
  const auto& pub = params.lookup(recipient).point;
  const auto commitment = condition_commitment(condition, recipient);

  const auto r = random_scalar(rng);
  const auto ephemeral = ec::Point::base_mul(r);
  const auto shared = pub.mul(r.mul(condition_scalar(commitment)));

  const auto content_key = rng.array<32>();
  auto wrapped = aead_seal(kek(shared, ephemeral, commitment, recipient), kZeroNonce, content_key,
                           commitment);
  auto body = aead_seal(content_key, kZeroNonce, plaintext, commitment);

  Bytes wrapped_key = std::move(wrapped.ciphertext);
  wrapped_key.insert(wrapped_key.end(), wrapped.tag.begin(), wrapped.tag.end());
  return {Level::original, std::string(recipient), commitment, ephemeral, std::move(wrapped_key),
          std::move(body.ciphertext), body.tag};
}

ReEncryptionKey rkgen(const SystemParams& params, const IdentitySecretKey& delegator,
                      std::string_view delegatee, const ConditionTag& condition, Drbg& rng) {
  check_identity(delegatee);
  if (delegatee == delegator.identity) {
    throw IbcpreError(Code::self_delegation, "cannot delegate to oneself");
  }
  const auto& delegatee_pub = params.lookup(delegatee).point;
  const auto x = random_scalar(rng);
  const auto x_pub = ec::Point::base_mul(x);
  const auto d = delegation_scalar(x_pub, delegatee_pub, delegatee_pub.mul(x), condition,
                                   delegator.identity, delegatee);
  const auto h = condition_scalar(condition_commitment(condition, delegator.identity));
  const auto t = delegator.secret.mul(h).mul(d.inverse());

  Bytes token(x_pub.compressed().begin(), x_pub.compressed().end());
  token.insert(token.end(), t.bytes().begin(), t.bytes().end());
  return {delegator.identity, std::string(delegatee), condition, std::move(token)};
}

Envelope reencrypt(const ReEncryptionKey& rk, const Envelope& ct) {
  if (ct.level != Level::original) {
    throw IbcpreError(Code::level_mismatch, "only original ciphertexts can be re-encrypted");
  }
  if (ct.recipient != rk.delegator) {
    throw IbcpreError(Code::identity_mismatch, "re-encryption key is for a different delegator");
  }
  if (ct.condition_commitment != condition_commitment(rk.condition, rk.delegator)) {
    throw IbcpreError(Code::condition_mismatch, "ciphertext condition does not match key");
  }
  if (rk.translation_token.size() != 65) {
    throw IbcpreError(Code::identity_mismatch, "malformed translation token");
  }
  auto x_pub = ec::Point::parse(ByteView(rk.translation_token).first(33));
  auto t = ec::Scalar::from_bytes(ByteView(rk.translation_token).subspan(33));
  if (!x_pub || !t) throw IbcpreError(Code::identity_mismatch, "malformed translation token");

  return {Level::reencrypted,
          rk.delegatee,
          condition_commitment(rk.condition, rk.delegatee),
          ct.ephemeral.mul(*t),
          Translated{*x_pub, ct.ephemeral, rk.delegator, ct.wrapped_key}.serialize(),
          ct.payload,
          ct.auth_tag};
}

Bytes decrypt(const IdentitySecretKey& key, const Envelope& ct, const ConditionTag& condition) {
  try {
    if (ct.recipient != key.identity) throw DecryptionFailed();
    if (ct.condition_commitment != condition_commitment(condition, key.identity)) {
      throw DecryptionFailed();
    }
    Bytes content_key;
    Hash256 payload_aad = ct.condition_commitment;
    if (ct.level == Level::original) {
      const auto h = condition_scalar(ct.condition_commitment);
      const auto shared = ct.ephemeral.mul(key.secret.mul(h));
      content_key = unwrap(kek(shared, ct.ephemeral, ct.condition_commitment, key.identity),
                           ct.wrapped_key, ct.condition_commitment);
    } else {
      const auto body = Translated::parse(ct.wrapped_key);
      const auto own_pub = key.public_point();
      const auto d = delegation_scalar(body.x_pub, own_pub, body.x_pub.mul(key.secret), condition,
                                       body.delegator, key.identity);
      const auto shared = ct.ephemeral.mul(d);
      const auto original_commitment = condition_commitment(condition, body.delegator);
      content_key = unwrap(kek(shared, body.original_ephemeral, original_commitment, body.delegator),
                           body.original_wrapped, original_commitment);
      payload_aad = original_commitment;
    }
    // The payload stays bound to the original recipient's commitment.
    auto plain = aead_open(to_array<32>(content_key), kZeroNonce, ct.payload, ct.auth_tag, payload_aad);
    if (!plain) throw DecryptionFailed();
    return std::move(*plain);
  } catch (const DecryptionFailed&) {
    throw;
  } catch (const std::exception&) {
    throw DecryptionFailed();
  }
}

Bytes decrypt(const IdentitySecretKey& key, ByteView envelope_bytes, const ConditionTag& condition) {
  std::optional<Envelope> ct;
  try {
    ct = Envelope::parse(envelope_bytes);
  } catch (const std::exception&) {
    throw DecryptionFailed();
  }
  return decrypt(key, *ct, condition);
}

}  // namespace fedid::ibcpre
