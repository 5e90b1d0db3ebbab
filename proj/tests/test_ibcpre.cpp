#include <gtest/gtest.h>

#include "fedid/ibcpre.hpp"

using namespace fedid;
using namespace fedid::ibcpre;

namespace {

struct World {
  Setup s = setup(128, 2024);
  Drbg rng = Drbg::from_seed(99);

  IdentitySecretKey enroll(const std::string& id) {
    auto sk = extract(s.master, id);
    s.params.publish(certify(s.master, sk));
    return sk;
  }
};

bool fails(const IdentitySecretKey& sk, const Envelope& ct, const ConditionTag& c) {
  try {
    decrypt(sk, ct, c);
    return false;
  } catch (const DecryptionFailed&) {
    return true;
  }
}

template <class F>
IbcpreError::Code error_code(F&& f) {
  try {
    f();
  } catch (const IbcpreError& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected IbcpreError";
  return IbcpreError::Code::unsupported_parameter;
}

}  // namespace

TEST(Ibcpre, SetupIsDeterministicAndChecksParameter) {
  auto a = setup(128, 5);
  auto b = setup(128, 5);
  EXPECT_EQ(a.params.master_public, b.params.master_public);
  EXPECT_EQ(a.master.seed(), b.master.seed());
  EXPECT_NE(setup(128, 6).params.master_public, a.params.master_public);
  EXPECT_EQ(setup(256, 5).params.security_bits, 256u);
  EXPECT_EQ(error_code([] { setup(64, 1); }), IbcpreError::Code::unsupported_parameter);
}

TEST(Ibcpre, ExtractIsDeterministicAndIdentityBound) {
  auto s = setup(128, 1);
  EXPECT_EQ(extract(s.master, "a"), extract(s.master, "a"));
  EXPECT_NE(extract(s.master, "a").secret, extract(s.master, "b").secret);
  EXPECT_NE(extract(setup(128, 2).master, "a").secret, extract(s.master, "a").secret);
  EXPECT_EQ(error_code([&] { extract(s.master, ""); }), IbcpreError::Code::empty_identity);
}

TEST(Ibcpre, DirectoryRejectsUncertifiedKeys) {
  World w;
  auto sk = extract(w.s.master, "dmv.example");
  auto pub = certify(w.s.master, sk);
  auto forged = pub;
  forged.point = extract(w.s.master, "mallory").public_point();
  EXPECT_EQ(error_code([&] { w.s.params.publish(forged); }), IbcpreError::Code::bad_certificate);
  auto other = setup(128, 77);
  EXPECT_EQ(error_code([&] { w.s.params.publish(certify(other.master, sk)); }),
            IbcpreError::Code::bad_certificate);
  w.s.params.publish(pub);
  EXPECT_TRUE(w.s.params.has("dmv.example"));
  EXPECT_EQ(error_code([&] { w.s.params.lookup("irs"); }), IbcpreError::Code::unknown_identity);
}

TEST(Ibcpre, ConditionTagBounds) {
  EXPECT_EQ(error_code([] { ConditionTag(""); }), IbcpreError::Code::bad_condition);
  EXPECT_NO_THROW(ConditionTag(std::string(256, 'x')));
  EXPECT_EQ(error_code([] { ConditionTag(std::string(257, 'x')); }), IbcpreError::Code::bad_condition);
}

TEST(Ibcpre, RoundTripAndRandomization) {
  World w;
  auto alice = w.enroll("alice");
  ConditionTag c("verify:address:2024");
  auto m = to_bytes("123 Main St");
  auto e1 = encrypt(w.s.params, "alice", c, m, w.rng);
  auto e2 = encrypt(w.s.params, "alice", c, m, w.rng);
  EXPECT_NE(e1, e2);
  EXPECT_EQ(e1.level, Level::original);
  EXPECT_EQ(e1.condition_commitment, condition_commitment(c, "alice"));
  EXPECT_EQ(decrypt(alice, e1, c), m);
  EXPECT_EQ(decrypt(alice, e2, c), m);
  EXPECT_EQ(decrypt(alice, e1.serialize(), c), m);
  EXPECT_TRUE(decrypt(alice, encrypt(w.s.params, "alice", c, {}, w.rng), c).empty());
}

TEST(Ibcpre, PlaintextSizeLimit) {
  World w;
  w.enroll("alice");
  ConditionTag c("x");
  Bytes big(kMaxPlaintext + 1);
  EXPECT_EQ(error_code([&] { encrypt(w.s.params, "alice", c, big, w.rng); }),
            IbcpreError::Code::oversize_plaintext);
}

TEST(Ibcpre, WrongIdentityOrConditionFailsOpaquely) {
  World w;
  auto alice = w.enroll("alice");
  auto bob = w.enroll("bob");
  ConditionTag c("verify:address:2024");
  auto ct = encrypt(w.s.params, "alice", c, to_bytes("secret"), w.rng);
  EXPECT_TRUE(fails(bob, ct, c));
  EXPECT_TRUE(fails(alice, ct, ConditionTag("verify:address:2025")));
  EXPECT_TRUE(fails(alice, ct, ConditionTag("verify:address:2024 ")));
  // Same identity string, different deployment.
  EXPECT_TRUE(fails(extract(setup(128, 3).master, "alice"), ct, c));
  try {
    decrypt(bob, ct, c);
  } catch (const std::exception& e) {
    EXPECT_STREQ(e.what(), "decryption failed");
  }
}

TEST(Ibcpre, DelegationMatchesDelegatorDecrypt) {
  World w;
  auto alice = w.enroll("alice");
  auto dmv = w.enroll("dmv.example");
  ConditionTag c("verify:address:nonce42");
  for (int i = 0; i < 20; ++i) {
    auto m = w.rng.bytes(w.rng.uniform(300));
    auto ct = encrypt(w.s.params, "alice", c, m, w.rng);
    auto rk = rkgen(w.s.params, alice, "dmv.example", c, w.rng);
    auto re = reencrypt(rk, ct);
    EXPECT_EQ(re.level, Level::reencrypted);
    EXPECT_EQ(re.recipient, "dmv.example");
    EXPECT_EQ(re.payload, ct.payload);
    EXPECT_EQ(decrypt(dmv, re, c), decrypt(alice, ct, c));
    EXPECT_TRUE(fails(alice, re, c));
  }
}

TEST(Ibcpre, ReencryptChecksLevelIdentityAndCondition) {
  World w;
  auto alice = w.enroll("alice");
  auto irs = w.enroll("irs");
  w.enroll("dmv");
  ConditionTag c("verify:ssn:1");
  auto rk = rkgen(w.s.params, alice, "dmv", c, w.rng);

  auto other_cond = encrypt(w.s.params, "alice", ConditionTag("verify:ssn:2"), to_bytes("m"), w.rng);
  EXPECT_EQ(error_code([&] { reencrypt(rk, other_cond); }), IbcpreError::Code::condition_mismatch);

  auto for_irs = encrypt(w.s.params, "irs", c, to_bytes("m"), w.rng);
  EXPECT_EQ(error_code([&] { reencrypt(rk, for_irs); }), IbcpreError::Code::identity_mismatch);

  auto once = reencrypt(rk, encrypt(w.s.params, "alice", c, to_bytes("m"), w.rng));
  EXPECT_EQ(error_code([&] { reencrypt(rk, once); }), IbcpreError::Code::level_mismatch);
  auto irs_rk = rkgen(w.s.params, irs, "alice", c, w.rng);
  EXPECT_EQ(error_code([&] { reencrypt(irs_rk, once); }), IbcpreError::Code::level_mismatch);

  EXPECT_EQ(error_code([&] { rkgen(w.s.params, alice, "alice", c, w.rng); }),
            IbcpreError::Code::self_delegation);
}

TEST(Ibcpre, ConditionBindingHoldsWithForgedCommitment) {
  // A proxy that rewrites the commitment to slip past the metadata check
  // still produces a ciphertext the delegatee cannot open.
  World w;
  auto alice = w.enroll("alice");
  auto dmv = w.enroll("dmv");
  ConditionTag c("verify:a"), c2("verify:b");
  auto ct = encrypt(w.s.params, "alice", c2, to_bytes("m"), w.rng);
  ct.condition_commitment = condition_commitment(c, "alice");
  auto re = reencrypt(rkgen(w.s.params, alice, "dmv", c, w.rng), ct);
  EXPECT_TRUE(fails(dmv, re, c));
  EXPECT_TRUE(fails(dmv, re, c2));
}

TEST(Ibcpre, ProxyStateDoesNotDecrypt) {
  World w;
  auto alice = w.enroll("alice");
  auto idp = w.enroll("idp-1");
  w.enroll("dmv");
  ConditionTag c("verify:address:7");
  auto ct = encrypt(w.s.params, "alice", c, to_bytes("document"), w.rng);
  auto rk = rkgen(w.s.params, alice, "dmv", c, w.rng);
  auto re = reencrypt(rk, ct);
  EXPECT_TRUE(fails(idp, ct, c));
  EXPECT_TRUE(fails(idp, re, c));
  // Treat the translation scalar itself as a key for either identity.
  auto t = ec::Scalar::must(ByteView(rk.translation_token).subspan(33));
  EXPECT_TRUE(fails(IdentitySecretKey{"alice", t}, ct, c));
  EXPECT_TRUE(fails(IdentitySecretKey{"dmv", t}, re, c));
}

TEST(Ibcpre, SingleByteTamperSweep) {
  World w;
  auto alice = w.enroll("alice");
  auto dmv = w.enroll("dmv");
  ConditionTag c("verify:dob");
  auto ct = encrypt(w.s.params, "alice", c, to_bytes("1990-01-01"), w.rng);
  auto re = reencrypt(rkgen(w.s.params, alice, "dmv", c, w.rng), ct);
  for (auto [key, bytes] : {std::pair{alice, ct.serialize()}, std::pair{dmv, re.serialize()}}) {
    ASSERT_NO_THROW(decrypt(key, bytes, c));
    for (std::size_t i = 0; i < bytes.size(); ++i) {
      for (std::uint8_t flip : {0x01, 0x80}) {
        auto t = bytes;
        t[i] ^= flip;
        EXPECT_THROW(decrypt(key, t, c), DecryptionFailed) << "byte " << i;
      }
    }
    EXPECT_THROW(decrypt(key, ByteView(bytes).first(bytes.size() - 1), c), DecryptionFailed);
  }
}

TEST(Ibcpre, SerializationRoundTrips) {
  World w;
  auto alice = w.enroll("alice");
  w.enroll("dmv");
  ConditionTag c("verify:x");
  auto ct = encrypt(w.s.params, "alice", c, to_bytes("abc"), w.rng);
  EXPECT_EQ(Envelope::parse(ct.serialize()), ct);
  auto rk = rkgen(w.s.params, alice, "dmv", c, w.rng);
  auto rk2 = ReEncryptionKey::parse(rk.serialize());
  EXPECT_EQ(rk2.translation_token, rk.translation_token);
  EXPECT_EQ(rk2.condition, rk.condition);
  EXPECT_EQ(reencrypt(rk2, ct), reencrypt(rk, ct));
  auto bytes = ct.serialize();
  EXPECT_EQ(bytes[0], kEnvelopeVersion);
  EXPECT_EQ(bytes.size(), 1 + 1 + 2 + 5 + 32 + 33 + 2 + 48 + 4 + 3 + 16u);
}
