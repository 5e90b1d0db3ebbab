#include <gtest/gtest.h>

#include "fedid/crypto.hpp"
#include "fedid/ec.hpp"

using namespace fedid;

TEST(Bytes, HexRoundTripAndStrictness) {
  Bytes data = {0x00, 0x01, 0xab, 0xff};
  EXPECT_EQ(to_hex(data), "0001abff");
  EXPECT_EQ(from_hex("0001abff"), data);
  EXPECT_THROW(from_hex("0001ABFF"), DecodeError);
  EXPECT_THROW(from_hex("abc"), DecodeError);
  EXPECT_THROW(from_hex("zz"), DecodeError);
}

TEST(Bytes, ReaderRejectsTruncation) {
  Writer w;
  w.u32(7).str16("hello");
  auto data = w.data();
  Reader r(data);
  EXPECT_EQ(r.u32(), 7u);
  EXPECT_EQ(r.str16(), "hello");
  r.expect_done();

  Reader shortr(ByteView(data).first(data.size() - 1));
  shortr.u32();
  EXPECT_THROW(shortr.str16(), DecodeError);
}

TEST(Crypto, Sha256Abc) {
  EXPECT_EQ(to_hex(sha256(as_bytes("abc"))),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Crypto, Hash160) {
  // RIPEMD160(SHA256("abc"))
  EXPECT_EQ(to_hex(hash160(as_bytes("abc"))), "bb1be98c142444d7a56aa3981c3942a978e4dc33");
}

TEST(Crypto, Base32Rfc4648) {
  EXPECT_EQ(base32_encode(to_bytes("foobar")), "MZXW6YTBOI");
  EXPECT_EQ(base32_encode(to_bytes("f")), "MY");
  EXPECT_EQ(to_string(base32_decode("MZXW6YTBOI======")), "foobar");
  EXPECT_EQ(to_string(base32_decode("mzxw6ytboi")), "foobar");
  EXPECT_THROW(base32_decode("M1"), DecodeError);
}

TEST(Crypto, Base58CheckRoundTripAndChecksum) {
  Bytes payload = {0x00, 0x00, 0x01, 0x02, 0x03};
  auto text = base58check_encode(payload);
  EXPECT_EQ(text.substr(0, 2), "11");
  EXPECT_EQ(base58check_decode(text), payload);
  auto bad = text;
  bad.back() = bad.back() == 'a' ? 'b' : 'a';
  EXPECT_THROW(base58check_decode(bad), DecodeError);
  EXPECT_THROW(base58check_decode("0OIl"), DecodeError);
}

TEST(Crypto, AeadRejectsAnyTamper) {
  AeadKey key{};
  key[0] = 9;
  AeadNonce nonce{};
  auto sealed = aead_seal(key, nonce, to_bytes("identity document"), to_bytes("aad"));
  auto opened = aead_open(key, nonce, sealed.ciphertext, sealed.tag, to_bytes("aad"));
  ASSERT_TRUE(opened);
  EXPECT_EQ(to_string(*opened), "identity document");

  EXPECT_FALSE(aead_open(key, nonce, sealed.ciphertext, sealed.tag, to_bytes("aae")));
  for (std::size_t i = 0; i < sealed.ciphertext.size(); ++i) {
    auto ct = sealed.ciphertext;
    ct[i] ^= 0x01;
    EXPECT_FALSE(aead_open(key, nonce, ct, sealed.tag, to_bytes("aad")));
  }
  auto tag = sealed.tag;
  tag[15] ^= 0x80;
  EXPECT_FALSE(aead_open(key, nonce, sealed.ciphertext, tag, to_bytes("aad")));
}

TEST(Crypto, DrbgIsDeterministicPerSeedAndForksIndependently) {
  auto a = Drbg::from_seed(42);
  auto b = Drbg::from_seed(42);
  auto c = Drbg::from_seed(43);
  auto xa = a.bytes(48);
  EXPECT_EQ(xa, b.bytes(48));
  EXPECT_NE(xa, c.bytes(48));

  auto p1 = Drbg::from_seed(1);
  auto p2 = Drbg::from_seed(1);
  auto f1 = p1.fork("alice");
  auto f2 = p2.fork("bob");
  EXPECT_NE(f1.bytes(16), f2.bytes(16));

  for (int i = 0; i < 1000; ++i) EXPECT_LT(a.uniform(7), 7u);
}

TEST(Ec, ScalarRangeChecks) {
  std::array<std::uint8_t, 32> zero{};
  EXPECT_FALSE(ec::Scalar::from_bytes(zero));
  EXPECT_FALSE(ec::Scalar::from_bytes(ec::kOrder));
  auto n_minus_1 = ec::kOrder;
  n_minus_1[31] -= 1;
  auto s = ec::Scalar::from_bytes(n_minus_1);
  ASSERT_TRUE(s);
  std::array<std::uint8_t, 32> one{};
  one[31] = 1;
  EXPECT_FALSE(s->add(ec::Scalar::must(one)));  // (n-1)+1 = 0
}

TEST(Ec, InverseAndGroupLaws) {
  Drbg rng = Drbg::from_seed(5);
  for (int i = 0; i < 50; ++i) {
    auto a = ec::hash_to_scalar("t", rng.bytes(32));
    auto b = ec::hash_to_scalar("t", rng.bytes(32));
    std::array<std::uint8_t, 32> one{};
    one[31] = 1;
    EXPECT_EQ(a.mul(a.inverse()), ec::Scalar::must(one));
    // (a+b)G = aG + bG ; (ab)G = b(aG)
    auto sum = a.add(b);
    ASSERT_TRUE(sum);
    EXPECT_EQ(ec::Point::base_mul(*sum), ec::Point::base_mul(a).add(ec::Point::base_mul(b)));
    EXPECT_EQ(ec::Point::base_mul(a.mul(b)), ec::Point::base_mul(a).mul(b));
    EXPECT_EQ(ec::Point::base_mul(*sum), ec::Point::base_mul(a).add_base_mul(b));
  }
  auto a = ec::hash_to_scalar("t", as_bytes("x"));
  EXPECT_FALSE(ec::Point::base_mul(a).add(ec::Point::base_mul(a.negate())));
}

TEST(Ec, PointParseRejectsGarbage) {
  std::array<std::uint8_t, 33> bad{};
  bad[0] = 0x02;
  bad[1] = 0xff;
  std::fill(bad.begin() + 1, bad.end(), 0xff);  // x >= p
  EXPECT_FALSE(ec::Point::parse(bad));
  bad[0] = 0x05;
  EXPECT_FALSE(ec::Point::parse(bad));
}
