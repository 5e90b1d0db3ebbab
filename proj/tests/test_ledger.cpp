#include <gtest/gtest.h>

#include "fedid/ledger.hpp"
#include "oracles.hpp"

using namespace fedid;
using namespace fedid::ledger;

namespace {

constexpr Timestamp kT0 = 1'700'000'000;

struct Consortium {
  std::vector<hd::ExtendedPrivateKey> keys;
  ChannelConfig config;

  explicit Consortium(std::uint32_t quorum = 2, int members = 3) {
    auto root = hd::master_from_seed(Bytes(32, 0x11));
    config.channel_id = "gov-channel";
    config.quorum = quorum;
    for (int i = 0; i < members; ++i) {
      keys.push_back(hd::ckd_priv(root, static_cast<std::uint32_t>(i), true));
      config.members.push_back({"member-" + std::to_string(i), keys.back().point()});
    }
  }

  std::vector<Signer> signers(std::size_t n) const {
    std::vector<Signer> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back({config.members[i].id, keys[i].scalar()});
    return out;
  }
};

hd::ExtendedPrivateKey user_root(std::uint8_t tag) {
  return hd::layout::RootKeys::from_seed(Bytes(32, tag)).data_access;
}

DataAccessDetails access(std::vector<std::string> attrs) {
  return {"idp-1", "sp-shop", std::move(attrs), Outcome::verified};
}

// Five blocks: genesis plus four with a mix of record kinds.
Ledger five_blocks(const Consortium& c) {
  auto l = Ledger::genesis(c.config, kT0);
  auto alice = hd::neuter(hd::layout::data_owner_key(user_root(1), 0));
  auto bob = hd::neuter(hd::layout::data_owner_key(user_root(2), 0));
  std::uint32_t ja = 0, jb = 0;
  for (int b = 1; b <= 4; ++b) {
    l.record_recertification(alice, ja++, "dmv", kT0 + b, "address");
    l.record_data_access(bob, jb++, "dmv", kT0 + b, access({"dob", "address"}));
    if (b % 2 == 0) l.record_data_access(alice, ja++, "dmv", kT0 + b, access({"dob"}));
    l.commit_block(kT0 + 10 * b, c.signers(2));
  }
  return l;
}

// SHA-256 of (u16 tag length, tag, then u32 length + bytes per field).
oracle::Bytes tagged(const std::string& tag, const std::vector<oracle::Bytes>& fields) {
  oracle::Bytes buf{static_cast<std::uint8_t>(tag.size() >> 8), static_cast<std::uint8_t>(tag.size())};
  buf.insert(buf.end(), tag.begin(), tag.end());
  for (const auto& f : fields) {
    for (int s = 24; s >= 0; s -= 8) buf.push_back(static_cast<std::uint8_t>(f.size() >> s));
    buf.insert(buf.end(), f.begin(), f.end());
  }
  return oracle::digest(EVP_sha256(), buf);
}

}  // namespace

TEST(Ledger, GenesisShape) {
  Consortium c;
  auto l = Ledger::genesis(c.config, kT0);
  EXPECT_EQ(l.tip_height(), 0u);
  EXPECT_EQ(l.blocks()[0].prev_hash, Hash256{});
  EXPECT_TRUE(l.blocks()[0].txs.empty());
  EXPECT_TRUE(l.verify_chain());
  auto again = Ledger::genesis(c.config, kT0);
  EXPECT_EQ(again.blocks()[0].hash(c.config.digest()), l.blocks()[0].hash(c.config.digest()));
  EXPECT_EQ(again.persist(), l.persist());
}

TEST(Ledger, ConfigValidation) {
  Consortium c;
  auto bad = c.config;
  bad.quorum = 0;
  EXPECT_THROW(Ledger::genesis(bad, kT0), LedgerError);
  bad.quorum = 4;
  EXPECT_THROW(Ledger::genesis(bad, kT0), LedgerError);
  bad = c.config;
  bad.channel_id = "has space";
  EXPECT_THROW(Ledger::genesis(bad, kT0), LedgerError);
  bad = c.config;
  bad.members.push_back(bad.members[0]);
  EXPECT_THROW(Ledger::genesis(bad, kT0), LedgerError);
}

TEST(Ledger, EndorsementQuorum) {
  Consortium c(2);
  auto l = Ledger::genesis(c.config, kT0);
  EXPECT_THROW(l.commit_block(kT0 + 1, c.signers(1)), LedgerError);
  auto stranger = hd::master_from_seed(Bytes(32, 0x99));
  EXPECT_THROW(l.commit_block(kT0 + 1, {{"member-0", c.keys[0].scalar()}, {"outsider", stranger.scalar()}}),
               LedgerError);
  // Right id, wrong key.
  EXPECT_THROW(l.commit_block(kT0 + 1, {{"member-0", c.keys[0].scalar()}, {"member-1", stranger.scalar()}}),
               LedgerError);
  EXPECT_THROW(l.commit_block(kT0 + 1, {{"member-0", c.keys[0].scalar()}, {"member-0", c.keys[0].scalar()}}),
               LedgerError);
  EXPECT_EQ(l.tip_height(), 0u);
  const auto& b = l.commit_block(kT0 + 1, c.signers(2));
  EXPECT_EQ(b.height, 1u);
  EXPECT_EQ(b.endorsements.size(), 2u);
  EXPECT_TRUE(l.verify_chain());
}

TEST(Ledger, RecordsUsePublicChildren) {
  Consortium c;
  auto l = Ledger::genesis(c.config, kT0);
  auto owner_priv = hd::layout::data_owner_key(user_root(1), 3);
  auto owner = hd::neuter(owner_priv);
  const auto& r1 = l.record_data_access(owner, 0, "dmv", kT0, access({"dob"}));
  EXPECT_EQ(r1.kind(), TxKind::data_access);
  EXPECT_EQ(r1.txn_pubkey, hd::ckd_priv(owner_priv, 0, false).point());
  l.record_recertification(owner, 1, "dmv", kT0, "dob");
  ASSERT_EQ(l.pending().size(), 2u);
  EXPECT_NE(l.pending()[0].txn_pubkey, l.pending()[1].txn_pubkey);
  EXPECT_EQ(l.pending()[1].txn_pubkey, hd::ckd_priv(owner_priv, 1, false).point());

  auto bytes = l.pending()[0].serialize();
  EXPECT_TRUE(contains(bytes, as_bytes("dob")));
  EXPECT_FALSE(contains(bytes, as_bytes("1990-01-01")));

  EXPECT_THROW(l.record_data_access(owner, 0, "dmv", kT0, access({"dob"})), LedgerError);
  l.commit_block(kT0 + 5, c.signers(2));
  EXPECT_TRUE(l.pending().empty());
  EXPECT_THROW(l.record_recertification(owner, 1, "dmv", kT0, "dob"), LedgerError);
}

TEST(Ledger, BlockHashMatchesIndependentRehash) {
  Consortium c;
  auto l = five_blocks(c);
  const auto cfg = c.config.serialize();
  const auto cfg_digest = tagged("fedid/ledger/config", {oracle::Bytes(cfg.begin(), cfg.end())});
  for (std::size_t i = 1; i < l.blocks().size(); ++i) {
    const auto& prev = l.blocks()[i - 1];
    auto raw = prev.serialize();
    std::size_t endorse_len = 2;
    for (const auto& e : prev.endorsements) endorse_len += 2 + e.member_id.size() + 64;
    const auto root_at = raw.size() - endorse_len - 32;
    auto slice = [&](std::size_t from, std::size_t n) {
      return oracle::Bytes(raw.begin() + static_cast<std::ptrdiff_t>(from),
                           raw.begin() + static_cast<std::ptrdiff_t>(from + n));
    };
    auto expect = tagged("fedid/ledger/block",
                         {cfg_digest, slice(0, 8), slice(8, 32), slice(40, 8), slice(root_at, 32)});
    const auto& link = l.blocks()[i].prev_hash;
    EXPECT_EQ(oracle::Bytes(link.begin(), link.end()), expect) << "block " << i;
  }
}

TEST(Ledger, ReorderingTransactionsBreaksRoot) {
  Consortium c;
  auto l = five_blocks(c);
  auto text = l.persist();
  auto blocks = l.blocks();
  ASSERT_GE(blocks[2].txs.size(), 2u);
  std::swap(blocks[2].txs[0], blocks[2].txs[1]);
  EXPECT_NE(merkle_root(blocks[2].txs), blocks[2].tx_root);

  // Same edit through the persisted form.
  std::vector<std::string> lines;
  for (std::size_t pos = 0; pos < text.size();) {
    auto nl = text.find('\n', pos);
    lines.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  lines[2 + 2] = to_hex(blocks[2].serialize());
  std::string edited;
  for (const auto& line : lines) edited += line + "\n";
  auto reloaded = Ledger::load(edited);
  EXPECT_FALSE(reloaded.verify_chain());
  EXPECT_EQ(*reloaded.find_defect(), "block 2: tx_root does not match");
}

TEST(Ledger, PersistRoundTrip) {
  Consortium c;
  auto l = Ledger::genesis(c.config, kT0);
  auto owner = hd::neuter(hd::layout::data_owner_key(user_root(4), 1));
  for (std::uint32_t b = 0; b < 9; ++b) {
    l.record_recertification(owner, b, "dmv", kT0 + b, "address");
    l.commit_block(kT0 + 100 + b, c.signers(2 + b % 2));
  }
  ASSERT_EQ(l.blocks().size(), 10u);
  auto text = l.persist();
  auto back = Ledger::load(text);
  EXPECT_EQ(back, l);
  EXPECT_TRUE(back.verify_chain());
  EXPECT_EQ(back.persist(), text);
  EXPECT_EQ(back.trace_by_parent_key(owner).size(), 9u);
  EXPECT_THROW(back.record_recertification(owner, 4, "dmv", kT0, "address"), LedgerError);
}

TEST(Ledger, ParseErrorsNameTheHeight) {
  Consortium c;
  auto text = five_blocks(c).persist();
  auto line4 = text.find('\n', text.find('\n', text.find('\n', text.find('\n') + 1) + 1) + 1);
  auto truncated = text.substr(0, line4 + 40) + "\n";  // mid block 2
  try {
    Ledger::load(truncated);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("block 2:", 0), 0u) << e.what();
  }
  EXPECT_THROW(Ledger::load(text.substr(0, text.size() - 1)), ParseError);
  EXPECT_THROW(Ledger::load(""), ParseError);
  EXPECT_THROW(Ledger::load("fedid-ledger 2 gov-channel\n"), ParseError);
  auto upper = text;
  for (auto& ch : upper) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  EXPECT_THROW(Ledger::load(upper), ParseError);
}

TEST(Ledger, SampledMutationSweepIsDetected) {
  Consortium c;
  auto text = five_blocks(c).persist();
  std::size_t checked = 0;
  for (std::size_t i = 0; i < text.size(); i += 5) {
    auto t = text;
    t[i] = static_cast<char>(t[i] ^ 0x01);
    bool detected = false;
    try {
      detected = !Ledger::load(t).verify_chain();
    } catch (const ParseError&) {
      detected = true;
    }
    EXPECT_TRUE(detected) << "byte " << i;
    ++checked;
  }
  EXPECT_GT(checked, 100u);
}

TEST(Ledger, TraceMatchesBruteForce) {
  Consortium c;
  auto l = Ledger::genesis(c.config, kT0);
  auto owner = hd::neuter(hd::layout::data_owner_key(user_root(5), 0));
  auto other = hd::neuter(hd::layout::data_owner_key(user_root(6), 0));
  for (std::uint32_t j = 0; j < 3; ++j) {
    l.record_data_access(owner, j, "dmv", kT0 + j, access({"dob"}));
    l.record_data_access(other, j, "dmv", kT0 + j, access({"dob"}));
    l.commit_block(kT0 + 10 + j, c.signers(2));
  }
  std::set<ec::Point> mine;
  for (std::uint32_t j = 0; j < 100; ++j) mine.insert(hd::ckd_pub(owner, j).point());
  std::vector<TransactionRecord> brute;
  for (const auto& b : l.blocks()) {
    for (const auto& tx : b.txs) {
      if (mine.count(tx.txn_pubkey)) brute.push_back(tx);
    }
  }
  EXPECT_EQ(brute.size(), 3u);
  EXPECT_EQ(l.trace_by_parent_key(owner), brute);
  auto unrelated = hd::neuter(hd::layout::data_owner_key(user_root(7), 0));
  EXPECT_TRUE(l.trace_by_parent_key(unrelated).empty());
  EXPECT_THROW(l.trace_by_parent_key(owner, 0), LedgerError);
}

TEST(Ledger, GapLimitIsADocumentedLimitation) {
  Consortium c;
  auto l = Ledger::genesis(c.config, kT0);
  auto owner = hd::neuter(hd::layout::data_owner_key(user_root(8), 0));
  l.record_data_access(owner, 0, "dmv", kT0, access({"dob"}));
  l.record_data_access(owner, 25, "dmv", kT0, access({"dob"}));
  l.commit_block(kT0 + 1, c.signers(2));
  EXPECT_EQ(l.trace_by_parent_key(owner, 20).size(), 1u);
  EXPECT_EQ(l.trace_by_parent_key(owner, 25).size(), 2u);
}

TEST(Ledger, TraceFromDataAccessRootCoversOwners) {
  Consortium c;
  auto l = Ledger::genesis(c.config, kT0);
  auto root = user_root(9);
  auto owner0 = hd::neuter(hd::layout::data_owner_key(root, 0));
  auto owner2 = hd::neuter(hd::layout::data_owner_key(root, 2));
  l.record_recertification(owner0, 0, "dmv", kT0, "dob");
  l.record_recertification(owner2, 0, "bureau", kT0, "dob");
  l.commit_block(kT0 + 1, c.signers(2));
  l.record_data_access(owner2, 1, "bureau", kT0 + 2, access({"dob"}));
  l.record_data_access(owner0, 1, "dmv", kT0 + 2, access({"dob"}));
  l.commit_block(kT0 + 3, c.signers(2));
  auto all = l.trace_by_parent_key(root);
  ASSERT_EQ(all.size(), 4u);
  EXPECT_EQ(all[0].data_owner_id, "dmv");
  EXPECT_EQ(all[2].data_owner_id, "bureau");  // ledger order, not owner order
  EXPECT_EQ(l.trace_by_parent_key(owner2).size(), 2u);
  EXPECT_EQ(l.trace_by_parent_key(root, 1).size(), 2u);  // owner 1 is a gap of one

  auto latest = l.latest_recertification(owner2, "dob");
  ASSERT_TRUE(latest.has_value());
  EXPECT_EQ(latest->height, 1u);
  EXPECT_EQ(latest->timestamp, kT0);
  EXPECT_FALSE(l.latest_recertification(owner2, "address").has_value());
}
