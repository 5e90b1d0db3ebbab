#include "fedid/ledger.hpp"

#include <algorithm>
#include <istream>
#include <iterator>
#include <ostream>
#include <sstream>
#include <tuple>

#include "fedid/crypto.hpp"

namespace fedid::ledger {

using Code = LedgerError::Code;

namespace {

Bytes u64_field(std::uint64_t v) {
  Writer w;
  w.u64(v);
  return std::move(w).take();
}

bool valid_channel_id(std::string_view id) {
  if (id.empty() || id.size() > 64) return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
           c == '_' || c == '.';
  });
}

ec::Point read_point(Reader& r) {
  auto p = ec::Point::parse(r.raw(33));
  if (!p) throw DecodeError("invalid curve point");
  return *p;
}

}  // namespace

std::string_view to_string(TxKind k) {
  return k == TxKind::data_access ? "data_access" : "recertification";
}

std::string_view to_string(Outcome o) { return o == Outcome::verified ? "verified" : "mismatch"; }

TxKind TransactionRecord::kind() const {
  return std::holds_alternative<DataAccessDetails>(payload) ? TxKind::data_access
                                                            : TxKind::recertification;
}

Bytes TransactionRecord::serialize() const {
  Writer w;
  w.u8(static_cast<std::uint8_t>(kind()))
      .u64(static_cast<std::uint64_t>(timestamp))
      .raw(txn_pubkey.compressed())
      .str16(data_owner_id);
  if (const auto* da = std::get_if<DataAccessDetails>(&payload)) {
    w.str16(da->idp_id).str16(da->sp_id).u16(static_cast<std::uint16_t>(da->requested_attributes.size()));
    for (const auto& a : da->requested_attributes) w.str16(a);
    w.u8(static_cast<std::uint8_t>(da->outcome));
  } else {
    w.str16(std::get<RecertificationDetails>(payload).attribute);
  }
  return std::move(w).take();
}

TransactionRecord TransactionRecord::parse(Reader& r) {
  const auto kind = r.u8();
  if (kind > 1) throw DecodeError("invalid transaction kind");
  const auto ts = static_cast<Timestamp>(r.u64());
  auto key = read_point(r);
  auto owner = r.str16();
  if (kind == static_cast<std::uint8_t>(TxKind::data_access)) {
    DataAccessDetails da;
    da.idp_id = r.str16();
    da.sp_id = r.str16();
    for (auto n = r.u16(); n > 0; --n) da.requested_attributes.push_back(r.str16());
    const auto outcome = r.u8();
    if (outcome > 1) throw DecodeError("invalid outcome");
    da.outcome = static_cast<Outcome>(outcome);
    return {ts, key, std::move(owner), std::move(da)};
  }
  return {ts, key, std::move(owner), RecertificationDetails{r.str16()}};
}

void ChannelConfig::validate() const {
  if (!valid_channel_id(channel_id)) throw LedgerError(Code::bad_config, "invalid channel id");
  if (members.empty()) throw LedgerError(Code::bad_config, "channel needs at least one member");
  std::set<std::string> ids;
  for (const auto& m : members) {
    if (m.id.empty() || !ids.insert(m.id).second) {
      throw LedgerError(Code::bad_config, "empty or duplicate member id: " + m.id);
    }
  }
  if (quorum < 1 || quorum > members.size()) {
    throw LedgerError(Code::bad_config, "quorum must be between 1 and the member count");
  }
}

const Member* ChannelConfig::find(std::string_view id) const {
  auto it = std::find_if(members.begin(), members.end(), [&](const Member& m) { return m.id == id; });
  return it == members.end() ? nullptr : &*it;
}

Bytes ChannelConfig::serialize() const {
  Writer w;
  w.str16(channel_id).u16(static_cast<std::uint16_t>(members.size()));
  for (const auto& m : members) w.str16(m.id).raw(m.key.compressed());
  w.u32(quorum);
  return std::move(w).take();
}

ChannelConfig ChannelConfig::parse(ByteView bytes) {
  Reader r(bytes);
  ChannelConfig c{r.str16(), {}, 0};
  for (auto n = r.u16(); n > 0; --n) {
    auto id = r.str16();
    c.members.push_back({std::move(id), read_point(r)});
  }
  c.quorum = r.u32();
  r.expect_done();
  return c;
}

Hash256 ChannelConfig::digest() const { return tagged_hash("fedid/ledger/config", {serialize()}); }

Hash256 Block::hash(const Hash256& config_digest) const {
  const auto h = u64_field(height);
  const auto t = u64_field(static_cast<std::uint64_t>(timestamp));
  return tagged_hash("fedid/ledger/block", {config_digest, h, prev_hash, t, tx_root});
}

Bytes Block::serialize() const {
  Writer w;
  w.u64(height).raw(prev_hash).u64(static_cast<std::uint64_t>(timestamp)).u32(
      static_cast<std::uint32_t>(txs.size()));
  for (const auto& tx : txs) w.raw(tx.serialize());
  w.raw(tx_root).u16(static_cast<std::uint16_t>(endorsements.size()));
  for (const auto& e : endorsements) w.str16(e.member_id).raw(e.signature.compact());
  return std::move(w).take();
}

Block Block::parse(ByteView bytes) {
  Reader r(bytes);
  Block b{r.u64(), r.fixed<32>(), static_cast<Timestamp>(r.u64()), {}, {}, {}};
  for (auto n = r.u32(); n > 0; --n) b.txs.push_back(TransactionRecord::parse(r));
  b.tx_root = r.fixed<32>();
  for (auto n = r.u16(); n > 0; --n) {
    auto id = r.str16();
    b.endorsements.push_back({std::move(id), ec::Signature::from_compact(r.raw(64))});
  }
  r.expect_done();
  auto round = b.serialize();
  if (!std::equal(round.begin(), round.end(), bytes.begin(), bytes.end())) {
    throw DecodeError("non-canonical block encoding");
  }
  return b;
}

Hash256 merkle_root(const std::vector<TransactionRecord>& txs) {
  if (txs.empty()) return tagged_hash("fedid/ledger/empty", {});
  std::vector<Hash256> level;
  for (const auto& tx : txs) level.push_back(tagged_hash("fedid/ledger/leaf", {tx.serialize()}));
  while (level.size() > 1) {
    std::vector<Hash256> next;
    for (std::size_t i = 0; i + 1 < level.size(); i += 2) {
      next.push_back(tagged_hash("fedid/ledger/node", {level[i], level[i + 1]}));
    }
    if (level.size() % 2 == 1) next.push_back(level.back());
    level = std::move(next);
  }
  return level.front();
}

Ledger Ledger::genesis(const ChannelConfig& config, Timestamp timestamp) {
  config.validate();
  Ledger l(config);
  l.blocks_.push_back({0, Hash256{}, timestamp, {}, merkle_root({}), {}});
  return l;
}

const TransactionRecord& Ledger::queue(TransactionRecord tx) {
  if (!used_keys_.insert(tx.txn_pubkey).second) {
    throw LedgerError(Code::counter_reuse, "transaction key already used under this owner key");
  }
  pending_.push_back(std::move(tx));
  return pending_.back();
}

TransactionRecord data_access_record(const hd::ExtendedPublicKey& owner_key, std::uint32_t counter,
                                     std::string_view owner_id, Timestamp timestamp,
                                     DataAccessDetails details) {
  return {timestamp, hd::layout::transaction_key(owner_key, counter).point(), std::string(owner_id),
          std::move(details)};
}

TransactionRecord recertification_record(const hd::ExtendedPublicKey& owner_key, std::uint32_t counter,
                                         std::string_view owner_id, Timestamp timestamp,
                                         std::string_view attribute) {
  return {timestamp, hd::layout::transaction_key(owner_key, counter).point(), std::string(owner_id),
          RecertificationDetails{std::string(attribute)}};
}

const TransactionRecord& Ledger::record_data_access(const hd::ExtendedPublicKey& owner_key,
                                                    std::uint32_t counter, std::string_view owner_id,
                                                    Timestamp timestamp, DataAccessDetails details) {
  return queue(data_access_record(owner_key, counter, owner_id, timestamp, std::move(details)));
}

const TransactionRecord& Ledger::record_recertification(const hd::ExtendedPublicKey& owner_key,
                                                        std::uint32_t counter,
                                                        std::string_view owner_id, Timestamp timestamp,
                                                        std::string_view attribute) {
  return queue(recertification_record(owner_key, counter, owner_id, timestamp, attribute));
}

const Block& Ledger::commit_block(Timestamp timestamp, const std::vector<Signer>& signers) {
  std::set<std::string> seen;
  for (const auto& s : signers) {
    const Member* m = config_.find(s.member_id);
    if (m == nullptr || ec::Point::base_mul(s.key) != m->key) {
      throw LedgerError(Code::unknown_signer, "signer is not a channel member: " + s.member_id);
    }
    if (!seen.insert(s.member_id).second) {
      throw LedgerError(Code::duplicate_signer, "duplicate signer: " + s.member_id);
    }
  }
  if (seen.size() < config_.quorum) {
    throw LedgerError(Code::insufficient_endorsements,
                      "need " + std::to_string(config_.quorum) + " endorsements, got " +
                          std::to_string(seen.size()));
  }
  const auto digest = config_.digest();
  const auto& prev = blocks_.back();
  Block b{prev.height + 1, prev.hash(digest), timestamp, std::move(pending_), {}, {}};
  pending_.clear();
  b.tx_root = merkle_root(b.txs);
  const auto h = b.hash(digest);
  for (const auto& s : signers) b.endorsements.push_back({s.member_id, ec::ecdsa_sign(s.key, h)});
  blocks_.push_back(std::move(b));
  index_block(blocks_.back());
  return blocks_.back();
}

// Indexed by position in blocks_, not the block's own height field, so a loaded ledger with a damaged
// height still indexes safely.
void Ledger::index_block(const Block& b) {
  const auto position = static_cast<std::uint64_t>(blocks_.size() - 1);
  for (std::size_t i = 0; i < b.txs.size(); ++i) {
    used_keys_.insert(b.txs[i].txn_pubkey);
    by_key_.emplace(b.txs[i].txn_pubkey, std::make_pair(position, i));
  }
}

std::optional<std::string> Ledger::find_defect() const {
  try {
    config_.validate();
  } catch (const LedgerError& e) {
    return std::string("config: ") + e.what();
  }
  if (blocks_.empty()) return "no genesis block";
  const auto digest = config_.digest();
  std::set<ec::Point> keys;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const auto& b = blocks_[i];
    const auto where = "block " + std::to_string(i) + ": ";
    if (b.height != i) return where + "height out of sequence";
    if (i == 0) {
      if (b.prev_hash != Hash256{}) return where + "genesis prev_hash is not zero";
      if (!b.txs.empty() || !b.endorsements.empty()) return where + "genesis must be empty";
    } else if (b.prev_hash != blocks_[i - 1].hash(digest)) {
      return where + "prev_hash does not match";
    }
    if (b.tx_root != merkle_root(b.txs)) return where + "tx_root does not match";
    for (const auto& tx : b.txs) {
      if (!keys.insert(tx.txn_pubkey).second) return where + "transaction key reused";
    }
    if (i == 0) continue;
    const auto h = b.hash(digest);
    std::set<std::string> endorsers;
    for (const auto& e : b.endorsements) {
      const Member* m = config_.find(e.member_id);
      if (m == nullptr) return where + "endorsement by non-member " + e.member_id;
      if (!endorsers.insert(e.member_id).second) return where + "duplicate endorsement";
      if (!ec::ecdsa_verify(m->key, h, e.signature)) return where + "endorsement does not verify";
    }
    if (endorsers.size() < config_.quorum) return where + "endorsements below quorum";
  }
  return std::nullopt;
}

std::vector<LocatedRecord> Ledger::locate_by_parent_key(const hd::ExtendedPublicKey& parent,
                                                        std::uint32_t gap_limit) const {
  if (gap_limit == 0) throw LedgerError(Code::bad_gap_limit, "gap limit must be at least 1");
  std::vector<LocatedRecord> out;
  std::uint32_t misses = 0;
  for (std::uint32_t j = 0; misses < gap_limit && j < hd::kHardenedBit; ++j) {
    auto it = by_key_.find(hd::ckd_pub(parent, j).point());
    if (it == by_key_.end()) {
      ++misses;
      continue;
    }
    misses = 0;
    const auto [position, index] = it->second;
    const auto& block = blocks_[position];
    out.push_back({block.height, index, block.txs[index]});
  }
  std::sort(out.begin(), out.end(), [](const LocatedRecord& a, const LocatedRecord& b) {
    return std::tie(a.height, a.index) < std::tie(b.height, b.index);
  });
  return out;
}

std::vector<TransactionRecord> Ledger::trace_by_parent_key(const hd::ExtendedPublicKey& parent,
                                                           std::uint32_t gap_limit) const {
  std::vector<TransactionRecord> out;
  for (auto& l : locate_by_parent_key(parent, gap_limit)) out.push_back(std::move(l.record));
  return out;
}

std::vector<TransactionRecord> Ledger::trace_by_parent_key(const hd::ExtendedPrivateKey& data_access_root,
                                                           std::uint32_t gap_limit) const {
  if (gap_limit == 0) throw LedgerError(Code::bad_gap_limit, "gap limit must be at least 1");
  std::vector<LocatedRecord> all;
  std::uint32_t misses = 0;
  for (std::uint32_t d = 0; misses < gap_limit && d < hd::kHardenedBit; ++d) {
    auto owner = hd::neuter(hd::layout::data_owner_key(data_access_root, d));
    auto found = locate_by_parent_key(owner, gap_limit);
    misses = found.empty() ? misses + 1 : 0;
    std::move(found.begin(), found.end(), std::back_inserter(all));
  }
  std::sort(all.begin(), all.end(), [](const LocatedRecord& a, const LocatedRecord& b) {
    return std::tie(a.height, a.index) < std::tie(b.height, b.index);
  });
  std::vector<TransactionRecord> out;
  for (auto& l : all) out.push_back(std::move(l.record));
  return out;
}

std::optional<Recertification> Ledger::latest_recertification(const hd::ExtendedPublicKey& owner_key,
                                                              std::string_view attribute,
                                                              std::uint32_t gap_limit) const {
  std::optional<Recertification> latest;
  for (const auto& l : locate_by_parent_key(owner_key, gap_limit)) {
    const auto* rc = std::get_if<RecertificationDetails>(&l.record.payload);
    if (rc == nullptr || rc->attribute != attribute) continue;
    if (!latest || l.record.timestamp >= latest->timestamp) latest = {l.record.timestamp, l.height};
  }
  return latest;
}

void Ledger::persist(std::ostream& out) const {
  out << kFormatMagic << ' ' << kFormatVersion << ' ' << config_.channel_id << '\n';
  out << to_hex(config_.serialize()) << '\n';
  for (const auto& b : blocks_) out << to_hex(b.serialize()) << '\n';
}

std::string Ledger::persist() const {
  std::ostringstream os;
  persist(os);
  return os.str();
}

Ledger Ledger::load(std::string_view text) {
  if (text.empty() || text.back() != '\n') throw ParseError("header: file must end with a newline");
  std::vector<std::string_view> lines;
  for (std::size_t pos = 0; pos < text.size();) {
    auto nl = text.find('\n', pos);
    lines.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  if (lines.size() < 3) throw ParseError("header: missing config or genesis line");

  const std::string prefix = std::string(kFormatMagic) + ' ' + std::to_string(kFormatVersion) + ' ';
  if (lines[0].substr(0, prefix.size()) != prefix) throw ParseError("header: unrecognized format line");
  const auto channel = lines[0].substr(prefix.size());

  ChannelConfig config;
  try {
    config = ChannelConfig::parse(from_hex(lines[1]));
    config.validate();
  } catch (const std::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  if (config.channel_id != channel) throw ParseError("header: channel id does not match config");

  Ledger l(std::move(config));
  for (std::size_t i = 2; i < lines.size(); ++i) {
    const auto height = i - 2;
    try {
      l.blocks_.push_back(Block::parse(from_hex(lines[i])));
    } catch (const std::exception& e) {
      throw ParseError("block " + std::to_string(height) + ": " + e.what());
    }
    l.index_block(l.blocks_.back());
  }
  return l;
}

Ledger Ledger::load(std::istream& in) {
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return load(text);
}

}  // namespace fedid::ledger
