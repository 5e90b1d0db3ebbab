#pragma once

// Permissioned, hash-chained audit ledger for one consortium channel.
//
// Each block commits to the channel configuration, its height, the previous
// block hash, a timestamp and a Merkle root over its transactions; members
// endorse the block hash with ECDSA. Transactions are keyed by pseudonymous
// transaction keys (non-hardened children of a user's data-owner key), so a
// holder of that key can trace them and nobody else can link them.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "fedid/bytes.hpp"
#include "fedid/ec.hpp"
#include "fedid/hdkeys.hpp"

namespace fedid::ledger {

using Timestamp = std::int64_t;

inline constexpr std::uint32_t kDefaultGapLimit = 20;
inline constexpr std::string_view kFormatMagic = "fedid-ledger";
inline constexpr int kFormatVersion = 1;

class LedgerError : public std::runtime_error {
 public:
  enum class Code { bad_config, counter_reuse, insufficient_endorsements, unknown_signer,
                    duplicate_signer, bad_gap_limit };
  LedgerError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

/// Raised by load(); the message names the header, config or block height.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class TxKind : std::uint8_t { data_access = 0, recertification = 1 };
enum class Outcome : std::uint8_t { verified = 0, mismatch = 1 };

std::string_view to_string(TxKind k);
std::string_view to_string(Outcome o);

/// Attribute names and routing metadata only, never attribute values.
struct DataAccessDetails {
  std::string idp_id;
  std::string sp_id;
  std::vector<std::string> requested_attributes;
  Outcome outcome = Outcome::verified;

  friend bool operator==(const DataAccessDetails&, const DataAccessDetails&) = default;
};

struct RecertificationDetails {
  std::string attribute;

  friend bool operator==(const RecertificationDetails&, const RecertificationDetails&) = default;
};

struct TransactionRecord {
  Timestamp timestamp;
  ec::Point txn_pubkey;
  std::string data_owner_id;
  std::variant<DataAccessDetails, RecertificationDetails> payload;

  TxKind kind() const;
  Bytes serialize() const;
  static TransactionRecord parse(Reader& r);

  friend bool operator==(const TransactionRecord&, const TransactionRecord&) = default;
};

struct Member {
  std::string id;
  ec::Point key;

  friend bool operator==(const Member&, const Member&) = default;
};

struct ChannelConfig {
  std::string channel_id;
  std::vector<Member> members;
  std::uint32_t quorum = 1;

  /// Throws LedgerError(bad_config): empty id, duplicate members, quorum outside [1, members].
  void validate() const;
  const Member* find(std::string_view id) const;
  Bytes serialize() const;
  static ChannelConfig parse(ByteView bytes);
  Hash256 digest() const;

  friend bool operator==(const ChannelConfig&, const ChannelConfig&) = default;
};

struct Endorsement {
  std::string member_id;
  ec::Signature signature;

  friend bool operator==(const Endorsement&, const Endorsement&) = default;
};

struct Block {
  std::uint64_t height;
  Hash256 prev_hash;
  Timestamp timestamp;
  std::vector<TransactionRecord> txs;
  Hash256 tx_root;
  std::vector<Endorsement> endorsements;

  /// Hash over (config digest, height, prev_hash, timestamp, tx_root).
  Hash256 hash(const Hash256& config_digest) const;
  Bytes serialize() const;
  /// Strict: rejects trailing bytes and any non-canonical encoding.
  static Block parse(ByteView bytes);

  friend bool operator==(const Block&, const Block&) = default;
};

/// Merkle root with domain-separated leaves and nodes; an odd node is
/// promoted unchanged so duplicated transactions never collide.
Hash256 merkle_root(const std::vector<TransactionRecord>& txs);

struct Signer {
  std::string member_id;
  ec::Scalar key;
};

struct LocatedRecord {
  std::uint64_t height;
  std::size_t index;
  TransactionRecord record;
};

struct Recertification {
  Timestamp timestamp;
  std::uint64_t height;
};

/// Record builders for parties that hold the owner key but not the ledger.
TransactionRecord data_access_record(const hd::ExtendedPublicKey& owner_key, std::uint32_t counter,
                                     std::string_view owner_id, Timestamp timestamp,
                                     DataAccessDetails details);
TransactionRecord recertification_record(const hd::ExtendedPublicKey& owner_key, std::uint32_t counter,
                                         std::string_view owner_id, Timestamp timestamp,
                                         std::string_view attribute);

class Ledger {
 public:
  static Ledger genesis(const ChannelConfig& config, Timestamp timestamp);

  const ChannelConfig& config() const { return config_; }
  const std::vector<Block>& blocks() const { return blocks_; }
  const std::vector<TransactionRecord>& pending() const { return pending_; }
  std::uint64_t tip_height() const { return blocks_.back().height; }

  /// txn_pubkey = ckd_pub(owner_key, counter). Queued until the next commit.
  const TransactionRecord& record_data_access(const hd::ExtendedPublicKey& owner_key,
                                              std::uint32_t counter, std::string_view owner_id,
                                              Timestamp timestamp, DataAccessDetails details);
  const TransactionRecord& record_recertification(const hd::ExtendedPublicKey& owner_key,
                                                  std::uint32_t counter, std::string_view owner_id,
                                                  Timestamp timestamp, std::string_view attribute);

  /// Queues a prebuilt record; throws LedgerError(counter_reuse) on a reused txn_pubkey.
  const TransactionRecord& submit(TransactionRecord tx) { return queue(std::move(tx)); }
  bool key_used(const ec::Point& txn_pubkey) const { return used_keys_.count(txn_pubkey) != 0; }

  /// Appends a block over the pending records. Needs `quorum` distinct members.
  const Block& commit_block(Timestamp timestamp, const std::vector<Signer>& signers);

  /// std::nullopt when every height, link, root and endorsement checks out.
  std::optional<std::string> find_defect() const;
  bool verify_chain() const { return !find_defect(); }

  /// Child indices 0, 1, ... of `parent`, stopping after gap_limit misses in a row.
  std::vector<TransactionRecord> trace_by_parent_key(const hd::ExtendedPublicKey& parent,
                                                     std::uint32_t gap_limit = kDefaultGapLimit) const;
  /// From a Data Access root: hardened owner keys 0, 1, ... with the same gap
  /// rule, each scanned as above. Results are in ledger order.
  std::vector<TransactionRecord> trace_by_parent_key(const hd::ExtendedPrivateKey& data_access_root,
                                                     std::uint32_t gap_limit = kDefaultGapLimit) const;
  std::vector<LocatedRecord> locate_by_parent_key(const hd::ExtendedPublicKey& parent,
                                                  std::uint32_t gap_limit = kDefaultGapLimit) const;

  /// Latest committed recertification of `attribute` under `owner_key`.
  std::optional<Recertification> latest_recertification(const hd::ExtendedPublicKey& owner_key,
                                                         std::string_view attribute,
                                                         std::uint32_t gap_limit = kDefaultGapLimit) const;

  /// Header line, config line, then one line per block, all lowercase hex.
  std::string persist() const;
  void persist(std::ostream& out) const;
  /// Structural parse only; call verify_chain() for integrity.
  static Ledger load(std::string_view text);
  static Ledger load(std::istream& in);

  /// Committed state only; pending records are not persisted.
  friend bool operator==(const Ledger& a, const Ledger& b) {
    return a.config_ == b.config_ && a.blocks_ == b.blocks_;
  }

 private:
  explicit Ledger(ChannelConfig config) : config_(std::move(config)) {}
  const TransactionRecord& queue(TransactionRecord tx);
  void index_block(const Block& b);

  ChannelConfig config_;
  std::vector<Block> blocks_;
  std::vector<TransactionRecord> pending_;
  std::set<ec::Point> used_keys_;
  std::map<ec::Point, std::pair<std::uint64_t, std::size_t>> by_key_;  // committed only, (position, index)
};

}  // namespace fedid::ledger
