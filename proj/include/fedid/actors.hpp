#pragma once

// The five system roles as message-driven state machines on a net::Bus.
//
//   user/<name>        wallet holder; the only party with private key material
//   idp/<id>           identity provider: signup, three-factor login, assertions
//   sp/<id>            service provider: requests claims, applies its policy
//   owner/<id>         data owner (consortium member): verifies documents
//   comm/consortium    communication server: the only path between IDPs and
//                      owners, and the ledger gateway
//
// Flows are started by a `begin_*` call on the user agent and then run purely
// on messages. Every message carries a phase label in the transcript:
//   register, signup, login:password, login:totp, login:key,
//   sp:1 .. sp:9 for a service login, store:1 .. store:4 for storing a
//   verified document at the IDP, recertify for owner-initiated refreshes.
//
// Deployment wires a whole system together for scenario runs and tests.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "fedid/auth.hpp"
#include "fedid/bytes.hpp"
#include "fedid/crypto.hpp"
#include "fedid/hdkeys.hpp"
#include "fedid/ibcpre.hpp"
#include "fedid/ledger.hpp"
#include "fedid/message.hpp"
#include "fedid/netsim.hpp"
#include "fedid/trust.hpp"

namespace fedid::actors {

using Timestamp = std::int64_t;

inline constexpr std::string_view kCommAddress = "comm/consortium";

std::string user_address(std::string_view name);
std::string idp_address(std::string_view id);
std::string sp_address(std::string_view id);
std::string owner_address(std::string_view id);

std::string user_identity(std::string_view name);
std::string idp_identity(std::string_view id);
std::string owner_identity(std::string_view id);

/// "<purpose>:<attribute names sorted, comma separated>:<nonce hex>". Binds
/// an envelope to one flow so re-encryption keys cannot be replayed across flows.
std::string flow_condition(std::string_view purpose, std::vector<std::string> attributes, ByteView nonce);

class ActorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class OfflinePolicy { block, degrade };
std::string_view to_string(OfflinePolicy p);
OfflinePolicy offline_policy_from_string(std::string_view s);

struct AttributeRecord {
  std::string value;
  Timestamp last_recert = 0;
};

/// Held by a data owner, keyed by the pseudo-identifier the user registered.
struct IdentityDocument {
  hd::ExtendedPublicKey registered_owner_key;
  std::map<std::string, AttributeRecord> attributes;
  trust::SourceClass owner_class;
};

/// A level-original envelope the IDP keeps after an owner verified it.
struct StoredDocument {
  std::string owner_id;
  std::string condition;
  std::vector<std::string> attributes;
  Timestamp verified_at = 0;
  ibcpre::Envelope envelope;
};

struct UserProfile {
  std::string username;
  auth::PasswordRecord password;
  auth::TotpSecret totp;
  hd::ExtendedPublicKey registered_idp_xpub;
  std::set<std::uint32_t> used_login_indices;
  std::vector<StoredDocument> stored_documents;
};

struct Claim {
  std::string attribute;
  double threshold = 0.0;
  bool mandatory = true;
};

struct ClaimsRequest {
  std::string sp_id;
  std::vector<Claim> claims;
  Bytes nonce;

  Bytes encode() const;
  static ClaimsRequest decode(ByteView bytes);
  trust::ServicePolicy policy() const;
};

struct RecertInfo {
  std::string attribute;
  Timestamp timestamp = 0;
  std::optional<std::uint64_t> height;  // known only when read from the ledger
};

struct VerificationResult {
  std::string owner_id;
  ledger::Outcome outcome = ledger::Outcome::verified;
  std::vector<RecertInfo> latest_recert;  // empty on the store path
};

Bytes encode_assertions(const std::vector<trust::AttributeAssertion>& assertions);
std::vector<trust::AttributeAssertion> decode_assertions(ByteView bytes);

/// Base for every role: parses each payload as a Message and records handler
/// failures instead of letting one malformed message abort the run.
class Endpoint : public net::Actor {
 public:
  void on_message(net::Bus& bus, const net::Envelope& env) final;
  /// "kind: error" for each message that was rejected.
  const std::vector<std::string>& rejected() const { return rejected_; }

 protected:
  virtual void handle(net::Bus& bus, const net::Envelope& env, const Message& msg) = 0;

 private:
  std::vector<std::string> rejected_;
};

struct Consent {
  std::vector<std::string> attributes;
  std::vector<std::string> owners;
};

// Results the user agent records for the harness.

struct RegisterOutcome {
  bool success = false;
  std::string error;
};

struct SignupOutcome {
  bool success = false;
  std::string error;
  std::string totp_base32;
};

struct LoginOptions {
  std::optional<std::string> password;
  std::optional<std::string> totp_code;
  std::optional<std::uint32_t> index;
};

struct LoginOutcome {
  bool success = false;
  std::string failed_stage;  // password | totp | key
  std::string reason;
  std::uint32_t index = 0;
};

struct SpLoginOptions {
  std::string idp;
  std::optional<std::vector<std::string>> owners;  // defaults to the consent policy
  bool stored = false;                               // use documents stored at the IDP
  std::map<std::string, std::string> claim_overrides;
};

enum class FlowStatus { granted, denied, aborted };
std::string_view to_string(FlowStatus s);

struct SpLoginOutcome {
  FlowStatus status = FlowStatus::aborted;
  int aborted_stage = 0;
  std::string reason;
  std::string nonce_hex;
  std::vector<std::string> owners;  // owners the user selected
};

struct StoreOutcome {
  bool success = false;
  std::string error;
};

class UserAgent : public Endpoint {
 public:
  UserAgent(std::string name, ByteView seed, hd::Mode mode, ibcpre::SystemParams params,
            ibcpre::IdentitySecretKey ibc_key, std::map<std::string, Consent> consent, Drbg rng);

  const std::string& name() const { return name_; }
  std::string address() const { return user_address(name_); }
  const hd::layout::RootKeys& roots() const { return roots_; }
  const ibcpre::IdentitySecretKey& ibc_key() const { return ibc_key_; }
  const std::map<std::string, Consent>& consent() const { return consent_; }

  std::optional<std::uint32_t> owner_index(std::string_view owner) const;
  std::optional<std::uint32_t> idp_index(std::string_view idp) const;
  /// Pseudo-identifier registered with `owner`; throws ActorError if none.
  hd::ExtendedPublicKey owner_key(std::string_view owner) const;
  const std::map<std::string, std::string>* registered_attributes(std::string_view owner) const;
  std::vector<std::string> registered_owners() const;
  /// Every private scalar this user has derived or holds, 32 bytes each.
  std::vector<Bytes> private_scalars() const;

  void begin_register(net::Bus& bus, const std::string& owner, std::map<std::string, std::string> attributes);
  void begin_signup(net::Bus& bus, const std::string& idp, const std::string& username,
                    const std::string& password);
  void begin_login(net::Bus& bus, const std::string& idp, LoginOptions options = {});
  void begin_sp_login(net::Bus& bus, const std::string& sp, SpLoginOptions options);
  void begin_store(net::Bus& bus, const std::string& idp, const std::string& owner,
                   std::vector<std::string> attributes);

  // Each is reset by the matching begin_* and set when the flow finishes.
  const std::optional<RegisterOutcome>& register_outcome() const { return register_outcome_; }
  const std::optional<SignupOutcome>& signup_outcome() const { return signup_outcome_; }
  const std::optional<LoginOutcome>& login_outcome() const { return login_outcome_; }
  const std::optional<SpLoginOutcome>& sp_login_outcome() const { return sp_outcome_; }
  const std::optional<StoreOutcome>& store_outcome() const { return store_outcome_; }

  void on_delivery_failure(net::Bus& bus, const net::Envelope& env) override;

 private:
  struct Registration {
    std::uint32_t index;
    std::map<std::string, std::string> attributes;
    bool confirmed = false;
  };
  struct Account {
    std::uint32_t index;
    std::string username;
    std::string password;
    std::optional<auth::TotpSecret> totp;
    Bytes session;
    std::uint32_t next_login_index = 0;
    std::set<std::uint32_t> used_indices;
  };
  struct PendingSignup {
    std::string idp;
    std::uint32_t index;
    std::string username;
    std::string password;
  };
  struct LoginAttempt {
    std::string idp;
    LoginOptions options;
    std::uint32_t index = 0;
  };
  struct SpFlow {
    std::string sp;
    SpLoginOptions options;
    ClaimsRequest request;
    std::vector<std::string> owners;
  };
  struct StoreFlow {
    std::string idp;
    std::string owner;
    std::vector<std::string> attributes;
  };

  void handle(net::Bus& bus, const net::Envelope& env, const Message& msg) override;
  void on_claims_redirect(net::Bus& bus, const net::Envelope& env, const Message& msg);
  void on_consent_prompt(net::Bus& bus, const Message& msg);
  void on_green_signal(net::Bus& bus, const Message& msg);
  void on_store_nonce(net::Bus& bus, const Message& msg);
  void on_login_step(net::Bus& bus, const net::Envelope& env, const Message& msg);
  void finish_sp(FlowStatus status, int stage, std::string reason);
  hd::ExtendedPrivateKey idp_key(const Account& account) const;
  Bytes document_for(const std::string& owner, const std::vector<std::string>& attributes,
                     const std::map<std::string, std::string>& overrides) const;

  std::string name_;
  hd::layout::RootKeys roots_;
  ibcpre::SystemParams params_;
  ibcpre::IdentitySecretKey ibc_key_;
  std::map<std::string, Consent> consent_;
  Drbg rng_;

  std::map<std::string, Registration, std::less<>> registrations_;
  std::uint32_t next_owner_index_ = 0;
  std::map<std::string, Account, std::less<>> accounts_;
  std::uint32_t next_idp_index_ = 0;
  std::map<std::string, std::string> stored_conditions_;  // condition -> owner

  std::optional<PendingSignup> signup_;

  std::optional<std::string> pending_register_;
  std::optional<LoginAttempt> login_;
  std::optional<SpFlow> flow_;
  std::optional<StoreFlow> store_;

  std::optional<RegisterOutcome> register_outcome_;
  std::optional<SignupOutcome> signup_outcome_;
  std::optional<LoginOutcome> login_outcome_;
  std::optional<SpLoginOutcome> sp_outcome_;
  std::optional<StoreOutcome> store_outcome_;
};

class DataOwner : public Endpoint {
 public:
  DataOwner(std::string id, trust::SourceClass source_class, ibcpre::IdentitySecretKey ibc_key,
            ec::Scalar member_key);

  const std::string& id() const { return id_; }
  std::string address() const { return owner_address(id_); }
  trust::SourceClass source_class() const { return class_; }
  ledger::Signer signer() const { return {id_, member_key_}; }
  ec::Point member_public() const { return ec::Point::base_mul(member_key_); }

  const IdentityDocument* document(const hd::ExtendedPublicKey& key) const;
  std::size_t document_count() const { return documents_.size(); }
  /// Verification requests answered with a data_access record.
  std::size_t verifications() const { return verifications_; }

  /// Refreshes the listed attributes (optionally with new values) and sends
  /// one recertification record each. Throws ActorError for an unknown key or attribute.
  void begin_recertify(net::Bus& bus, const hd::ExtendedPublicKey& key,
                       const std::map<std::string, std::optional<std::string>>& attributes);

  /// Verify a decrypted claim against the stored document.
  VerificationResult verify_identity_claim(const hd::ExtendedPublicKey& key,
                                           const std::map<std::string, std::string>& claimed,
                                           bool include_recert) const;

  Bytes persisted_state() const;


 private:
  void handle(net::Bus& bus, const net::Envelope& env, const Message& msg) override;
  void on_register(net::Bus& bus, const net::Envelope& env, const Message& msg);
  void on_verify_request(net::Bus& bus, const net::Envelope& env, const Message& msg);
  void append(net::Bus& bus, const std::string& phase, ledger::TransactionRecord record,
              const Message* receipt_for);
  std::uint32_t next_counter(const hd::ExtendedPublicKey& key);

  std::string id_;
  trust::SourceClass class_;
  ibcpre::IdentitySecretKey ibc_key_;
  ec::Scalar member_key_;
  std::map<hd::Serialized, IdentityDocument> documents_;
  std::map<hd::Serialized, std::uint32_t> counters_;
  std::size_t verifications_ = 0;
};

class IdentityProvider : public Endpoint {
 public:
  struct Options {
    trust::SourceWeightTable weights = trust::SourceWeightTable::defaults();
    trust::TrustParams trust;
    OfflinePolicy offline_policy = OfflinePolicy::block;
    bool paper_literal_login = false;
  };

  IdentityProvider(std::string id, ibcpre::SystemParams params, ibcpre::IdentitySecretKey ibc_key,
                   std::map<std::string, trust::SourceClass> owner_classes, Options options, Drbg rng);

  const std::string& id() const { return id_; }
  std::string address() const { return idp_address(id_); }
  const ibcpre::IdentitySecretKey& ibc_key() const { return ibc_key_; }
  const UserProfile* profile(std::string_view username) const;
  std::size_t profile_count() const { return profiles_.size(); }
  std::size_t active_flows() const { return flows_.size(); }

  /// Profiles and stored documents; never plaintext attribute values.
  Bytes persisted_state() const;


 private:
  enum class SlotState { pending, verified, mismatch, unavailable, failed, stored };
  struct Slot {
    std::string owner;
    std::string condition;
    std::vector<std::string> attributes;
    Bytes envelope;  // level-original
    SlotState state = SlotState::pending;
    bool receipt = false;
    bool lookup_pending = false;
    std::map<std::string, Timestamp> recert;
    std::map<std::string, std::string> values;  // filled at step 7, discarded with the flow
  };
  struct Flow {
    bool store = false;
    std::string username;
    std::string user;  // bus address
    ClaimsRequest request;
    bool from_storage = false;
    bool released = false;
    std::map<std::string, Slot> slots;
  };
  struct PendingLogin {
    std::string user;
    int passed = 0;  // stages passed so far
    std::optional<std::uint32_t> index;
    Bytes challenge;
  };

  void handle(net::Bus& bus, const net::Envelope& env, const Message& msg) override;
  void on_signup(net::Bus& bus, const net::Envelope& env, const Message& msg);
  void on_login(net::Bus& bus, const net::Envelope& env, const Message& msg);
  void on_claims_request(net::Bus& bus, const net::Envelope& env, const Message& msg);
  void on_consent(net::Bus& bus, const std::string& key, Flow& flow, const Message& msg);
  void on_envelopes(net::Bus& bus, const std::string& key, Flow& flow, const Message& msg);
  void on_reencryption_keys(net::Bus& bus, const std::string& key, Flow& flow, const Message& msg,
                            const std::string& phase);
  void on_idp_keys(net::Bus& bus, const std::string& key, Flow& flow, const Message& msg);
  void on_store_begin(net::Bus& bus, const net::Envelope& env, const Message& msg);
  void on_store_envelope(net::Bus& bus, const std::string& key, Flow& flow, const Message& msg);
  void progress(net::Bus& bus, const std::string& key);
  void finish_assertion(net::Bus& bus, const std::string& key);
  void abort(net::Bus& bus, const std::string& key, int stage, const std::string& reason);
  std::optional<std::string> session_user(ByteView session) const;

  std::string id_;
  ibcpre::SystemParams params_;
  ibcpre::IdentitySecretKey ibc_key_;
  std::map<std::string, trust::SourceClass> owner_classes_;
  Options options_;
  Drbg rng_;

  std::map<std::string, UserProfile, std::less<>> profiles_;
  auth::ReplayGuard totp_guard_;
  std::map<std::string, PendingLogin> logins_;      // by username
  std::map<std::string, std::string> sessions_;     // token hex -> username
  std::set<std::string> seen_nonces_;
  std::map<std::string, Flow> flows_;               // by nonce hex
};

class ServiceProvider : public Endpoint {
 public:
  struct Decision {
    std::string user;
    std::string idp;
    bool finished = false;
    bool granted = false;
    int aborted_stage = 0;
    std::string reason;
    std::vector<trust::AttributeAssertion> assertions;
  };

  ServiceProvider(std::string id, trust::ServicePolicy policy, Drbg rng);

  const std::string& id() const { return id_; }
  std::string address() const { return sp_address(id_); }
  const trust::ServicePolicy& policy() const { return policy_; }
  const Decision* decision(std::string_view nonce_hex) const;
  Bytes persisted_state() const;


 private:
  void handle(net::Bus& bus, const net::Envelope& env, const Message& msg) override;

  std::string id_;
  trust::ServicePolicy policy_;
  Drbg rng_;
  std::map<std::string, Decision, std::less<>> decisions_;  // by nonce hex
};

class CommServer : public Endpoint {
 public:
  explicit CommServer(ledger::Ledger ledger) : ledger_(std::move(ledger)) {}

  std::string address() const { return std::string(kCommAddress); }
  ledger::Ledger& ledger() { return ledger_; }
  const ledger::Ledger& ledger() const { return ledger_; }
  /// Envelopes forwarded from an IDP to an owner.
  std::size_t forwarded_to_owners() const { return forwarded_to_owners_; }
  Bytes persisted_state() const { return to_bytes(ledger_.persist()); }

  void on_delivery_failure(net::Bus& bus, const net::Envelope& env) override;

 private:
  void handle(net::Bus& bus, const net::Envelope& env, const Message& msg) override;

  ledger::Ledger ledger_;
  std::size_t forwarded_to_owners_ = 0;
};

// Deployment: one consortium channel, a KGC for IBCPRE identities, and the actors.

struct OwnerSpec {
  std::string id;
  trust::SourceClass source_class = trust::SourceClass::other;
};

struct SpSpec {
  std::string id;
  trust::ServicePolicy policy;
};

struct UserSpec {
  std::string name;
  Bytes seed;  // 16..64 bytes
  std::map<std::string, Consent> consent;
};

struct DeploymentConfig {
  std::uint64_t seed = 0;
  hd::Mode mode = hd::Mode::multiplicative;
  bool paper_literal_login = false;
  Timestamp start_time = 0;
  trust::SourceWeightTable weights = trust::SourceWeightTable::defaults();
  trust::TrustParams trust;
  std::string channel_id = "consortium";
  std::uint32_t quorum = 1;
  OfflinePolicy offline_policy = OfflinePolicy::block;
  std::vector<OwnerSpec> owners;
  std::vector<std::string> idps;
  std::vector<SpSpec> sps;
  std::vector<UserSpec> users;
  net::FaultConfig faults;
  std::size_t max_steps = net::kDefaultMaxSteps;
};

/// Records added to the ledger (pending or committed) during a step.
struct LedgerDelta {
  std::size_t data_access = 0;
  std::size_t data_access_verified = 0;
  std::size_t recertification = 0;
};

struct StepReport {
  LedgerDelta ledger;
  std::size_t messages = 0;
  std::size_t owner_contacts = 0;  // distinct owner/ addresses that received a message
  std::size_t blocks_committed = 0;
};

class Deployment {
 public:
  explicit Deployment(DeploymentConfig config);
  Deployment(const Deployment&) = delete;
  Deployment& operator=(const Deployment&) = delete;

  // Scenario steps. Each runs the bus to idle, then commits pending ledger
  // records if enough consortium members are online.
  RegisterOutcome register_user(const std::string& user, const std::string& owner,
                                std::map<std::string, std::string> attributes);
  SignupOutcome signup(const std::string& user, const std::string& idp, const std::string& username,
                       const std::string& password);
  LoginOutcome login(const std::string& user, const std::string& idp, LoginOptions options = {});
  SpLoginOutcome sp_login(const std::string& user, const std::string& sp, SpLoginOptions options);
  StoreOutcome store_identity(const std::string& user, const std::string& idp, const std::string& owner,
                              std::vector<std::string> attributes);
  void recertify(const std::string& owner, const std::string& user,
                 const std::map<std::string, std::optional<std::string>>& attributes);
  void advance_clock(std::int64_t seconds);
  void set_offline(const std::string& address, bool offline);

  /// Records reachable from the user's Data Access root.
  std::vector<ledger::TransactionRecord> trace(const std::string& user,
                                               std::uint32_t gap_limit = ledger::kDefaultGapLimit) const;
  bool verify_chain() const { return comm_->ledger().verify_chain(); }
  /// Endorses pending records with every online owner; false if below quorum.
  bool commit();

  const StepReport& last_step() const { return last_step_; }
  /// Assertions the SP received in the user's latest service login.
  std::vector<trust::AttributeAssertion> last_assertions(const std::string& user, const std::string& sp) const;

  const DeploymentConfig& config() const { return config_; }
  net::Bus& bus() { return bus_; }
  const net::Bus& bus() const { return bus_; }
  const ibcpre::SystemParams& params() const { return kgc_.params; }
  const ledger::Ledger& ledger() const { return comm_->ledger(); }
  UserAgent& user(std::string_view name) const;
  IdentityProvider& idp(std::string_view id) const;
  ServiceProvider& sp(std::string_view id) const;
  DataOwner& owner(std::string_view id) const;
  CommServer& comm() const { return *comm_; }
  std::vector<std::string> user_names() const;
  std::vector<std::string> owner_ids() const;
  std::vector<std::string> idp_ids() const;

  /// Every attribute value ever registered or recertified, for privacy scans.
  const std::set<std::string>& attribute_values() const { return attribute_values_; }

 private:
  void run();
  LedgerDelta ledger_counts() const;

  DeploymentConfig config_;
  net::Bus bus_;
  ibcpre::Setup kgc_;  // key generation centre; its directory lists every identity
  std::map<std::string, std::unique_ptr<UserAgent>, std::less<>> users_;
  std::map<std::string, std::unique_ptr<IdentityProvider>, std::less<>> idps_;
  std::map<std::string, std::unique_ptr<ServiceProvider>, std::less<>> sps_;
  std::map<std::string, std::unique_ptr<DataOwner>, std::less<>> owners_;
  std::unique_ptr<CommServer> comm_;
  std::set<std::string> attribute_values_;
  StepReport last_step_;
  std::map<std::pair<std::string, std::string>, std::string> last_nonce_;  // (user, sp) -> nonce hex
};

}  // namespace fedid::actors
