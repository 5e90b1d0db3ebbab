#include <algorithm>

#include "internal.hpp"

namespace fedid::actors {

namespace {

template <typename Map>
auto& find_actor(const Map& map, std::string_view id, const char* role) {
  auto it = map.find(id);
  if (it == map.end()) throw ActorError(std::string("unknown ") + role + ": " + std::string(id));
  return *it->second;
}

ibcpre::Setup make_kgc(std::uint64_t seed) {
  auto rng = Drbg::from_seed(seed).fork("kgc");
  return ibcpre::setup(128, rng);
}

}  // namespace

Deployment::Deployment(DeploymentConfig config)
    : config_(std::move(config)),
      bus_(config_.seed, config_.faults, config_.max_steps),
      kgc_(make_kgc(config_.seed)) {
  if (config_.owners.empty()) throw ActorError("a deployment needs at least one data owner");
  bus_.set_time(config_.start_time);
  auto root = Drbg::from_seed(config_.seed);
  auto& params = kgc_.params;

  // The KGC extracts and publishes every identity before any actor starts.
  auto issue = [&](const std::string& identity) {
    auto sk = ibcpre::extract(kgc_.master, identity);
    params.publish(ibcpre::certify(kgc_.master, sk));
    return sk;
  };
  std::map<std::string, ibcpre::IdentitySecretKey> owner_keys, idp_keys, user_keys;
  for (const auto& o : config_.owners) owner_keys.emplace(o.id, issue(owner_identity(o.id)));
  for (const auto& i : config_.idps) idp_keys.emplace(i, issue(idp_identity(i)));
  for (const auto& u : config_.users) user_keys.emplace(u.name, issue(user_identity(u.name)));

  ledger::ChannelConfig channel{config_.channel_id, {}, config_.quorum};
  std::map<std::string, trust::SourceClass> classes;
  for (const auto& o : config_.owners) {
    const auto member = ec::hash_to_scalar("fedid/member", root.fork("member/" + o.id).bytes(32));
    auto owner = std::make_unique<DataOwner>(o.id, o.source_class, owner_keys.at(o.id), member);
    channel.members.push_back({o.id, owner->member_public()});
    classes[o.id] = o.source_class;
    bus_.register_actor(owner->address(), *owner);
    owners_.emplace(o.id, std::move(owner));
  }
  channel.validate();
  comm_ = std::make_unique<CommServer>(ledger::Ledger::genesis(channel, config_.start_time));
  bus_.register_actor(comm_->address(), *comm_);

  IdentityProvider::Options idp_options{config_.weights, config_.trust, config_.offline_policy,
                                        config_.paper_literal_login};
  for (const auto& i : config_.idps) {
    auto idp = std::make_unique<IdentityProvider>(i, params, idp_keys.at(i), classes, idp_options,
                                                  root.fork("idp/" + i));
    bus_.register_actor(idp->address(), *idp);
    idps_.emplace(i, std::move(idp));
  }
  for (const auto& s : config_.sps) {
    auto sp = std::make_unique<ServiceProvider>(s.id, s.policy, root.fork("sp/" + s.id));
    bus_.register_actor(sp->address(), *sp);
    sps_.emplace(s.id, std::move(sp));
  }
  for (const auto& u : config_.users) {
    auto user = std::make_unique<UserAgent>(u.name, u.seed, config_.mode, params, user_keys.at(u.name), u.consent,
                                            root.fork("user/" + u.name));
    bus_.register_actor(user->address(), *user);
    users_.emplace(u.name, std::move(user));
  }

  // All IDP <-> owner traffic must pass through the communication server.
  bus_.forbid({"idp/", "owner/"});
  bus_.forbid({"owner/", "idp/"});
}

UserAgent& Deployment::user(std::string_view name) const { return find_actor(users_, name, "user"); }
IdentityProvider& Deployment::idp(std::string_view id) const { return find_actor(idps_, id, "identity provider"); }
ServiceProvider& Deployment::sp(std::string_view id) const { return find_actor(sps_, id, "service provider"); }
DataOwner& Deployment::owner(std::string_view id) const { return find_actor(owners_, id, "data owner"); }

std::vector<std::string> Deployment::user_names() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : users_) out.push_back(k);
  return out;
}

std::vector<std::string> Deployment::owner_ids() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : owners_) out.push_back(k);
  return out;
}

std::vector<std::string> Deployment::idp_ids() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : idps_) out.push_back(k);
  return out;
}

LedgerDelta Deployment::ledger_counts() const {
  LedgerDelta d;
  auto count = [&](const ledger::TransactionRecord& tx) {
    if (const auto* da = std::get_if<ledger::DataAccessDetails>(&tx.payload)) {
      ++d.data_access;
      if (da->outcome == ledger::Outcome::verified) ++d.data_access_verified;
    } else {
      ++d.recertification;
    }
  };
  for (const auto& b : ledger().blocks()) std::for_each(b.txs.begin(), b.txs.end(), count);
  std::for_each(ledger().pending().begin(), ledger().pending().end(), count);
  return d;
}

bool Deployment::commit() {
  auto& l = comm_->ledger();
  if (l.pending().empty()) return true;
  std::vector<ledger::Signer> signers;
  for (const auto& [id, owner] : owners_) {
    if (!bus_.is_offline(owner->address())) signers.push_back(owner->signer());
  }
  if (signers.size() < l.config().quorum) return false;
  l.commit_block(bus_.now(), signers);
  ++last_step_.blocks_committed;
  return true;
}

void Deployment::run() {
  const auto before = ledger_counts();
  const auto first = bus_.transcript().size();
  last_step_ = {};
  bus_.run_until_idle();
  const auto after = ledger_counts();
  last_step_.ledger = {after.data_access - before.data_access,
                       after.data_access_verified - before.data_access_verified,
                       after.recertification - before.recertification};
  const auto& t = bus_.transcript();
  last_step_.messages = t.size() - first;
  std::set<std::string> contacted;
  for (auto i = first; i < t.size(); ++i) {
    const bool reached = t[i].status == net::Status::delivered || t[i].status == net::Status::tampered;
    if (reached && detail::has_prefix(t[i].to, "owner/")) contacted.insert(t[i].to);
  }
  last_step_.owner_contacts = contacted.size();
  commit();
}

RegisterOutcome Deployment::register_user(const std::string& user_name, const std::string& owner_id,
                                          std::map<std::string, std::string> attributes) {
  owner(owner_id);
  for (const auto& [k, v] : attributes) attribute_values_.insert(v);
  auto& u = user(user_name);
  u.begin_register(bus_, owner_id, std::move(attributes));
  run();
  return u.register_outcome().value_or(RegisterOutcome{false, "no response"});
}

SignupOutcome Deployment::signup(const std::string& user_name, const std::string& idp_id,
                                 const std::string& username, const std::string& password) {
  idp(idp_id);
  auto& u = user(user_name);
  u.begin_signup(bus_, idp_id, username, password);
  run();
  return u.signup_outcome().value_or(SignupOutcome{false, "no response", {}});
}

LoginOutcome Deployment::login(const std::string& user_name, const std::string& idp_id, LoginOptions options) {
  idp(idp_id);
  auto& u = user(user_name);
  u.begin_login(bus_, idp_id, std::move(options));
  run();
  return u.login_outcome().value_or(LoginOutcome{false, "none", "no response", 0});
}

SpLoginOutcome Deployment::sp_login(const std::string& user_name, const std::string& sp_id,
                                    SpLoginOptions options) {
  sp(sp_id);
  idp(options.idp);
  auto& u = user(user_name);
  u.begin_sp_login(bus_, sp_id, std::move(options));
  run();
  SpLoginOutcome out;
  if (u.sp_login_outcome()) {
    out = *u.sp_login_outcome();
  } else {
    out.reason = "flow stalled";
  }
  last_nonce_[{user_name, sp_id}] = out.nonce_hex;
  return out;
}

StoreOutcome Deployment::store_identity(const std::string& user_name, const std::string& idp_id,
                                        const std::string& owner_id, std::vector<std::string> attributes) {
  idp(idp_id);
  owner(owner_id);
  auto& u = user(user_name);
  u.begin_store(bus_, idp_id, owner_id, std::move(attributes));
  run();
  return u.store_outcome().value_or(StoreOutcome{false, "no response"});
}

void Deployment::recertify(const std::string& owner_id, const std::string& user_name,
                           const std::map<std::string, std::optional<std::string>>& attributes) {
  for (const auto& [k, v] : attributes) {
    if (v) attribute_values_.insert(*v);
  }
  owner(owner_id).begin_recertify(bus_, user(user_name).owner_key(owner_id), attributes);
  run();
}

void Deployment::advance_clock(std::int64_t seconds) { bus_.advance(seconds); }

void Deployment::set_offline(const std::string& address, bool offline) {
  if (!bus_.has_actor(address)) throw ActorError("unknown actor: " + address);
  bus_.set_offline(address, offline);
}

std::vector<ledger::TransactionRecord> Deployment::trace(const std::string& user_name,
                                                         std::uint32_t gap_limit) const {
  return ledger().trace_by_parent_key(user(user_name).roots().data_access, gap_limit);
}

std::vector<trust::AttributeAssertion> Deployment::last_assertions(const std::string& user_name,
                                                                   const std::string& sp_id) const {
  auto it = last_nonce_.find({user_name, sp_id});
  if (it == last_nonce_.end()) return {};
  const auto* d = sp(sp_id).decision(it->second);
  return d == nullptr ? std::vector<trust::AttributeAssertion>{} : d->assertions;
}

}  // namespace fedid::actors
