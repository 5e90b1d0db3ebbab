#include <algorithm>

#include "internal.hpp"

namespace fedid::actors {

using detail::key_bytes;

UserAgent::UserAgent(std::string name, ByteView seed, hd::Mode mode, ibcpre::SystemParams params,
                     ibcpre::IdentitySecretKey ibc_key, std::map<std::string, Consent> consent, Drbg rng)
    : name_(std::move(name)),
      roots_(hd::layout::RootKeys::from_seed(seed, mode)),
      params_(std::move(params)),
      ibc_key_(std::move(ibc_key)),
      consent_(std::move(consent)),
      rng_(std::move(rng)) {}

std::optional<std::uint32_t> UserAgent::owner_index(std::string_view owner) const {
  auto it = registrations_.find(owner);
  if (it == registrations_.end()) return std::nullopt;
  return it->second.index;
}

std::optional<std::uint32_t> UserAgent::idp_index(std::string_view idp) const {
  auto it = accounts_.find(idp);
  if (it == accounts_.end()) return std::nullopt;
  return it->second.index;
}

hd::ExtendedPublicKey UserAgent::owner_key(std::string_view owner) const {
  const auto index = owner_index(owner);
  if (!index) throw ActorError(name_ + " is not registered with " + std::string(owner));
  return hd::neuter(hd::layout::data_owner_key(roots_.data_access, *index));
}

const std::map<std::string, std::string>* UserAgent::registered_attributes(std::string_view owner) const {
  auto it = registrations_.find(owner);
  if (it == registrations_.end() || !it->second.confirmed) return nullptr;
  return &it->second.attributes;
}

std::vector<std::string> UserAgent::registered_owners() const {
  std::vector<std::string> out;
  for (const auto& [owner, reg] : registrations_) {
    if (reg.confirmed) out.push_back(owner);
  }
  return out;
}

hd::ExtendedPrivateKey UserAgent::idp_key(const Account& account) const {
  return hd::layout::identity_provider_key(roots_.data_authorization, account.index);
}

std::vector<Bytes> UserAgent::private_scalars() const {
  std::vector<Bytes> out;
  auto add = [&](const ec::Scalar& s) { out.emplace_back(s.bytes().begin(), s.bytes().end()); };
  add(roots_.data_access.scalar());
  add(roots_.data_authorization.scalar());
  add(ibc_key_.secret);
  for (const auto& [owner, reg] : registrations_) {
    add(hd::layout::data_owner_key(roots_.data_access, reg.index).scalar());
  }
  for (const auto& [idp, account] : accounts_) {
    const auto key = idp_key(account);
    add(key.scalar());
    for (auto i : account.used_indices) add(hd::layout::login_key(key, i).scalar());
  }
  return out;
}

void UserAgent::begin_register(net::Bus& bus, const std::string& owner,
                               std::map<std::string, std::string> attributes) {
  register_outcome_.reset();
  auto it = registrations_.find(owner);
  if (it == registrations_.end()) {
    it = registrations_.emplace(owner, Registration{next_owner_index_++, std::move(attributes)}).first;
  }
  pending_register_ = owner;
  Message m;
  m.put("owner_key", key_bytes(owner_key(owner))).put("attributes", encode_string_map(it->second.attributes));
  detail::send(bus, address(), owner_address(owner), "register", "register", m);
}

void UserAgent::begin_signup(net::Bus& bus, const std::string& idp, const std::string& username,
                             const std::string& password) {
  signup_outcome_.reset();
  auto it = accounts_.find(idp);
  const auto index = it != accounts_.end() ? it->second.index : next_idp_index_++;
  signup_ = PendingSignup{idp, index, username, password};
  const auto key = hd::neuter(hd::layout::identity_provider_key(roots_.data_authorization, index));
  Message m;
  m.put_text("username", username).put_text("password", password).put("idp_key", key_bytes(key));
  detail::send(bus, address(), idp_address(idp), "signup", "signup", m);
}

void UserAgent::begin_login(net::Bus& bus, const std::string& idp, LoginOptions options) {
  login_outcome_.reset();
  auto it = accounts_.find(idp);
  if (it == accounts_.end() || !it->second.totp) throw ActorError(name_ + " has no account at " + idp);
  login_ = LoginAttempt{idp, std::move(options)};
  Message m;
  m.put_text("username", it->second.username)
      .put_text("password", login_->options.password.value_or(it->second.password));
  detail::send(bus, address(), idp_address(idp), "login_password", "login:password", m);
}

void UserAgent::begin_sp_login(net::Bus& bus, const std::string& sp, SpLoginOptions options) {
  sp_outcome_.reset();
  flow_ = SpFlow{sp, std::move(options), {}, {}};
  Message m;
  m.put_text("idp", flow_->options.idp);
  detail::send(bus, address(), sp_address(sp), "access_request", "sp:1", m);
}

void UserAgent::begin_store(net::Bus& bus, const std::string& idp, const std::string& owner,
                            std::vector<std::string> attributes) {
  store_outcome_.reset();
  const auto* registered = registered_attributes(owner);
  if (registered == nullptr) throw ActorError(name_ + " is not registered with " + owner);
  for (const auto& a : attributes) {
    if (!registered->count(a)) throw ActorError("attribute not registered with " + owner + ": " + a);
  }
  auto it = accounts_.find(idp);
  store_ = StoreFlow{idp, owner, std::move(attributes)};
  Message m;
  m.put("session", it == accounts_.end() ? Bytes{} : it->second.session).put_text("owner", owner);
  detail::send(bus, address(), idp_address(idp), "store_begin", "store:1", m);
}

void UserAgent::finish_sp(FlowStatus status, int stage, std::string reason) {
  SpLoginOutcome out;
  out.status = status;
  out.aborted_stage = stage;
  out.reason = std::move(reason);
  out.nonce_hex = to_hex(flow_->request.nonce);
  out.owners = flow_->owners;
  sp_outcome_ = std::move(out);
  flow_.reset();
}

Bytes UserAgent::document_for(const std::string& owner, const std::vector<std::string>& attributes,
                              const std::map<std::string, std::string>& overrides) const {
  const auto& registered = registrations_.find(owner)->second.attributes;
  std::map<std::string, std::string> values;
  for (const auto& a : attributes) {
    auto o = overrides.find(a);
    values[a] = o != overrides.end() ? o->second : registered.at(a);
  }
  Message doc;
  doc.put("owner_key", key_bytes(owner_key(owner))).put("attributes", encode_string_map(values));
  return doc.serialize();
}

void UserAgent::handle(net::Bus& bus, const net::Envelope& env, const Message& msg) {
  const auto& kind = env.kind;
  if (kind == "register_ok" || kind == "register_error") {
    if (!pending_register_ || env.from != owner_address(*pending_register_)) return;
    auto& reg = registrations_.at(*pending_register_);
    if (kind == "register_ok") {
      reg.confirmed = true;
      register_outcome_ = RegisterOutcome{true, {}};
    } else {
      if (!reg.confirmed) registrations_.erase(*pending_register_);
      register_outcome_ = RegisterOutcome{false, msg.text("reason")};
    }
    pending_register_.reset();
  } else if (kind == "signup_ok" || kind == "signup_error") {
    if (!signup_ || env.from != idp_address(signup_->idp)) return;
    if (kind == "signup_ok") {
      const auto totp = msg.text("totp");
      Account account{signup_->index, signup_->username, signup_->password, auth::TotpSecret::from_base32(totp)};
      accounts_.insert_or_assign(signup_->idp, std::move(account));
      signup_outcome_ = SignupOutcome{true, {}, totp};
    } else {
      signup_outcome_ = SignupOutcome{false, msg.text("reason"), {}};
    }
    signup_.reset();
  } else if (kind == "password_ok" || kind == "totp_ok" || kind == "login_challenge" || kind == "login_ok" ||
             kind == "login_failed") {
    on_login_step(bus, env, msg);
  } else if (kind == "claims_redirect") {
    on_claims_redirect(bus, env, msg);
  } else if (kind == "consent_prompt") {
    on_consent_prompt(bus, msg);
  } else if (kind == "green_signal") {
    on_green_signal(bus, msg);
  } else if (kind == "access_decision") {
    if (!flow_ || env.from != sp_address(flow_->sp) || msg.get("flow") != flow_->request.nonce) return;
    const bool granted = msg.u64("granted") != 0;
    finish_sp(granted ? FlowStatus::granted : FlowStatus::denied, 0, {});
  } else if (kind == "flow_aborted") {
    if (!flow_ || msg.get("flow") != flow_->request.nonce) return;
    if (env.from != sp_address(flow_->sp) && env.from != idp_address(flow_->options.idp)) return;
    finish_sp(FlowStatus::aborted, static_cast<int>(msg.u64("stage")), msg.text("reason"));
  } else if (kind == "store_nonce") {
    on_store_nonce(bus, msg);
  } else if (kind == "store_ok" || kind == "store_failed") {
    if (!store_ || env.from != idp_address(store_->idp)) return;
    store_outcome_ = kind == "store_ok" ? StoreOutcome{true, {}} : StoreOutcome{false, msg.text("reason")};
    store_.reset();
  }
}

void UserAgent::on_login_step(net::Bus& bus, const net::Envelope& env, const Message& msg) {
  if (!login_ || env.from != idp_address(login_->idp)) return;
  auto& account = accounts_.at(login_->idp);
  const auto& kind = env.kind;
  const auto to = idp_address(login_->idp);
  if (kind == "password_ok") {
    const auto code = login_->options.totp_code.value_or(
        auth::totp_code(*account.totp, static_cast<std::uint64_t>(bus.now())));
    Message m;
    m.put_text("username", account.username).put_text("code", code);
    detail::send(bus, address(), to, "login_totp", "login:totp", m);
  } else if (kind == "totp_ok") {
    std::uint32_t index;
    if (login_->options.index) {
      index = *login_->options.index;
      account.next_login_index = std::max(account.next_login_index, index + 1);
    } else {
      index = account.next_login_index++;
    }
    login_->index = index;
    account.used_indices.insert(index);
    Message m;
    m.put_text("username", account.username).put_u64("index", index);
    if (msg.text("mode") == "literal") {
      // The IDP compares the child public key directly.
      const auto child = hd::neuter(hd::layout::login_key(idp_key(account), index));
      const auto& pub = child.point().compressed();
      m.put("pubkey", Bytes(pub.begin(), pub.end()));
      detail::send(bus, address(), to, "login_key_response", "login:key", m);
    } else {
      detail::send(bus, address(), to, "login_key_request", "login:key", m);
    }
  } else if (kind == "login_challenge") {
    const auto child = hd::layout::login_key(idp_key(account), login_->index);
    const auto sig = hd::sign(
        child, detail::login_challenge_message(login_->idp, account.username, login_->index, msg.get("nonce")));
    const auto compact = sig.compact();
    Message m;
    m.put_text("username", account.username)
        .put_u64("index", login_->index)
        .put("signature", Bytes(compact.begin(), compact.end()));
    detail::send(bus, address(), to, "login_key_response", "login:key", m);
  } else if (kind == "login_ok") {
    account.session = msg.get("session");
    login_outcome_ = LoginOutcome{true, {}, {}, login_->index};
    login_.reset();
  } else {
    login_outcome_ = LoginOutcome{false, msg.text("stage"), msg.text("reason"), login_->index};
    login_.reset();
  }
}

void UserAgent::on_claims_redirect(net::Bus& bus, const net::Envelope& env, const Message& msg) {
  if (!flow_ || env.from != sp_address(flow_->sp) || !flow_->request.nonce.empty()) return;
  flow_->request = ClaimsRequest::decode(msg.get("request"));
  if (flow_->request.sp_id != flow_->sp) return;
  auto it = accounts_.find(flow_->options.idp);
  Message m;
  m.put("session", it == accounts_.end() ? Bytes{} : it->second.session).put("request", msg.get("request"));
  detail::send(bus, address(), idp_address(flow_->options.idp), "claims_request", "sp:1", m);
}

void UserAgent::on_consent_prompt(net::Bus& bus, const Message& msg) {
  if (!flow_ || msg.get("flow") != flow_->request.nonce) return;
  const auto& nonce = flow_->request.nonce;
  const auto consent_it = consent_.find(flow_->sp);
  const Consent consent = consent_it == consent_.end() ? Consent{} : consent_it->second;

  // Consent boundary: requested claims the policy allows, at owners it allows.
  std::vector<std::string> attributes;
  for (const auto& c : flow_->request.claims) {
    if (std::count(consent.attributes.begin(), consent.attributes.end(), c.attribute)) {
      attributes.push_back(c.attribute);
    }
  }
  std::vector<std::string> candidates = flow_->options.owners.value_or(consent.owners);
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  std::vector<std::string> owners;
  std::vector<std::vector<std::string>> per_owner;
  for (const auto& owner : candidates) {
    if (!std::count(consent.owners.begin(), consent.owners.end(), owner)) continue;
    const auto* registered = registered_attributes(owner);
    if (registered == nullptr) continue;
    std::vector<std::string> mine;
    for (const auto& a : attributes) {
      if (registered->count(a)) mine.push_back(a);
    }
    if (mine.empty()) continue;
    owners.push_back(owner);
    per_owner.push_back(std::move(mine));
  }
  flow_->owners = owners;

  const auto to = idp_address(flow_->options.idp);
  Message consent_msg;
  consent_msg.put("flow", nonce)
      .put_text("source", flow_->options.stored ? "stored" : "owners")
      .put("owners", encode_strings(owners))
      .put("attributes", encode_strings(attributes));
  detail::send(bus, address(), to, "consent", "sp:2", consent_msg);
  if (flow_->options.stored || owners.empty()) return;

  std::vector<std::string> conditions;
  std::vector<Bytes> envelopes;
  std::vector<Bytes> rks;
  for (std::size_t i = 0; i < owners.size(); ++i) {
    const auto condition = flow_condition("verify", per_owner[i], nonce);
    const ibcpre::ConditionTag tag(condition);
    const auto doc = document_for(owners[i], per_owner[i], flow_->options.claim_overrides);
    envelopes.push_back(ibcpre::encrypt(params_, ibc_key_.identity, tag, doc, rng_).serialize());
    rks.push_back(ibcpre::rkgen(params_, ibc_key_, owner_identity(owners[i]), tag, rng_).serialize());
    conditions.push_back(condition);
  }
  Message env_msg;
  env_msg.put("flow", nonce)
      .put("owners", encode_strings(owners))
      .put("conditions", encode_strings(conditions))
      .put("envelopes", encode_blobs(envelopes));
  detail::send(bus, address(), to, "envelopes", "sp:3", env_msg);

  Message rk_msg;
  rk_msg.put("flow", nonce).put("keys", encode_blobs(rks));
  detail::send(bus, address(), to, "reencryption_keys", "sp:4", rk_msg);
}

void UserAgent::on_green_signal(net::Bus& bus, const Message& msg) {
  if (!flow_ || msg.get("flow") != flow_->request.nonce) return;
  const auto suffix = ":" + to_hex(flow_->request.nonce);
  std::vector<Bytes> rks;
  for (const auto& condition : decode_strings(msg.get("conditions"))) {
    // Release only what this flow created, or stored documents from owners it selected.
    bool ours;
    if (flow_->options.stored) {
      auto it = stored_conditions_.find(condition);
      ours = it != stored_conditions_.end() &&
             std::count(flow_->owners.begin(), flow_->owners.end(), it->second);
    } else {
      ours = condition.size() > suffix.size() && condition.rfind("verify:", 0) == 0 &&
             condition.compare(condition.size() - suffix.size(), suffix.size(), suffix) == 0;
    }
    if (!ours) {
      finish_sp(FlowStatus::aborted, 7, "release requested for a foreign condition");
      return;
    }
    rks.push_back(ibcpre::rkgen(params_, ibc_key_, idp_identity(flow_->options.idp),
                                ibcpre::ConditionTag(condition), rng_)
                      .serialize());
  }
  Message m;
  m.put("flow", flow_->request.nonce).put("keys", encode_blobs(rks));
  detail::send(bus, address(), idp_address(flow_->options.idp), "idp_keys", "sp:7", m);
}

void UserAgent::on_store_nonce(net::Bus& bus, const Message& msg) {
  if (!store_) return;
  const auto& nonce = msg.get("flow");
  const auto condition = flow_condition("store", store_->attributes, nonce);
  const ibcpre::ConditionTag tag(condition);
  const auto doc = document_for(store_->owner, store_->attributes, {});
  const auto envelope = ibcpre::encrypt(params_, ibc_key_.identity, tag, doc, rng_);
  const auto rk = ibcpre::rkgen(params_, ibc_key_, owner_identity(store_->owner), tag, rng_);
  stored_conditions_[condition] = store_->owner;
  Message m;
  m.put("flow", nonce)
      .put_text("owner", store_->owner)
      .put("attributes", encode_strings(store_->attributes))
      .put_text("condition", condition)
      .put("key", rk.serialize())
      .put("envelope", envelope.serialize());
  detail::send(bus, address(), idp_address(store_->idp), "store_envelope", "store:2", m);
}

void UserAgent::on_delivery_failure(net::Bus&, const net::Envelope& env) {
  if (env.kind == "register" && pending_register_) {
    auto it = registrations_.find(*pending_register_);
    if (it != registrations_.end() && !it->second.confirmed) registrations_.erase(it);
    register_outcome_ = RegisterOutcome{false, "data owner offline"};
    pending_register_.reset();
  }
}

}  // namespace fedid::actors
