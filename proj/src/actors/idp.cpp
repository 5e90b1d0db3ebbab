#include <algorithm>

#include "internal.hpp"

namespace fedid::actors {

using detail::key_bytes;

namespace {

std::string comm() { return std::string(kCommAddress); }

// The attribute list embedded in a flow condition, if it has the expected shape.
std::optional<std::vector<std::string>> condition_attributes(std::string_view condition, std::string_view purpose,
                                                             ByteView nonce) {
  const std::string head = std::string(purpose) + ":";
  const std::string tail = ":" + to_hex(nonce);
  if (condition.size() < head.size() + tail.size() || condition.rfind(head, 0) != 0 ||
      condition.compare(condition.size() - tail.size(), tail.size(), tail) != 0) {
    return std::nullopt;
  }
  const auto middle = condition.substr(head.size(), condition.size() - head.size() - tail.size());
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= middle.size()) {
    const auto comma = middle.find(',', start);
    const auto end = comma == std::string_view::npos ? middle.size() : comma;
    out.emplace_back(middle.substr(start, end - start));
    start = end + 1;
  }
  if (flow_condition(purpose, out, nonce) != condition) return std::nullopt;
  return out;
}

// Nested message of attribute name -> u64 timestamp.
void read_recert(const Message& msg, std::map<std::string, Timestamp>& out) {
  const auto recert = Message::parse(msg.get("recert"));
  for (const auto& [name, value] : recert.fields()) out[name] = static_cast<Timestamp>(recert.u64(name));
}

}  // namespace

IdentityProvider::IdentityProvider(std::string id, ibcpre::SystemParams params, ibcpre::IdentitySecretKey ibc_key,
                                   std::map<std::string, trust::SourceClass> owner_classes, Options options,
                                   Drbg rng)
    : id_(std::move(id)),
      params_(std::move(params)),
      ibc_key_(std::move(ibc_key)),
      owner_classes_(std::move(owner_classes)),
      options_(std::move(options)),
      rng_(std::move(rng)) {}

const UserProfile* IdentityProvider::profile(std::string_view username) const {
  auto it = profiles_.find(username);
  return it == profiles_.end() ? nullptr : &it->second;
}

std::optional<std::string> IdentityProvider::session_user(ByteView session) const {
  if (session.empty()) return std::nullopt;
  auto it = sessions_.find(to_hex(session));
  if (it == sessions_.end()) return std::nullopt;
  return it->second;
}

void IdentityProvider::handle(net::Bus& bus, const net::Envelope& env, const Message& msg) {
  const auto& kind = env.kind;
  if (kind == "signup") return on_signup(bus, env, msg);
  if (kind.rfind("login_", 0) == 0) return on_login(bus, env, msg);
  if (kind == "claims_request") return on_claims_request(bus, env, msg);
  if (kind == "store_begin") return on_store_begin(bus, env, msg);

  const auto key = to_hex(msg.get("flow"));
  auto it = flows_.find(key);
  if (it == flows_.end()) return;
  Flow& flow = it->second;

  if (env.from == flow.user) {
    if (kind == "consent" && !flow.store) return on_consent(bus, key, flow, msg);
    if (kind == "envelopes" && !flow.store) return on_envelopes(bus, key, flow, msg);
    if (kind == "reencryption_keys" && !flow.store) return on_reencryption_keys(bus, key, flow, msg, "sp:4");
    if (kind == "idp_keys" && !flow.store) return on_idp_keys(bus, key, flow, msg);
    if (kind == "store_envelope" && flow.store) return on_store_envelope(bus, key, flow, msg);
    return;
  }
  if (env.from != kCommAddress) return;

  auto slot_it = flow.slots.find(msg.text("owner"));
  if (slot_it == flow.slots.end()) return;
  Slot& slot = slot_it->second;
  if (kind == "verify_result" && slot.state == SlotState::pending) {
    const auto outcome = static_cast<ledger::Outcome>(msg.u64("outcome"));
    slot.state = outcome == ledger::Outcome::verified ? SlotState::verified : SlotState::mismatch;
    read_recert(msg, slot.recert);
  } else if ((kind == "verify_error" || kind == "route_error") && slot.state == SlotState::pending) {
    slot.state = SlotState::failed;
  } else if (kind == "owner_unavailable" && slot.state == SlotState::pending) {
    slot.state = SlotState::unavailable;
  } else if (kind == "ledger_receipt") {
    slot.receipt = true;
  } else if (kind == "recert_info" && slot.lookup_pending) {
    read_recert(msg, slot.recert);
    slot.lookup_pending = false;
    const bool waiting = std::any_of(flow.slots.begin(), flow.slots.end(),
                                     [](const auto& s) { return s.second.lookup_pending; });
    if (!waiting) finish_assertion(bus, key);
    return;
  } else {
    return;
  }
  progress(bus, key);
}

void IdentityProvider::on_signup(net::Bus& bus, const net::Envelope& env, const Message& msg) {
  auto reply_error = [&](const std::string& reason) {
    Message m;
    m.put_text("reason", reason);
    detail::send(bus, address(), env.from, "signup_error", "signup", m);
  };
  const auto username = msg.text("username");
  if (username.empty()) return reply_error("empty username");
  if (profiles_.count(username)) return reply_error("username taken");
  const auto idp_key = hd::ExtendedPublicKey::deserialize(msg.get("idp_key"));
  auth::PasswordRecord record;
  try {
    record = auth::hash_password(msg.text("password"), rng_.array<16>());
  } catch (const auth::AuthError& e) {
    return reply_error(e.what());
  }
  auto totp = auth::TotpSecret::generate(rng_);
  const auto base32 = totp.key_base32();
  profiles_.emplace(username, UserProfile{username, record, std::move(totp), idp_key, {}, {}});
  Message m;
  m.put_text("totp", base32);
  detail::send(bus, address(), env.from, "signup_ok", "signup", m);
}

void IdentityProvider::on_login(net::Bus& bus, const net::Envelope& env, const Message& msg) {
  const auto& kind = env.kind;
  const auto username = msg.text("username");
  auto fail = [&](const std::string& stage, const std::string& reason) {
    logins_.erase(username);
    Message m;
    m.put_text("stage", stage).put_text("reason", reason);
    detail::send(bus, address(), env.from, "login_failed", env.phase, m);
  };
  auto pit = profiles_.find(username);

  if (kind == "login_password") {
    if (pit == profiles_.end()) return fail("password", "unknown username");
    if (!auth::verify_password(pit->second.password, msg.text("password"))) {
      return fail("password", "wrong password");
    }
    logins_[username] = PendingLogin{env.from, 1, std::nullopt, {}};
    detail::send(bus, address(), env.from, "password_ok", "login:password", Message{});
    return;
  }

  auto lit = logins_.find(username);
  if (kind == "login_totp") {
    if (pit == profiles_.end() || lit == logins_.end() || lit->second.user != env.from || lit->second.passed != 1) {
      return fail("totp", "password stage not passed");
    }
    if (!totp_guard_.totp_verify(username, pit->second.totp, static_cast<std::uint64_t>(bus.now()),
                                 msg.text("code"))) {
      return fail("totp", "invalid or replayed code");
    }
    lit->second.passed = 2;
    Message m;
    m.put_text("mode", options_.paper_literal_login ? "literal" : "challenge");
    detail::send(bus, address(), env.from, "totp_ok", "login:totp", m);
    return;
  }

  if (pit == profiles_.end() || lit == logins_.end() || lit->second.user != env.from || lit->second.passed != 2) {
    return fail("key", "earlier stages not passed");
  }
  auto& profile = pit->second;
  const auto index64 = msg.u64("index");
  if (index64 >= hd::kHardenedBit) return fail("key", "login index out of range");
  const auto index = static_cast<std::uint32_t>(index64);
  if (profile.used_login_indices.count(index)) return fail("key", "login index already used");
  const auto expected = hd::ckd_pub(profile.registered_idp_xpub, index);

  if (kind == "login_key_request") {
    if (options_.paper_literal_login) return fail("key", "unexpected challenge request");
    lit->second.index = index;
    lit->second.challenge = rng_.bytes(32);
    Message m;
    m.put("nonce", lit->second.challenge);
    detail::send(bus, address(), env.from, "login_challenge", "login:key", m);
    return;
  }
  if (kind != "login_key_response") return fail("key", "unexpected message");

  bool ok = false;
  if (options_.paper_literal_login) {
    const auto& pub = expected.point().compressed();
    ok = msg.get("pubkey") == Bytes(pub.begin(), pub.end());
  } else if (lit->second.index == index && !lit->second.challenge.empty()) {
    const auto& sig = msg.get("signature");
    ok = sig.size() == 64 &&
         hd::verify(expected, detail::login_challenge_message(id_, username, index, lit->second.challenge),
                    ec::Signature::from_compact(sig));
  }
  if (!ok) return fail("key", "login key check failed");

  profile.used_login_indices.insert(index);
  logins_.erase(lit);
  std::erase_if(sessions_, [&](const auto& s) { return s.second == username; });
  const auto session = rng_.bytes(16);
  sessions_[to_hex(session)] = username;
  Message m;
  m.put("session", session);
  detail::send(bus, address(), env.from, "login_ok", "login:key", m);
}

void IdentityProvider::on_claims_request(net::Bus& bus, const net::Envelope& env, const Message& msg) {
  auto request = ClaimsRequest::decode(msg.get("request"));
  const auto key = to_hex(request.nonce);
  auto reject = [&](const std::string& reason) {
    Message m;
    m.put("flow", request.nonce).put_u64("stage", 1).put_text("reason", reason);
    detail::send(bus, address(), env.from, "flow_aborted", "sp:1", m);
    const auto sp = sp_address(request.sp_id);
    if (bus.has_actor(sp)) detail::send(bus, address(), sp, "flow_aborted", "sp:1", m);
  };
  const auto username = session_user(msg.get("session"));
  if (!username) return reject("no valid session");
  if (request.nonce.empty() || seen_nonces_.count(key)) return reject("nonce reuse");
  try {
    request.policy();
  } catch (const trust::TrustError& e) {
    return reject(e.what());
  }
  seen_nonces_.insert(key);
  Flow flow;
  flow.username = *username;
  flow.user = env.from;
  flow.request = std::move(request);
  flows_.emplace(key, std::move(flow));
  Message m;
  m.put("flow", from_hex(key));
  detail::send(bus, address(), env.from, "consent_prompt", "sp:2", m);
}

void IdentityProvider::on_consent(net::Bus& bus, const std::string& key, Flow& flow, const Message& msg) {
  if (!flow.slots.empty()) return;
  const auto owners = decode_strings(msg.get("owners"));
  const auto attributes = decode_strings(msg.get("attributes"));
  for (const auto& a : attributes) {
    const bool requested = std::any_of(flow.request.claims.begin(), flow.request.claims.end(),
                                       [&](const Claim& c) { return c.attribute == a; });
    if (!requested) return abort(bus, key, 2, "consent names an unrequested attribute");
  }
  if (owners.empty()) return abort(bus, key, 2, "no data owner selected");

  if (msg.text("source") != "stored") {
    for (const auto& o : owners) flow.slots[o].owner = o;
    return;
  }
  const auto& profile = profiles_.at(flow.username);
  for (const auto& o : owners) {
    const StoredDocument* found = nullptr;
    for (const auto& doc : profile.stored_documents) {
      if (doc.owner_id == o) found = &doc;
    }
    if (found == nullptr) return abort(bus, key, 2, "no stored document for " + o);
    Slot slot;
    slot.owner = o;
    slot.condition = found->condition;
    for (const auto& a : found->attributes) {
      if (std::count(attributes.begin(), attributes.end(), a)) {
        slot.attributes.push_back(a);
        slot.recert[a] = found->verified_at;
      }
    }
    slot.envelope = found->envelope.serialize();
    slot.state = SlotState::stored;
    flow.slots[o] = std::move(slot);
  }
  flow.from_storage = true;
  progress(bus, key);
}

void IdentityProvider::on_envelopes(net::Bus& bus, const std::string& key, Flow& flow, const Message& msg) {
  const auto owners = decode_strings(msg.get("owners"));
  const auto conditions = decode_strings(msg.get("conditions"));
  const auto envelopes = decode_blobs(msg.get("envelopes"));
  if (flow.from_storage || owners.size() != flow.slots.size() || conditions.size() != owners.size() ||
      envelopes.size() != owners.size()) {
    return abort(bus, key, 3, "envelope set does not match consent");
  }
  const auto identity = user_identity(detail::address_suffix(flow.user));
  for (std::size_t i = 0; i < owners.size(); ++i) {
    auto it = flow.slots.find(owners[i]);
    if (it == flow.slots.end() || !it->second.envelope.empty()) {
      return abort(bus, key, 3, "envelope for an unselected owner");
    }
    auto attrs = condition_attributes(conditions[i], "verify", flow.request.nonce);
    if (!attrs) return abort(bus, key, 3, "condition not bound to this flow");
    const auto env = ibcpre::Envelope::parse(envelopes[i]);
    if (env.level != ibcpre::Level::original || env.recipient != identity) {
      return abort(bus, key, 3, "envelope not addressed to the user");
    }
    it->second.condition = conditions[i];
    it->second.attributes = std::move(*attrs);
    it->second.envelope = envelopes[i];
  }
}

void IdentityProvider::on_reencryption_keys(net::Bus& bus, const std::string& key, Flow& flow, const Message& msg,
                                            const std::string& phase) {
  const auto keys = decode_blobs(msg.get("keys"));
  std::map<std::string, ibcpre::Envelope> outgoing;
  for (const auto& blob : keys) {
    const auto rk = ibcpre::ReEncryptionKey::parse(blob);
    if (!detail::has_prefix(rk.delegatee, "owner:")) return abort(bus, key, 4, "key not addressed to an owner");
    const auto owner = rk.delegatee.substr(6);
    auto it = flow.slots.find(owner);
    if (it == flow.slots.end() || it->second.envelope.empty() || outgoing.count(owner) ||
        rk.condition.value() != it->second.condition) {
      return abort(bus, key, 4, "re-encryption key does not match an envelope");
    }
    try {
      outgoing.emplace(owner, ibcpre::reencrypt(rk, ibcpre::Envelope::parse(it->second.envelope)));
    } catch (const std::exception&) {
      return abort(bus, key, 4, "re-encryption failed");
    }
  }
  if (outgoing.size() != flow.slots.size()) return abort(bus, key, 4, "missing re-encryption key");
  for (auto& [owner, ct] : outgoing) {
    const auto& slot = flow.slots.at(owner);
    Message m;
    m.put_text("idp", id_)
        .put_text("owner", owner)
        .put("flow", flow.request.nonce)
        .put_text("purpose", flow.store ? "store" : "verify")
        .put_text("sp", flow.request.sp_id)
        .put_text("condition", slot.condition)
        .put("attributes", encode_strings(slot.attributes))
        .put("envelope", ct.serialize());
    detail::send(bus, address(), comm(), "verify_request", phase, m);
  }
}

void IdentityProvider::progress(net::Bus& bus, const std::string& key) {
  Flow& flow = flows_.at(key);
  if (flow.released) return;
  for (const auto& [owner, slot] : flow.slots) {
    if (slot.state == SlotState::pending) return;
    const bool recorded = slot.state == SlotState::verified || slot.state == SlotState::mismatch;
    if (recorded && !slot.receipt) return;
  }

  if (flow.store) {
    const Slot& slot = flow.slots.begin()->second;
    if (slot.state != SlotState::verified) {
      return abort(bus, key, 3, slot.state == SlotState::mismatch ? "attribute mismatch" : "owner did not verify");
    }
    auto& profile = profiles_.at(flow.username);
    profile.stored_documents.push_back(
        {slot.owner, slot.condition, slot.attributes, bus.now(), ibcpre::Envelope::parse(slot.envelope)});
    Message m;
    m.put("flow", flow.request.nonce);
    detail::send(bus, address(), flow.user, "store_ok", "store:4", m);
    flows_.erase(key);
    return;
  }

  std::vector<std::string> conditions;
  for (const auto& [owner, slot] : flow.slots) {
    switch (slot.state) {
      case SlotState::failed:
        return abort(bus, key, 5, "owner could not verify the document: " + owner);
      case SlotState::mismatch:
        return abort(bus, key, 5, "attribute mismatch at " + owner);
      case SlotState::unavailable:
        if (options_.offline_policy == OfflinePolicy::block) {
          return abort(bus, key, 5, "data owner offline: " + owner);
        }
        break;
      default:
        break;
    }
    if (std::find(conditions.begin(), conditions.end(), slot.condition) == conditions.end()) {
      conditions.push_back(slot.condition);
    }
  }
  flow.released = true;
  Message m;
  m.put("flow", flow.request.nonce).put("conditions", encode_strings(conditions));
  detail::send(bus, address(), flow.user, "green_signal", "sp:7", m);
}

void IdentityProvider::on_idp_keys(net::Bus& bus, const std::string& key, Flow& flow, const Message& msg) {
  if (!flow.released) return;
  std::vector<ibcpre::ReEncryptionKey> keys;
  for (const auto& blob : decode_blobs(msg.get("keys"))) keys.push_back(ibcpre::ReEncryptionKey::parse(blob));
  const auto user_id = user_identity(detail::address_suffix(flow.user));

  for (auto& [owner, slot] : flow.slots) {
    auto rk = std::find_if(keys.begin(), keys.end(), [&](const ibcpre::ReEncryptionKey& k) {
      return k.condition.value() == slot.condition && k.delegatee == ibc_key_.identity && k.delegator == user_id;
    });
    if (rk == keys.end()) return abort(bus, key, 7, "no release key for " + owner);
    try {
      const auto ct = ibcpre::reencrypt(*rk, ibcpre::Envelope::parse(slot.envelope));
      const auto doc = Message::parse(ibcpre::decrypt(ibc_key_, ct, rk->condition));
      const auto values = decode_string_map(doc.get("attributes"));
      for (const auto& a : slot.attributes) {
        auto v = values.find(a);
        if (v != values.end()) slot.values[a] = v->second;
      }
      if (slot.state == SlotState::unavailable) {
        // The owner could not vouch; read its last recertification from the ledger.
        Message m;
        m.put_text("idp", id_)
            .put_text("owner", owner)
            .put("flow", flow.request.nonce)
            .put("owner_key", doc.get("owner_key"))
            .put("attributes", encode_strings(slot.attributes));
        detail::send(bus, address(), comm(), "recert_lookup", "sp:8", m);
        slot.lookup_pending = true;
      }
    } catch (const std::exception&) {
      return abort(bus, key, 7, "document release failed for " + owner);
    }
  }
  const bool waiting =
      std::any_of(flow.slots.begin(), flow.slots.end(), [](const auto& s) { return s.second.lookup_pending; });
  if (!waiting) finish_assertion(bus, key);
}

void IdentityProvider::finish_assertion(net::Bus& bus, const std::string& key) {
  Flow& flow = flows_.at(key);
  const auto policy = flow.request.policy();
  const double factor = flow.from_storage ? options_.trust.staleness_factor : 1.0;
  std::vector<trust::AttributeAssertion> assertions;
  for (const auto& claim : flow.request.claims) {
    std::optional<std::string> value;
    std::vector<trust::SourceEvidence> sources;
    for (const auto& [owner, slot] : flow.slots) {
      auto v = slot.values.find(claim.attribute);
      auto r = slot.recert.find(claim.attribute);
      if (v == slot.values.end() || r == slot.recert.end()) continue;
      if (!value) value = v->second;
      if (v->second != *value) continue;
      auto cls = owner_classes_.find(owner);
      sources.push_back({owner, cls == owner_classes_.end() ? trust::SourceClass::other : cls->second, r->second,
                         slot.state != SlotState::unavailable});
    }
    if (sources.empty()) continue;
    assertions.push_back(trust::assert_attribute(claim.attribute, *value, sources, options_.weights, options_.trust,
                                                 bus.now(), policy, factor)
                             .assertion);
  }
  Message m;
  m.put("flow", flow.request.nonce).put("assertions", encode_assertions(assertions));
  detail::send(bus, address(), sp_address(flow.request.sp_id), "assertion", "sp:8", m);
  flows_.erase(key);
}

void IdentityProvider::abort(net::Bus& bus, const std::string& key, int stage, const std::string& reason) {
  Flow& flow = flows_.at(key);
  Message m;
  m.put("flow", flow.request.nonce).put_u64("stage", static_cast<std::uint64_t>(stage)).put_text("reason", reason);
  if (flow.store) {
    detail::send(bus, address(), flow.user, "store_failed", "store:" + std::to_string(stage), m);
  } else {
    const auto phase = "sp:" + std::to_string(stage);
    detail::send(bus, address(), flow.user, "flow_aborted", phase, m);
    detail::send(bus, address(), sp_address(flow.request.sp_id), "flow_aborted", phase, m);
  }
  flows_.erase(key);
}

void IdentityProvider::on_store_begin(net::Bus& bus, const net::Envelope& env, const Message& msg) {
  const auto username = session_user(msg.get("session"));
  if (!username) {
    Message m;
    m.put_text("reason", "no valid session");
    detail::send(bus, address(), env.from, "store_failed", "store:1", m);
    return;
  }
  Flow flow;
  flow.store = true;
  flow.username = *username;
  flow.user = env.from;
  flow.request.nonce = rng_.bytes(16);
  const auto owner = msg.text("owner");
  flow.slots[owner].owner = owner;
  const auto key = to_hex(flow.request.nonce);
  seen_nonces_.insert(key);
  Message m;
  m.put("flow", flow.request.nonce);
  flows_.emplace(key, std::move(flow));
  detail::send(bus, address(), env.from, "store_nonce", "store:1", m);
}

void IdentityProvider::on_store_envelope(net::Bus& bus, const std::string& key, Flow& flow, const Message& msg) {
  Slot& slot = flow.slots.begin()->second;
  if (!slot.envelope.empty()) return;
  if (msg.text("owner") != slot.owner) return abort(bus, key, 2, "owner does not match the request");
  const auto condition = msg.text("condition");
  const auto attrs = condition_attributes(condition, "store", flow.request.nonce);
  if (!attrs) return abort(bus, key, 2, "condition not bound to this flow");
  const auto env = ibcpre::Envelope::parse(msg.get("envelope"));
  if (env.level != ibcpre::Level::original || env.recipient != user_identity(detail::address_suffix(flow.user))) {
    return abort(bus, key, 2, "envelope not addressed to the user");
  }
  slot.condition = condition;
  slot.attributes = *attrs;
  slot.envelope = msg.get("envelope");
  Message keys;
  keys.put("flow", flow.request.nonce).put("keys", encode_blobs({msg.get("key")}));
  on_reencryption_keys(bus, key, flow, keys, "store:2");
}

Bytes IdentityProvider::persisted_state() const {
  Writer w;
  w.str16(id_).u32(static_cast<std::uint32_t>(profiles_.size()));
  for (const auto& [name, p] : profiles_) {
    w.str16(p.username).bytes16(p.password.serialize());
    w.bytes16(p.totp.key).u32(p.totp.step_seconds).u8(static_cast<std::uint8_t>(p.totp.digits));
    w.raw(key_bytes(p.registered_idp_xpub));
    w.u32(static_cast<std::uint32_t>(p.used_login_indices.size()));
    for (auto i : p.used_login_indices) w.u32(i);
    w.u32(static_cast<std::uint32_t>(p.stored_documents.size()));
    for (const auto& d : p.stored_documents) {
      w.str16(d.owner_id).str16(d.condition).bytes16(encode_strings(d.attributes));
      w.u64(static_cast<std::uint64_t>(d.verified_at)).bytes32(d.envelope.serialize());
    }
  }
  w.u32(static_cast<std::uint32_t>(seen_nonces_.size()));
  for (const auto& n : seen_nonces_) w.str16(n);
  return std::move(w).take();
}

}  // namespace fedid::actors
