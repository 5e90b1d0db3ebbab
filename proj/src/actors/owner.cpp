#include "internal.hpp"

namespace fedid::actors {

DataOwner::DataOwner(std::string id, trust::SourceClass source_class, ibcpre::IdentitySecretKey ibc_key,
                     ec::Scalar member_key)
    : id_(std::move(id)), class_(source_class), ibc_key_(std::move(ibc_key)), member_key_(member_key) {}

const IdentityDocument* DataOwner::document(const hd::ExtendedPublicKey& key) const {
  auto it = documents_.find(key.serialize());
  return it == documents_.end() ? nullptr : &it->second;
}

std::uint32_t DataOwner::next_counter(const hd::ExtendedPublicKey& key) { return counters_[key.serialize()]++; }

void DataOwner::append(net::Bus& bus, const std::string& phase, ledger::TransactionRecord record,
                       const Message* receipt_for) {
  Message m;
  m.put("record", record.serialize());
  if (receipt_for != nullptr) {
    m.put("idp", receipt_for->get("idp")).put("flow", receipt_for->get("flow"));
  }
  detail::send(bus, address(), std::string(kCommAddress), "ledger_append", phase, m);
}

VerificationResult DataOwner::verify_identity_claim(const hd::ExtendedPublicKey& key,
                                                    const std::map<std::string, std::string>& claimed,
                                                    bool include_recert) const {
  const auto* doc = document(key);
  if (doc == nullptr) throw ActorError("unknown pseudo-identifier");
  VerificationResult result{id_, ledger::Outcome::verified, {}};
  for (const auto& [name, value] : claimed) {
    auto it = doc->attributes.find(name);
    if (it == doc->attributes.end() || !ct_equal(as_bytes(it->second.value), as_bytes(value))) {
      result.outcome = ledger::Outcome::mismatch;
    } else if (include_recert) {
      result.latest_recert.push_back({name, it->second.last_recert, std::nullopt});
    }
  }
  if (result.outcome == ledger::Outcome::mismatch) result.latest_recert.clear();
  return result;
}

void DataOwner::begin_recertify(net::Bus& bus, const hd::ExtendedPublicKey& key,
                                const std::map<std::string, std::optional<std::string>>& attributes) {
  auto it = documents_.find(key.serialize());
  if (it == documents_.end()) throw ActorError("unknown pseudo-identifier");
  for (const auto& [name, value] : attributes) {
    if (!it->second.attributes.count(name)) throw ActorError("attribute not on record: " + name);
  }
  for (const auto& [name, value] : attributes) {
    auto& rec = it->second.attributes.at(name);
    if (value) rec.value = *value;
    rec.last_recert = bus.now();
    append(bus, "recertify", ledger::recertification_record(key, next_counter(key), id_, bus.now(), name),
           nullptr);
  }
}

void DataOwner::handle(net::Bus& bus, const net::Envelope& env, const Message& msg) {
  if (env.kind == "register") {
    on_register(bus, env, msg);
  } else if (env.kind == "verify_request" && env.from == kCommAddress) {
    on_verify_request(bus, env, msg);
  }
  // ledger_ack and ledger_error need no action.
}

void DataOwner::on_register(net::Bus& bus, const net::Envelope& env, const Message& msg) {
  const auto key = hd::ExtendedPublicKey::deserialize(msg.get("owner_key"));
  const auto attributes = decode_string_map(msg.get("attributes"));
  if (documents_.count(key.serialize())) {
    Message m;
    m.put_text("reason", "duplicate registration");
    detail::send(bus, address(), env.from, "register_error", "register", m);
    return;
  }
  IdentityDocument doc{key, {}, class_};
  for (const auto& [name, value] : attributes) doc.attributes[name] = {value, bus.now()};
  documents_.emplace(key.serialize(), std::move(doc));
  for (const auto& [name, value] : attributes) {
    append(bus, "register", ledger::recertification_record(key, next_counter(key), id_, bus.now(), name),
           nullptr);
  }
  detail::send(bus, address(), env.from, "register_ok", "register", Message{});
}

void DataOwner::on_verify_request(net::Bus& bus, const net::Envelope&, const Message& msg) {
  const bool store = msg.text("purpose") == "store";
  const std::string result_phase = store ? "store:3" : "sp:5";
  const std::string ledger_phase = store ? "store:3" : "sp:6";
  auto reply_error = [&](const std::string& reason) {
    Message m;
    m.put("idp", msg.get("idp")).put_text("owner", id_).put("flow", msg.get("flow")).put_text("reason", reason);
    detail::send(bus, address(), std::string(kCommAddress), "verify_error", result_phase, m);
  };

  Bytes plaintext;
  try {
    plaintext = ibcpre::decrypt(ibc_key_, msg.get("envelope"), ibcpre::ConditionTag(msg.text("condition")));
  } catch (const std::exception&) {
    reply_error("decryption failed");
    return;
  }
  const auto doc = Message::parse(plaintext);
  const auto key = hd::ExtendedPublicKey::deserialize(doc.get("owner_key"));
  const auto claimed = decode_string_map(doc.get("attributes"));
  if (document(key) == nullptr) {
    reply_error("unknown pseudo-identifier");
    return;
  }
  const auto result = verify_identity_claim(key, claimed, !store);

  Message recert;
  for (const auto& r : result.latest_recert) recert.put_u64(r.attribute, static_cast<std::uint64_t>(r.timestamp));
  Message m;
  m.put("idp", msg.get("idp"))
      .put_text("owner", id_)
      .put("flow", msg.get("flow"))
      .put_u64("outcome", static_cast<std::uint64_t>(result.outcome))
      .put("recert", recert.serialize());
  detail::send(bus, address(), std::string(kCommAddress), "verify_result", result_phase, m);

  std::vector<std::string> names;
  for (const auto& [name, value] : claimed) names.push_back(name);
  ledger::DataAccessDetails details{msg.text("idp"), msg.text("sp"), std::move(names), result.outcome};
  append(bus, ledger_phase,
         ledger::data_access_record(key, next_counter(key), id_, bus.now(), std::move(details)), &msg);
  ++verifications_;
}

Bytes DataOwner::persisted_state() const {
  Writer w;
  w.str16(id_).str16(trust::to_string(class_)).u32(static_cast<std::uint32_t>(documents_.size()));
  for (const auto& [key, doc] : documents_) {
    const auto counter = counters_.find(key);
    w.raw(key).u32(counter == counters_.end() ? 0 : counter->second).u16(static_cast<std::uint16_t>(doc.attributes.size()));
    for (const auto& [name, rec] : doc.attributes) {
      w.str16(name).str16(rec.value).u64(static_cast<std::uint64_t>(rec.last_recert));
    }
  }
  return std::move(w).take();
}

}  // namespace fedid::actors
