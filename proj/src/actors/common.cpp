#include <algorithm>

#include "fedid/actors.hpp"

namespace fedid::actors {

std::string user_address(std::string_view name) { return "user/" + std::string(name); }
std::string idp_address(std::string_view id) { return "idp/" + std::string(id); }
std::string sp_address(std::string_view id) { return "sp/" + std::string(id); }
std::string owner_address(std::string_view id) { return "owner/" + std::string(id); }

std::string user_identity(std::string_view name) { return "user:" + std::string(name); }
std::string idp_identity(std::string_view id) { return "idp:" + std::string(id); }
std::string owner_identity(std::string_view id) { return "owner:" + std::string(id); }

std::string flow_condition(std::string_view purpose, std::vector<std::string> attributes, ByteView nonce) {
  std::sort(attributes.begin(), attributes.end());
  std::string out(purpose);
  out += ':';
  for (std::size_t i = 0; i < attributes.size(); ++i) {
    if (i > 0) out += ',';
    out += attributes[i];
  }
  out += ':';
  out += to_hex(nonce);
  return out;
}

std::string_view to_string(OfflinePolicy p) { return p == OfflinePolicy::block ? "block" : "degrade"; }

OfflinePolicy offline_policy_from_string(std::string_view s) {
  if (s == "block") return OfflinePolicy::block;
  if (s == "degrade") return OfflinePolicy::degrade;
  throw ActorError("unknown offline policy: " + std::string(s));
}

std::string_view to_string(FlowStatus s) {
  switch (s) {
    case FlowStatus::granted:
      return "granted";
    case FlowStatus::denied:
      return "denied";
    case FlowStatus::aborted:
      return "aborted";
  }
  return "unknown";
}

Bytes ClaimsRequest::encode() const {
  std::vector<Bytes> items;
  for (const auto& c : claims) {
    Message m;
    m.put_text("attribute", c.attribute).put_f64("threshold", c.threshold).put_u64("mandatory", c.mandatory);
    items.push_back(m.serialize());
  }
  Message m;
  m.put_text("sp", sp_id).put("nonce", nonce).put("claims", encode_blobs(items));
  return m.serialize();
}

ClaimsRequest ClaimsRequest::decode(ByteView bytes) {
  const auto m = Message::parse(bytes);
  ClaimsRequest out{m.text("sp"), {}, m.get("nonce")};
  for (const auto& item : decode_blobs(m.get("claims"))) {
    const auto c = Message::parse(item);
    out.claims.push_back({c.text("attribute"), c.f64("threshold"), c.u64("mandatory") != 0});
  }
  return out;
}

trust::ServicePolicy ClaimsRequest::policy() const {
  trust::ServicePolicy p;
  for (const auto& c : claims) p.claims[c.attribute] = {c.threshold, c.mandatory};
  p.validate();
  return p;
}

Bytes encode_assertions(const std::vector<trust::AttributeAssertion>& assertions) {
  std::vector<Bytes> items;
  for (const auto& a : assertions) {
    std::vector<Bytes> sources;
    for (const auto& s : a.sources) {
      Message sm;
      sm.put_text("owner", s.owner_id)
          .put_text("class", trust::to_string(s.source_class))
          .put_u64("last_recert", static_cast<std::uint64_t>(s.last_recert))
          .put_u64("available", s.available);
      sources.push_back(sm.serialize());
    }
    Message m;
    m.put_text("name", a.name)
        .put_text("value", a.value)
        .put_f64("score", a.score)
        .put_u64("issued_at", static_cast<std::uint64_t>(a.issued_at))
        .put("sources", encode_blobs(sources));
    items.push_back(m.serialize());
  }
  return encode_blobs(items);
}

std::vector<trust::AttributeAssertion> decode_assertions(ByteView bytes) {
  std::vector<trust::AttributeAssertion> out;
  for (const auto& item : decode_blobs(bytes)) {
    const auto m = Message::parse(item);
    trust::AttributeAssertion a;
    a.name = m.text("name");
    a.value = m.text("value");
    a.score = m.f64("score");
    a.issued_at = static_cast<Timestamp>(m.u64("issued_at"));
    for (const auto& s : decode_blobs(m.get("sources"))) {
      const auto sm = Message::parse(s);
      a.sources.push_back({sm.text("owner"), trust::class_from_string(sm.text("class")),
                           static_cast<Timestamp>(sm.u64("last_recert")), sm.u64("available") != 0});
    }
    out.push_back(std::move(a));
  }
  return out;
}

void Endpoint::on_message(net::Bus& bus, const net::Envelope& env) {
  try {
    handle(bus, env, Message::parse(env.payload));
  } catch (const std::exception& e) {
    rejected_.push_back(env.kind + ": " + e.what());
  }
}

}  // namespace fedid::actors
