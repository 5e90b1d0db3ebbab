#include "internal.hpp"

namespace fedid::actors {

ServiceProvider::ServiceProvider(std::string id, trust::ServicePolicy policy, Drbg rng)
    : id_(std::move(id)), policy_(std::move(policy)), rng_(std::move(rng)) {
  policy_.validate();
}

const ServiceProvider::Decision* ServiceProvider::decision(std::string_view nonce_hex) const {
  auto it = decisions_.find(nonce_hex);
  return it == decisions_.end() ? nullptr : &it->second;
}

void ServiceProvider::handle(net::Bus& bus, const net::Envelope& env, const Message& msg) {
  if (env.kind == "access_request" && detail::has_prefix(env.from, "user/")) {
    ClaimsRequest request{id_, {}, rng_.bytes(16)};
    for (const auto& [name, claim] : policy_.claims) request.claims.push_back({name, claim.threshold, claim.mandatory});
    decisions_[to_hex(request.nonce)] = Decision{env.from, msg.text("idp")};
    Message m;
    m.put("request", request.encode());
    detail::send(bus, address(), env.from, "claims_redirect", "sp:1", m);
    return;
  }

  auto it = decisions_.find(to_hex(msg.get("flow")));
  if (it == decisions_.end() || it->second.finished || env.from != idp_address(it->second.idp)) return;
  Decision& d = it->second;
  if (env.kind == "assertion") {
    d.assertions = decode_assertions(msg.get("assertions"));
    d.granted = trust::service_decision(policy_, d.assertions);
    d.finished = true;
    Message m;
    m.put("flow", msg.get("flow")).put_u64("granted", d.granted);
    detail::send(bus, address(), d.user, "access_decision", "sp:9", m);
  } else if (env.kind == "flow_aborted") {
    d.finished = true;
    d.aborted_stage = static_cast<int>(msg.u64("stage"));
    d.reason = msg.text("reason");
  }
}

Bytes ServiceProvider::persisted_state() const {
  Writer w;
  w.str16(id_).u32(static_cast<std::uint32_t>(decisions_.size()));
  for (const auto& [nonce, d] : decisions_) {
    w.str16(nonce).str16(d.user).str16(d.idp).u8(d.finished).u8(d.granted).u32(static_cast<std::uint32_t>(d.aborted_stage));
    w.bytes32(encode_assertions(d.assertions));
  }
  return std::move(w).take();
}

}  // namespace fedid::actors
