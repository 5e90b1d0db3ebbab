#include "internal.hpp"

namespace fedid::actors {

void CommServer::handle(net::Bus& bus, const net::Envelope& env, const Message& msg) {
  const auto sender = detail::address_suffix(env.from);
  const auto& kind = env.kind;

  if (detail::has_prefix(env.from, "idp/") && msg.text("idp") == sender) {
    if (kind == "verify_request") {
      const auto to = owner_address(msg.text("owner"));
      if (!bus.has_actor(to)) {
        Message m;
        m.put_text("idp", sender).put("owner", msg.get("owner")).put("flow", msg.get("flow"));
        m.put_text("reason", "unknown destination");
        detail::send(bus, address(), env.from, "route_error", env.phase, m);
        return;
      }
      bus.send(address(), to, kind, env.phase, env.payload);  // unmodified
      ++forwarded_to_owners_;
    } else if (kind == "recert_lookup") {
      const auto key = hd::ExtendedPublicKey::deserialize(msg.get("owner_key"));
      Message recert;
      Message heights;
      for (const auto& attribute : decode_strings(msg.get("attributes"))) {
        if (auto r = ledger_.latest_recertification(key, attribute)) {
          recert.put_u64(attribute, static_cast<std::uint64_t>(r->timestamp));
          heights.put_u64(attribute, r->height);
        }
      }
      Message m;
      m.put("owner", msg.get("owner"))
          .put("flow", msg.get("flow"))
          .put("recert", recert.serialize())
          .put("heights", heights.serialize());
      detail::send(bus, address(), env.from, "recert_info", env.phase, m);
    }
    return;
  }

  if (!detail::has_prefix(env.from, "owner/")) return;
  if ((kind == "verify_result" || kind == "verify_error") && msg.text("owner") == sender) {
    const auto to = idp_address(msg.text("idp"));
    if (bus.has_actor(to)) bus.send(address(), to, kind, env.phase, env.payload);
  } else if (kind == "ledger_append") {
    Reader r(msg.get("record"));
    auto record = ledger::TransactionRecord::parse(r);
    r.expect_done();
    bool ok = record.data_owner_id == sender;
    if (ok) {
      try {
        ledger_.submit(std::move(record));
      } catch (const ledger::LedgerError&) {
        ok = false;
      }
    }
    Message ack;
    ack.put_u64("ok", ok);
    detail::send(bus, address(), env.from, "ledger_ack", env.phase, ack);
    if (msg.has("flow")) {
      const auto to = idp_address(msg.text("idp"));
      Message m;
      m.put_text("owner", sender).put("flow", msg.get("flow")).put_u64("ok", ok);
      if (bus.has_actor(to)) detail::send(bus, address(), to, "ledger_receipt", env.phase, m);
    }
  }
}

void CommServer::on_delivery_failure(net::Bus& bus, const net::Envelope& env) {
  if (env.kind != "verify_request") return;
  try {
    const auto msg = Message::parse(env.payload);
    Message m;
    m.put("idp", msg.get("idp")).put("owner", msg.get("owner")).put("flow", msg.get("flow"));
    detail::send(bus, address(), idp_address(msg.text("idp")), "owner_unavailable", env.phase, m);
  } catch (const std::exception&) {
  }
}

}  // namespace fedid::actors
