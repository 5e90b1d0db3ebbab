#include <set>

#include "scenario.hpp"

namespace fedid::scenario {

namespace {

// Login indices probed per IDP key when scanning for leaked user scalars.
constexpr std::uint32_t kLoginIndexScan = 64;

struct Secret {
  std::string label;
  Bytes bytes;
};

std::vector<Secret> attribute_values(const Scenario& s) {
  std::set<std::string> seen;
  std::vector<Secret> out;
  auto add = [&](const std::string& who, const json& v) {
    if (!v.is_string() || v.get<std::string>().empty()) return;
    const auto value = v.get<std::string>();
    if (seen.insert(value).second) out.push_back({"attribute value of " + who, to_bytes(value)});
  };
  for (const auto& st : s.steps) {
    if (st.kind == "register" || st.kind == "recertify") {
      for (const auto& [name, v] : st.args["attributes"].items()) add(st.args["user"].get<std::string>() + "." + name, v);
    } else if (st.kind == "sp_login") {
      for (const auto& [name, v] : st.args["claim_overrides"].items()) add(st.args["user"].get<std::string>() + "." + name, v);
    }
  }
  return out;
}

std::vector<Secret> user_scalars(const Scenario& s) {
  std::vector<Secret> out;
  auto add = [&](const std::string& label, const ec::Scalar& k) {
    out.push_back({label, Bytes(k.bytes().begin(), k.bytes().end())});
  };
  const auto owners = static_cast<std::uint32_t>(s.config.owners.size());
  const auto idps = static_cast<std::uint32_t>(s.config.idps.size());
  for (const auto& u : s.config.users) {
    const auto roots = hd::layout::RootKeys::from_seed(u.seed, s.config.mode);
    add(u.name + " data access root", roots.data_access.scalar());
    add(u.name + " data authorization root", roots.data_authorization.scalar());
    for (std::uint32_t i = 0; i < owners; ++i) {
      add(u.name + " owner key " + std::to_string(i), hd::layout::data_owner_key(roots.data_access, i).scalar());
    }
    for (std::uint32_t i = 0; i < idps; ++i) {
      const auto idp_key = hd::layout::identity_provider_key(roots.data_authorization, i);
      add(u.name + " idp key " + std::to_string(i), idp_key.scalar());
      for (std::uint32_t j = 0; j < kLoginIndexScan; ++j) {
        add(u.name + " login key " + std::to_string(i) + "/" + std::to_string(j),
            hd::layout::login_key(idp_key, j).scalar());
      }
    }
  }
  return out;
}

// The raw file plus every hex line decoded, so both encodings are covered.
std::vector<Bytes> ledger_views(const std::string& text) {
  std::vector<Bytes> views{to_bytes(text)};
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    try {
      views.push_back(from_hex(std::string_view(text).substr(pos, nl - pos)));
    } catch (const std::exception&) {
      // Header and damaged lines are covered by the raw view.
    }
    pos = nl + 1;
  }
  return views;
}

json scan(const std::vector<Bytes>& haystacks, const std::vector<Secret>& needles) {
  json hits = json::array();
  for (const auto& n : needles) {
    for (const auto& h : haystacks) {
      if (contains(h, n.bytes)) {
        hits.push_back(n.label);
        break;
      }
    }
  }
  return hits;
}

void bump(json& counts, const std::string& key) {
  if (!counts.is_object()) counts = json::object();
  counts[key] = counts.value(key, std::size_t{0}) + 1;
}

}  // namespace

json audit(const AuditInputs& in) {
  const auto& s = *in.scenario;
  json report = json::object();

  std::optional<ledger::Ledger> l;
  json chain = json::object();
  try {
    l = ledger::Ledger::load(in.ledger_text);
  } catch (const std::exception& e) {
    chain = {{"ok", false}, {"defect", std::string("parse: ") + e.what()}};
  }
  if (l) {
    if (l->config().channel_id != s.config.channel_id) {
      throw AuditError("ledger channel '" + l->config().channel_id + "' does not belong to this scenario");
    }
    std::set<std::string> members, owners;
    for (const auto& m : l->config().members) members.insert(m.id);
    for (const auto& o : s.config.owners) owners.insert(o.id);
    if (members != owners) throw AuditError("ledger members do not match the scenario's data owners");
    const auto defect = l->find_defect();
    chain = {{"ok", !defect.has_value()}, {"blocks", l->blocks().size()}, {"height", l->tip_height()}};
    if (defect) chain["defect"] = *defect;
  }
  report["chain"] = chain;

  if (l) {
    json totals = {{"data_access", 0}, {"data_access_verified", 0}, {"recertification", 0}};
    json per_owner = json::object();
    for (const auto& o : s.config.owners) per_owner[o.id] = {{"data_access", 0}, {"recertification", 0}};
    for (const auto& b : l->blocks()) {
      for (const auto& tx : b.txs) {
        const auto kind = std::string(ledger::to_string(tx.kind()));
        totals[kind] = totals[kind].get<std::size_t>() + 1;
        if (const auto* da = std::get_if<ledger::DataAccessDetails>(&tx.payload);
            da != nullptr && da->outcome == ledger::Outcome::verified) {
          totals["data_access_verified"] = totals["data_access_verified"].get<std::size_t>() + 1;
        }
        bump(per_owner[tx.data_owner_id], kind);
      }
    }
    report["totals"] = totals;
    report["owners"] = per_owner;

    json users = json::object();
    for (const auto& u : s.config.users) {
      const auto roots = hd::layout::RootKeys::from_seed(u.seed, s.config.mode);
      const auto records = l->trace_by_parent_key(roots.data_access);
      json mine = {{"records", records.size()}, {"data_access", 0}, {"recertification", 0}};
      json by_owner = json::object();
      json txs = json::array();
      for (const auto& tx : records) {
        const auto kind = std::string(ledger::to_string(tx.kind()));
        mine[kind] = mine[kind].get<std::size_t>() + 1;
        bump(by_owner[tx.data_owner_id], kind);
        json t = {{"timestamp", tx.timestamp},
                  {"owner", tx.data_owner_id},
                  {"kind", kind},
                  {"txn_pubkey", to_hex(tx.txn_pubkey.compressed())}};
        if (const auto* da = std::get_if<ledger::DataAccessDetails>(&tx.payload)) {
          t["idp"] = da->idp_id;
          t["sp"] = da->sp_id;
          t["attributes"] = da->requested_attributes;
          t["outcome"] = ledger::to_string(da->outcome);
        } else {
          t["attribute"] = std::get<ledger::RecertificationDetails>(tx.payload).attribute;
        }
        txs.push_back(t);
      }
      mine["per_owner"] = by_owner;
      mine["transactions"] = txs;
      users[u.name] = mine;
    }
    report["users"] = users;
  }

  const auto values = attribute_values(s);
  const auto scalars = user_scalars(s);
  auto secrets = values;
  secrets.insert(secrets.end(), scalars.begin(), scalars.end());
  const auto ledger_hits = scan(ledger_views(in.ledger_text), secrets);
  json idp_hits = json::object();
  bool clean = ledger_hits.empty();
  for (const auto& [id, state] : in.idp_states) {
    idp_hits[id] = scan({state}, secrets);
    clean = clean && idp_hits[id].empty();
  }
  report["privacy"] = {{"clean", clean},
                       {"values_scanned", values.size()},
                       {"scalars_scanned", scalars.size()},
                       {"ledger_matches", ledger_hits},
                       {"idp_state_matches", idp_hits}};
  return report;
}

bool audit_clean(const json& report) {
  return report.at("chain").at("ok").get<bool>() && report.at("privacy").at("clean").get<bool>();
}

}  // namespace fedid::scenario
