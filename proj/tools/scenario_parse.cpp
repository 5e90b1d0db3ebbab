#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "scenario.hpp"

namespace fedid::scenario {

namespace {

int line_of(const YAML::Node& n) {
  const auto m = n.Mark();
  return m.line < 0 ? 0 : m.line + 1;
}

[[noreturn]] void fail(const YAML::Node& n, const std::string& message) { throw ParseError(line_of(n), message); }

void require_map(const YAML::Node& n, const std::string& what) {
  if (!n.IsMap()) fail(n, what + " must be a mapping");
}

void require_seq(const YAML::Node& n, const std::string& what) {
  if (!n.IsSequence()) fail(n, what + " must be a list");
}

void allow_keys(const YAML::Node& map, std::initializer_list<std::string_view> keys, const std::string& what) {
  for (const auto& kv : map) {
    const auto key = kv.first.as<std::string>();
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) fail(kv.first, "unknown key '" + key + "' in " + what);
  }
}

YAML::Node required(const YAML::Node& map, const std::string& key, const std::string& what) {
  const auto n = map[key];
  if (!n) fail(map, what + " is missing '" + key + "'");
  return n;
}

std::string str(const YAML::Node& n, const std::string& what) {
  if (!n.IsScalar()) fail(n, what + " must be a string");
  return n.as<std::string>();
}

std::string id(const YAML::Node& n, const std::string& what) {
  auto s = str(n, what);
  if (s.empty() || s.find_first_of("/ \t\n") != std::string::npos) {
    fail(n, what + " must be nonempty without '/' or whitespace");
  }
  return s;
}

template <typename T>
T scalar(const YAML::Node& n, const std::string& what, const char* type) {
  if (!n.IsScalar()) fail(n, what + " must be " + type);
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    fail(n, what + " must be " + type);
  }
}

double number(const YAML::Node& n, const std::string& what) { return scalar<double>(n, what, "a number"); }
std::int64_t integer(const YAML::Node& n, const std::string& what) { return scalar<std::int64_t>(n, what, "an integer"); }
bool boolean(const YAML::Node& n, const std::string& what) { return scalar<bool>(n, what, "true or false"); }

std::uint64_t unsigned_integer(const YAML::Node& n, const std::string& what) {
  const auto v = integer(n, what);
  if (v < 0) fail(n, what + " must be non-negative");
  return static_cast<std::uint64_t>(v);
}

std::vector<std::string> strings(const YAML::Node& n, const std::string& what) {
  require_seq(n, what);
  std::vector<std::string> out;
  for (const auto& e : n) out.push_back(str(e, what + " entry"));
  return out;
}

std::map<std::string, std::string> string_map(const YAML::Node& n, const std::string& what) {
  require_map(n, what);
  std::map<std::string, std::string> out;
  for (const auto& kv : n) out[kv.first.as<std::string>()] = str(kv.second, what + " value");
  return out;
}

// Declared ids, for use-before-definition checks.
struct Names {
  std::set<std::string> owners, idps, sps, users, addresses;

  void check(const std::set<std::string>& set, const YAML::Node& n, const std::string& role) const {
    const auto v = n.as<std::string>();
    if (!set.count(v)) fail(n, "undeclared " + role + " '" + v + "'");
  }
};

net::Match match(const YAML::Node& n, const std::string& what) {
  require_map(n, what);
  allow_keys(n, {"from", "to", "kind", "byte", "mask"}, what);
  net::Match m;
  if (n["from"]) m.from = str(n["from"], what + " from");
  if (n["to"]) m.to = str(n["to"], what + " to");
  if (n["kind"]) m.kind = str(n["kind"], what + " kind");
  return m;
}

net::FaultConfig faults(const YAML::Node& n, const Names& names) {
  require_map(n, "faults");
  allow_keys(n, {"offline", "drop", "tamper"}, "faults");
  net::FaultConfig f;
  if (n["offline"]) {
    require_seq(n["offline"], "faults offline");
    for (const auto& a : n["offline"]) {
      names.check(names.addresses, a, "actor address");
      f.offline.insert(a.as<std::string>());
    }
  }
  if (n["drop"]) {
    require_seq(n["drop"], "faults drop");
    for (const auto& m : n["drop"]) {
      if (m["byte"] || m["mask"]) fail(m, "drop rules take only from, to and kind");
      f.drop.push_back(match(m, "drop rule"));
    }
  }
  if (n["tamper"]) {
    require_seq(n["tamper"], "faults tamper");
    for (const auto& t : n["tamper"]) {
      net::TamperRule rule{match(t, "tamper rule"), -1, 0x01};
      if (t["byte"]) rule.byte_index = integer(t["byte"], "tamper byte");
      if (t["mask"]) {
        const auto mask = integer(t["mask"], "tamper mask");
        if (mask < 1 || mask > 255) fail(t["mask"], "tamper mask must be in 1..255");
        rule.mask = static_cast<std::uint8_t>(mask);
      }
      f.tamper.push_back(rule);
    }
  }
  return f;
}

void parse_trust(const YAML::Node& n, actors::DeploymentConfig& c) {
  require_map(n, "trust");
  allow_keys(n, {"half_life_days", "half_life_seconds", "unavailability_penalty", "staleness_factor", "weights"},
             "trust");
  if (n["half_life_days"] && n["half_life_seconds"]) fail(n, "give half_life_days or half_life_seconds, not both");
  std::optional<std::int64_t> half_life;
  if (n["half_life_days"]) half_life = integer(n["half_life_days"], "half_life_days") * 86400;
  if (n["half_life_seconds"]) half_life = integer(n["half_life_seconds"], "half_life_seconds");
  if (half_life) {
    if (*half_life <= 0) fail(n, "half-life must be positive");
    c.trust.half_life_seconds = *half_life;
  }
  auto unit = [&](const char* key, double& out) {
    if (!n[key]) return;
    const auto v = number(n[key], key);
    if (!(v > 0.0 && v <= 1.0)) fail(n[key], std::string(key) + " must be in (0, 1]");
    out = v;
  };
  unit("unavailability_penalty", c.trust.unavailability_penalty);
  unit("staleness_factor", c.trust.staleness_factor);
  if (n["weights"]) {
    require_map(n["weights"], "trust weights");
    for (const auto& kv : n["weights"]) {
      try {
        c.weights.set(trust::class_from_string(kv.first.as<std::string>()), number(kv.second, "weight"));
      } catch (const trust::TrustError& e) {
        fail(kv.first, e.what());
      }
    }
  }
}

trust::ServicePolicy service_policy(const YAML::Node& n) {
  require_seq(n, "sp claims");
  trust::ServicePolicy p;
  for (const auto& c : n) {
    require_map(c, "claim");
    allow_keys(c, {"attribute", "threshold", "mandatory"}, "claim");
    const auto name = str(required(c, "attribute", "claim"), "claim attribute");
    if (p.claims.count(name)) fail(c, "duplicate claim '" + name + "'");
    trust::ClaimPolicy cp;
    cp.threshold = number(required(c, "threshold", "claim"), "claim threshold");
    if (!(cp.threshold >= 0.0 && cp.threshold <= 1.0)) fail(c["threshold"], "threshold must be in [0, 1]");
    if (c["mandatory"]) cp.mandatory = boolean(c["mandatory"], "claim mandatory");
    p.claims[name] = cp;
  }
  return p;
}

// Expectation keys and the JSON type each must carry.
enum class Kind { boolean, integer, string, scores, ratio };

const std::map<std::string, std::map<std::string, Kind>>& expect_keys() {
  static const std::map<std::string, std::map<std::string, Kind>> keys = {
      {"register", {{"success", Kind::boolean}, {"recertification", Kind::integer}}},
      {"signup", {{"success", Kind::boolean}}},
      {"login", {{"success", Kind::boolean}, {"failed_stage", Kind::string}}},
      {"sp_login",
       {{"status", Kind::string},
        {"aborted_stage", Kind::integer},
        {"scores", Kind::scores},
        {"score_ratio", Kind::ratio},
        {"data_access", Kind::integer},
        {"data_access_verified", Kind::integer},
        {"owner_contacts", Kind::integer}}},
      {"store_identity", {{"success", Kind::boolean}, {"owner_contacts", Kind::integer}, {"data_access", Kind::integer}}},
      {"recertify", {{"recertification", Kind::integer}}},
      {"advance_clock", {}},
      {"set_offline", {}},
      {"trace", {{"records", Kind::integer}, {"data_access", Kind::integer}, {"recertification", Kind::integer}}},
      {"verify_chain", {{"ok", Kind::boolean}}},
  };
  return keys;
}

json parse_expect(const YAML::Node& n, const std::string& kind, const std::vector<Step>& earlier) {
  require_map(n, "expect");
  json out = json::object();
  const auto& allowed = expect_keys().at(kind);
  for (const auto& kv : n) {
    const auto key = kv.first.as<std::string>();
    if (key == "error") {
      out[key] = str(kv.second, "expected error");
      continue;
    }
    auto it = allowed.find(key);
    if (it == allowed.end()) fail(kv.first, "'" + key + "' cannot be expected of a " + kind + " step");
    switch (it->second) {
      case Kind::boolean:
        out[key] = boolean(kv.second, key);
        break;
      case Kind::integer:
        out[key] = integer(kv.second, key);
        break;
      case Kind::string:
        out[key] = str(kv.second, key);
        if (key == "status" && out[key] != "granted" && out[key] != "denied" && out[key] != "aborted") {
          fail(kv.second, "status must be granted, denied or aborted");
        }
        if (key == "failed_stage" && out[key] != "password" && out[key] != "totp" && out[key] != "key") {
          fail(kv.second, "failed_stage must be password, totp or key");
        }
        break;
      case Kind::scores: {
        require_map(kv.second, "expected scores");
        json scores = json::object();
        for (const auto& s : kv.second) scores[s.first.as<std::string>()] = number(s.second, "expected score");
        out[key] = scores;
        break;
      }
      case Kind::ratio: {
        require_map(kv.second, "score_ratio");
        allow_keys(kv.second, {"step", "factor"}, "score_ratio");
        const auto step = integer(required(kv.second, "step", "score_ratio"), "score_ratio step");
        if (step < 1 || static_cast<std::size_t>(step) > earlier.size() ||
            earlier[static_cast<std::size_t>(step) - 1].kind != "sp_login") {
          fail(kv.second, "score_ratio step must name an earlier sp_login step");
        }
        out[key] = {{"step", step}, {"factor", number(required(kv.second, "factor", "score_ratio"), "factor")}};
        break;
      }
    }
  }
  return out;
}

Step parse_step(const YAML::Node& n, const Names& names, const std::vector<Step>& earlier) {
  require_map(n, "step");
  Step step;
  step.line = line_of(n);
  YAML::Node args;
  for (const auto& kv : n) {
    const auto key = kv.first.as<std::string>();
    if (key == "expect") continue;
    if (!expect_keys().count(key)) fail(kv.first, "unknown step kind '" + key + "'");
    if (!step.kind.empty()) fail(kv.first, "a step names exactly one kind");
    step.kind = key;
    args = kv.second;
  }
  if (step.kind.empty()) fail(n, "step names no kind");
  step.expect = n["expect"] ? parse_expect(n["expect"], step.kind, earlier) : json::object();
  const auto& k = step.kind;
  if (args.IsNull()) args = YAML::Node(YAML::NodeType::Map);
  require_map(args, k + " arguments");
  auto& a = step.args;
  a = json::object();

  auto user = [&] {
    names.check(names.users, required(args, "user", k), "user");
    a["user"] = args["user"].as<std::string>();
  };
  auto owner = [&] {
    names.check(names.owners, required(args, "owner", k), "owner");
    a["owner"] = args["owner"].as<std::string>();
  };
  auto idp = [&] {
    names.check(names.idps, required(args, "idp", k), "identity provider");
    a["idp"] = args["idp"].as<std::string>();
  };

  if (k == "register") {
    allow_keys(args, {"user", "owner", "attributes"}, k);
    user();
    owner();
    a["attributes"] = string_map(required(args, "attributes", k), "attributes");
    if (a["attributes"].empty()) fail(args, "register needs at least one attribute");
  } else if (k == "signup") {
    allow_keys(args, {"user", "idp", "username", "password"}, k);
    user();
    idp();
    a["username"] = args["username"] ? str(args["username"], "username") : a["user"].get<std::string>();
    a["password"] = str(required(args, "password", k), "password");
  } else if (k == "login") {
    allow_keys(args, {"user", "idp", "password", "totp", "index"}, k);
    user();
    idp();
    if (args["password"]) a["password"] = str(args["password"], "password");
    if (args["totp"]) a["totp"] = str(args["totp"], "totp");
    if (args["index"]) {
      const auto i = unsigned_integer(args["index"], "index");
      if (i >= hd::kHardenedBit) fail(args["index"], "login index must be non-hardened");
      a["index"] = i;
    }
  } else if (k == "sp_login") {
    allow_keys(args, {"user", "sp", "idp", "owners", "stored", "claim_overrides"}, k);
    user();
    names.check(names.sps, required(args, "sp", k), "service provider");
    a["sp"] = args["sp"].as<std::string>();
    idp();
    if (args["owners"]) {
      require_seq(args["owners"], "owners");
      json owners = json::array();
      for (const auto& o : args["owners"]) {
        names.check(names.owners, o, "owner");
        owners.push_back(o.as<std::string>());
      }
      a["owners"] = owners;
    }
    a["stored"] = args["stored"] ? boolean(args["stored"], "stored") : false;
    a["claim_overrides"] =
        args["claim_overrides"] ? json(string_map(args["claim_overrides"], "claim_overrides")) : json::object();
  } else if (k == "store_identity") {
    allow_keys(args, {"user", "idp", "owner", "attributes"}, k);
    user();
    idp();
    owner();
    a["attributes"] = strings(required(args, "attributes", k), "attributes");
    if (a["attributes"].empty()) fail(args, "store_identity needs at least one attribute");
  } else if (k == "advance_clock") {
    allow_keys(args, {"seconds", "days"}, k);
    if (static_cast<bool>(args["seconds"]) == static_cast<bool>(args["days"])) {
      fail(args, "advance_clock takes exactly one of seconds or days");
    }
    const auto v = args["seconds"] ? integer(args["seconds"], "seconds") : integer(args["days"], "days") * 86400;
    if (v < 0) fail(args, "the clock cannot move backwards");
    a["seconds"] = v;
  } else if (k == "recertify") {
    allow_keys(args, {"owner", "user", "attributes"}, k);
    owner();
    user();
    const auto attrs = required(args, "attributes", k);
    json out = json::object();
    if (attrs.IsSequence()) {
      for (const auto& name : attrs) out[str(name, "attribute")] = nullptr;
    } else {
      require_map(attrs, "attributes");
      for (const auto& kv : attrs) {
        out[kv.first.as<std::string>()] = kv.second.IsNull() ? json(nullptr) : json(str(kv.second, "value"));
      }
    }
    if (out.empty()) fail(attrs, "recertify needs at least one attribute");
    a["attributes"] = out;
  } else if (k == "set_offline") {
    allow_keys(args, {"actor", "offline"}, k);
    names.check(names.addresses, required(args, "actor", k), "actor address");
    a["actor"] = args["actor"].as<std::string>();
    a["offline"] = args["offline"] ? boolean(args["offline"], "offline") : true;
  } else if (k == "trace") {
    allow_keys(args, {"user", "gap"}, k);
    user();
    const auto gap = args["gap"] ? unsigned_integer(args["gap"], "gap") : ledger::kDefaultGapLimit;
    if (gap == 0) fail(args["gap"], "gap must be positive");
    a["gap"] = gap;
  } else if (k == "verify_chain") {
    allow_keys(args, {}, k);
  }
  return step;
}

Scenario parse_root(const YAML::Node& root) {
  if (!root.IsMap()) throw ParseError(line_of(root), "scenario must be a mapping");
  allow_keys(root,
             {"schema", "seed", "mode", "paper_literal_login", "start_time", "offline_policy", "channel", "trust",
              "owners", "idps", "sps", "users", "faults", "max_steps", "steps"},
             "scenario");
  const auto schema = required(root, "schema", "scenario");
  if (str(schema, "schema") != kSchema) fail(schema, "unsupported schema (expected " + std::string(kSchema) + ")");

  Scenario s;
  auto& c = s.config;
  c.seed = unsigned_integer(required(root, "seed", "scenario"), "seed");
  if (root["mode"]) {
    try {
      c.mode = hd::mode_from_string(str(root["mode"], "mode"));
    } catch (const std::exception&) {
      fail(root["mode"], "mode must be additive or multiplicative");
    }
  }
  if (root["paper_literal_login"]) c.paper_literal_login = boolean(root["paper_literal_login"], "paper_literal_login");
  if (root["start_time"]) c.start_time = integer(root["start_time"], "start_time");
  if (root["offline_policy"]) {
    try {
      c.offline_policy = actors::offline_policy_from_string(str(root["offline_policy"], "offline_policy"));
    } catch (const std::exception&) {
      fail(root["offline_policy"], "offline_policy must be block or degrade");
    }
  }
  if (root["max_steps"]) c.max_steps = unsigned_integer(root["max_steps"], "max_steps");
  if (root["trust"]) parse_trust(root["trust"], c);

  Names names;
  names.addresses.insert(std::string(actors::kCommAddress));
  const auto owners = required(root, "owners", "scenario");
  require_seq(owners, "owners");
  if (owners.size() == 0) fail(owners, "at least one owner is required");
  for (const auto& o : owners) {
    require_map(o, "owner");
    allow_keys(o, {"id", "class"}, "owner");
    actors::OwnerSpec spec;
    spec.id = id(required(o, "id", "owner"), "owner id");
    if (!names.owners.insert(spec.id).second) fail(o, "duplicate owner '" + spec.id + "'");
    try {
      spec.source_class = trust::class_from_string(str(required(o, "class", "owner"), "owner class"));
    } catch (const trust::TrustError& e) {
      fail(o["class"], e.what());
    }
    names.addresses.insert(actors::owner_address(spec.id));
    c.owners.push_back(spec);
  }

  if (root["channel"]) {
    const auto ch = root["channel"];
    require_map(ch, "channel");
    allow_keys(ch, {"id", "quorum"}, "channel");
    if (ch["id"]) c.channel_id = id(ch["id"], "channel id");
    if (ch["quorum"]) {
      const auto q = unsigned_integer(ch["quorum"], "quorum");
      if (q < 1 || q > c.owners.size()) fail(ch["quorum"], "quorum must be between 1 and the number of owners");
      c.quorum = static_cast<std::uint32_t>(q);
    }
  }

  for (const auto& i : strings(required(root, "idps", "scenario"), "idps")) {
    if (!names.idps.insert(i).second) fail(root["idps"], "duplicate identity provider '" + i + "'");
    names.addresses.insert(actors::idp_address(i));
    c.idps.push_back(i);
  }
  if (c.idps.empty()) fail(root["idps"], "at least one identity provider is required");

  if (root["sps"]) {
    require_seq(root["sps"], "sps");
    for (const auto& sp : root["sps"]) {
      require_map(sp, "sp");
      allow_keys(sp, {"id", "claims"}, "sp");
      actors::SpSpec spec;
      spec.id = id(required(sp, "id", "sp"), "sp id");
      if (!names.sps.insert(spec.id).second) fail(sp, "duplicate service provider '" + spec.id + "'");
      spec.policy = service_policy(required(sp, "claims", "sp"));
      names.addresses.insert(actors::sp_address(spec.id));
      c.sps.push_back(std::move(spec));
    }
  }

  const auto users = required(root, "users", "scenario");
  require_seq(users, "users");
  for (const auto& u : users) {
    require_map(u, "user");
    allow_keys(u, {"name", "seed", "consent"}, "user");
    actors::UserSpec spec;
    spec.name = id(required(u, "name", "user"), "user name");
    if (!names.users.insert(spec.name).second) fail(u, "duplicate user '" + spec.name + "'");
    const auto seed = str(required(u, "seed", "user"), "user seed");
    if (seed.empty()) fail(u["seed"], "user seed must be nonempty");
    spec.seed = wallet_seed(seed);
    if (u["consent"]) {
      require_map(u["consent"], "consent");
      for (const auto& kv : u["consent"]) {
        names.check(names.sps, kv.first, "service provider");
        require_map(kv.second, "consent entry");
        allow_keys(kv.second, {"attributes", "owners"}, "consent entry");
        actors::Consent consent;
        consent.attributes = strings(required(kv.second, "attributes", "consent entry"), "consent attributes");
        for (const auto& o : required(kv.second, "owners", "consent entry")) {
          names.check(names.owners, o, "owner");
          consent.owners.push_back(o.as<std::string>());
        }
        spec.consent[kv.first.as<std::string>()] = std::move(consent);
      }
    }
    names.addresses.insert(actors::user_address(spec.name));
    c.users.push_back(std::move(spec));
  }

  if (root["faults"]) c.faults = faults(root["faults"], names);

  const auto steps = required(root, "steps", "scenario");
  require_seq(steps, "steps");
  for (const auto& st : steps) s.steps.push_back(parse_step(st, names, s.steps));
  return s;
}

}  // namespace

Bytes wallet_seed(std::string_view text) {
  const auto h = sha256(as_bytes(text));
  return Bytes(h.begin(), h.end());
}

Scenario parse(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::ParserException& e) {
    throw ParseError(e.mark.line + 1, e.msg);
  }
  try {
    return parse_root(root);
  } catch (const YAML::Exception& e) {
    throw ParseError(e.mark.line < 0 ? 0 : e.mark.line + 1, e.msg);
  }
}

Scenario load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return parse(os.str());
}

void apply(Scenario& s, const Overrides& o) {
  if (o.seed) s.config.seed = *o.seed;
  if (o.mode) s.config.mode = *o.mode;
  if (o.paper_literal_login) s.config.paper_literal_login = true;
}

}  // namespace fedid::scenario
