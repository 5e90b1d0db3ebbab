#include <cmath>
#include <fstream>
#include <sstream>

#include "scenario.hpp"

namespace fedid::scenario {

namespace {

using actors::Deployment;

constexpr double kScoreTolerance = 1e-9;
constexpr double kRatioTolerance = 1e-12;

std::map<std::string, std::string> string_map(const json& j) {
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : j.items()) out[k] = v.get<std::string>();
  return out;
}

std::vector<std::string> string_list(const json& j) {
  std::vector<std::string> out;
  for (const auto& v : j) out.push_back(v.get<std::string>());
  return out;
}

void put_delta(json& r, const actors::StepReport& step) {
  r["data_access"] = step.ledger.data_access;
  r["data_access_verified"] = step.ledger.data_access_verified;
  r["recertification"] = step.ledger.recertification;
  r["owner_contacts"] = step.owner_contacts;
  r["messages"] = step.messages;
}

json record_json(const ledger::TransactionRecord& tx) {
  json j = {{"timestamp", tx.timestamp},
            {"owner", tx.data_owner_id},
            {"kind", ledger::to_string(tx.kind())},
            {"txn_pubkey", to_hex(tx.txn_pubkey.compressed())}};
  if (const auto* da = std::get_if<ledger::DataAccessDetails>(&tx.payload)) {
    j["idp"] = da->idp_id;
    j["sp"] = da->sp_id;
    j["attributes"] = da->requested_attributes;
    j["outcome"] = ledger::to_string(da->outcome);
  } else {
    j["attribute"] = std::get<ledger::RecertificationDetails>(tx.payload).attribute;
  }
  return j;
}

json execute(const Step& step, Deployment& d) {
  const auto& a = step.args;
  json r = json::object();
  const auto& k = step.kind;
  if (k == "register") {
    const auto out = d.register_user(a["user"], a["owner"], string_map(a["attributes"]));
    r["success"] = out.success;
    if (!out.success) r["error"] = out.error;
    put_delta(r, d.last_step());
  } else if (k == "signup") {
    const auto out = d.signup(a["user"], a["idp"], a["username"], a["password"]);
    r["success"] = out.success;
    if (!out.success) r["error"] = out.error;
  } else if (k == "login") {
    actors::LoginOptions options;
    if (a.contains("password")) options.password = a["password"].get<std::string>();
    if (a.contains("totp")) options.totp_code = a["totp"].get<std::string>();
    if (a.contains("index")) options.index = a["index"].get<std::uint32_t>();
    const auto out = d.login(a["user"], a["idp"], options);
    r["success"] = out.success;
    r["index"] = out.index;
    if (!out.success) {
      r["failed_stage"] = out.failed_stage;
      r["reason"] = out.reason;
    }
  } else if (k == "sp_login") {
    actors::SpLoginOptions options;
    options.idp = a["idp"];
    if (a.contains("owners")) options.owners = string_list(a["owners"]);
    options.stored = a["stored"];
    options.claim_overrides = string_map(a["claim_overrides"]);
    const auto out = d.sp_login(a["user"], a["sp"], options);
    r["status"] = actors::to_string(out.status);
    if (out.status == actors::FlowStatus::aborted) {
      r["aborted_stage"] = out.aborted_stage;
      r["reason"] = out.reason;
    }
    r["owners"] = out.owners;
    json scores = json::object();
    json assertions = json::array();
    for (const auto& as : d.last_assertions(a["user"], a["sp"])) {
      scores[as.name] = as.score;
      json sources = json::array();
      for (const auto& src : as.sources) {
        sources.push_back({{"owner", src.owner_id},
                           {"class", trust::to_string(src.source_class)},
                           {"last_recert", src.last_recert},
                           {"available", src.available}});
      }
      assertions.push_back({{"name", as.name}, {"score", as.score}, {"issued_at", as.issued_at}, {"sources", sources}});
    }
    r["scores"] = scores;
    r["assertions"] = assertions;
    put_delta(r, d.last_step());
  } else if (k == "store_identity") {
    const auto out = d.store_identity(a["user"], a["idp"], a["owner"], string_list(a["attributes"]));
    r["success"] = out.success;
    if (!out.success) r["error"] = out.error;
    put_delta(r, d.last_step());
  } else if (k == "advance_clock") {
    d.advance_clock(a["seconds"].get<std::int64_t>());
  } else if (k == "recertify") {
    std::map<std::string, std::optional<std::string>> attrs;
    for (const auto& [name, v] : a["attributes"].items()) {
      attrs[name] = v.is_null() ? std::nullopt : std::optional<std::string>(v.get<std::string>());
    }
    d.recertify(a["owner"], a["user"], attrs);
    put_delta(r, d.last_step());
  } else if (k == "set_offline") {
    d.set_offline(a["actor"], a["offline"]);
    r["actor"] = a["actor"];
    r["offline"] = a["offline"];
  } else if (k == "trace") {
    const auto records = d.trace(a["user"], a["gap"].get<std::uint32_t>());
    std::size_t data_access = 0;
    json list = json::array();
    for (const auto& tx : records) {
      data_access += tx.kind() == ledger::TxKind::data_access;
      list.push_back(record_json(tx));
    }
    r["records"] = records.size();
    r["data_access"] = data_access;
    r["recertification"] = records.size() - data_access;
    r["transactions"] = list;
  } else if (k == "verify_chain") {
    const auto defect = d.ledger().find_defect();
    r["ok"] = !defect.has_value();
    if (defect) r["defect"] = *defect;
    r["height"] = d.ledger().tip_height();
  }
  r["time"] = d.bus().now();
  return r;
}

std::string show(const json& j) { return j.is_string() ? j.get<std::string>() : j.dump(); }

std::vector<std::string> check(const Step& step, const json& r, const std::vector<StepResult>& earlier) {
  std::vector<std::string> failures;
  if (r.contains("error") && !step.expect.contains("error") && step.expect.value("success", true)) {
    failures.push_back("unexpected error: " + show(r["error"]));
  }
  const auto scores = r.value("scores", json::object());
  for (const auto& [key, want] : step.expect.items()) {
    if (key == "error") {
      if (!r.contains("error") || show(r["error"]).find(want.get<std::string>()) == std::string::npos) {
        failures.push_back("expected an error containing '" + want.get<std::string>() + "', got " +
                           (r.contains("error") ? "'" + show(r["error"]) + "'" : "none"));
      }
    } else if (key == "scores") {
      for (const auto& [name, score] : want.items()) {
        if (!scores.contains(name)) {
          failures.push_back("expected an assertion for " + name + ", got none");
        } else if (std::abs(scores[name].get<double>() - score.get<double>()) > kScoreTolerance) {
          failures.push_back("expected score " + name + " = " + score.dump() + ", got " + scores[name].dump());
        }
      }
    } else if (key == "score_ratio") {
      const auto base = earlier.at(want["step"].get<std::size_t>() - 1).result.value("scores", json::object());
      const double factor = want["factor"];
      if (scores.empty()) failures.push_back("expected scores to compare, got no assertions");
      for (const auto& [name, score] : scores.items()) {
        if (!base.contains(name)) {
          failures.push_back("step " + want["step"].dump() + " has no score for " + name);
        } else if (std::abs(score.get<double>() - base[name].get<double>() * factor) > kRatioTolerance) {
          failures.push_back("expected score " + name + " = " + json(factor).dump() + " x " + base[name].dump() +
                             ", got " + score.dump());
        }
      }
    } else if (!r.contains(key)) {
      failures.push_back("expected " + key + " " + show(want) + ", got nothing");
    } else if (r[key] != want) {
      failures.push_back("expected " + key + " " + show(want) + ", got " + show(r[key]));
    }
  }
  return failures;
}

}  // namespace

bool RunResult::passed() const {
  return std::all_of(steps.begin(), steps.end(), [](const StepResult& s) { return s.failures.empty(); });
}

std::vector<std::string> RunResult::failure_messages() const {
  std::vector<std::string> out;
  for (const auto& s : steps) {
    for (const auto& f : s.failures) {
      out.push_back("step " + std::to_string(s.index) + " (" + s.kind + ", line " + std::to_string(s.line) + "): " + f);
    }
  }
  return out;
}

RunResult run(const Scenario& s, Deployment& d) {
  RunResult out;
  for (std::size_t i = 0; i < s.steps.size(); ++i) {
    const auto& step = s.steps[i];
    StepResult sr{i + 1, step.kind, step.line, json::object(), {}};
    try {
      sr.result = execute(step, d);
    } catch (const std::exception& e) {
      sr.result = {{"error", e.what()}, {"time", d.bus().now()}};
    }
    sr.failures = check(step, sr.result, out.steps);
    out.steps.push_back(std::move(sr));
  }
  return out;
}

namespace {

void write_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("cannot write " + path.string());
}

void write_bytes(const std::filesystem::path& path, ByteView content) {
  write_file(path, std::string_view(reinterpret_cast<const char*>(content.data()), content.size()));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

void write_run(const std::filesystem::path& dir, const std::string& scenario_text, const Overrides& overrides,
               const Scenario& s, const Deployment& d, const RunResult& r) {
  std::error_code ec;
  std::filesystem::create_directories(dir / kStateDir, ec);
  if (ec) throw IoError("cannot create " + (dir / kStateDir).string() + ": " + ec.message());

  write_file(dir / kScenarioCopy, scenario_text);
  write_file(dir / kTranscriptFile, d.bus().transcript_text());
  const auto ledger_text = d.ledger().persist();
  write_file(dir / kLedgerFile, ledger_text);

  json run = {{"schema", kSchema},
              {"seed", s.config.seed},
              {"mode", hd::to_string(s.config.mode)},
              {"paper_literal_login", s.config.paper_literal_login},
              {"seed_overridden", overrides.seed.has_value()},
              {"steps", r.steps.size()},
              {"passed", r.passed()}};
  write_file(dir / kRunFile, run.dump(2) + "\n");

  json steps = json::array();
  for (const auto& st : r.steps) {
    steps.push_back({{"index", st.index}, {"kind", st.kind}, {"line", st.line}, {"result", st.result},
                     {"failures", st.failures}});
  }
  write_file(dir / kStepsFile, steps.dump(2) + "\n");

  // Public keys only: the pseudo-identifiers and IDP keys each user registered.
  json wallets = json::object();
  for (const auto& name : d.user_names()) {
    const auto& u = d.user(name);
    json owners = json::object();
    for (const auto& o : u.registered_owners()) owners[o] = u.owner_key(o).to_base58();
    json idps = json::object();
    for (const auto& i : d.idp_ids()) {
      if (const auto* p = d.idp(i).profile(name)) idps[i] = p->registered_idp_xpub.to_base58();
    }
    wallets[name] = {{"owners", owners}, {"idps", idps}};
  }
  write_file(dir / kWalletsFile, wallets.dump(2) + "\n");

  AuditInputs in{&s, ledger_text, {}};
  for (const auto& i : d.idp_ids()) {
    const auto state = d.idp(i).persisted_state();
    write_bytes(dir / kStateDir / ("idp-" + i + ".bin"), state);
    in.idp_states[i] = state;
  }
  for (const auto& o : d.owner_ids()) write_bytes(dir / kStateDir / ("owner-" + o + ".bin"), d.owner(o).persisted_state());
  for (const auto& sp : s.config.sps) {
    write_bytes(dir / kStateDir / ("sp-" + sp.id + ".bin"), d.sp(sp.id).persisted_state());
  }
  write_file(dir / kReportFile, audit(in).dump(2) + "\n");
}

json audit_run_dir(const std::filesystem::path& dir) {
  json run;
  try {
    run = json::parse(read_file(dir / kRunFile));
  } catch (const json::exception& e) {
    throw ParseError(0, std::string(kRunFile) + ": " + e.what());
  }
  auto s = parse(read_file(dir / kScenarioCopy));
  Overrides o;
  try {
    o.seed = run.at("seed").get<std::uint64_t>();
    o.mode = hd::mode_from_string(run.at("mode").get<std::string>());
    o.paper_literal_login = run.at("paper_literal_login").get<bool>();
  } catch (const std::exception& e) {
    throw ParseError(0, std::string(kRunFile) + ": " + e.what());
  }
  apply(s, o);
  AuditInputs in{&s, read_file(dir / kLedgerFile), {}};
  for (const auto& i : s.config.idps) {
    const auto text = read_file(dir / kStateDir / ("idp-" + i + ".bin"));
    in.idp_states[i] = Bytes(text.begin(), text.end());
  }
  return audit(in);
}

}  // namespace fedid::scenario
