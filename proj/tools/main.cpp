#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "scenario.hpp"

namespace {

namespace fs = std::filesystem;
using namespace fedid;
using scenario::json;

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kInputError = 2;

constexpr const char* kOutDirEnv = "FEDID_OUT_DIR";
constexpr const char* kDefaultOutDir = "fedid-out";

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw scenario::IoError("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void print_audit(const json& report) {
  const auto& chain = report["chain"];
  std::cout << "chain: " << (chain["ok"].get<bool>() ? "OK" : "FAILED");
  if (chain.contains("height")) std::cout << " height=" << chain["height"];
  if (chain.contains("defect")) std::cout << " defect=" << chain["defect"].get<std::string>();
  std::cout << "\n";
  if (report.contains("users")) {
    for (const auto& [name, u] : report["users"].items()) {
      std::cout << "user " << name << ": records=" << u["records"] << " data_access=" << u["data_access"]
                << " recertification=" << u["recertification"] << "\n";
    }
  }
  if (report.contains("owners")) {
    for (const auto& [id, o] : report["owners"].items()) {
      std::cout << "owner " << id << ": data_access=" << o["data_access"]
                << " recertification=" << o["recertification"] << "\n";
    }
  }
  const auto& p = report["privacy"];
  std::cout << "privacy: " << (p["clean"].get<bool>() ? "clean" : "LEAK") << " (values=" << p["values_scanned"]
            << " scalars=" << p["scalars_scanned"] << ")\n";
}

int cmd_run(const std::string& path, std::string out, std::optional<std::uint64_t> seed, const std::string& mode,
            bool literal) {
  if (out.empty()) {
    const char* env = std::getenv(kOutDirEnv);
    out = env != nullptr && *env != '\0' ? env : kDefaultOutDir;
  }
  const auto text = read_file(path);
  auto s = scenario::parse(text);
  scenario::Overrides o;
  o.seed = seed;
  if (!mode.empty()) o.mode = hd::mode_from_string(mode);
  o.paper_literal_login = literal;
  scenario::apply(s, o);

  actors::Deployment d(s.config);
  const auto result = scenario::run(s, d);
  scenario::write_run(out, text, o, s, d, result);

  for (const auto& st : result.steps) {
    std::cout << (st.failures.empty() ? "[ok]   " : "[FAIL] ") << "step " << st.index << " " << st.kind << "\n";
  }
  print_audit(scenario::audit_run_dir(out));
  std::cout << "output: " << out << "\n";
  for (const auto& f : result.failure_messages()) std::cerr << "expectation failed: " << f << "\n";
  return result.passed() ? kOk : kFailed;
}

int cmd_verify(const std::string& path) {
  const auto l = ledger::Ledger::load(read_file(path));
  if (const auto defect = l.find_defect()) {
    std::cout << "FAILED: " << *defect << "\n";
    return kFailed;
  }
  std::cout << "OK height=" << l.tip_height() << " blocks=" << l.blocks().size() << "\n";
  return kOk;
}

int cmd_trace(const std::string& path, const std::string& key, std::uint32_t gap) {
  const auto l = ledger::Ledger::load(read_file(path));
  const auto parent = hd::ExtendedPublicKey::from_base58(key);
  for (const auto& r : l.locate_by_parent_key(parent, gap)) {
    const auto& tx = r.record;
    std::cout << "height=" << r.height << " position=" << r.index << " time=" << tx.timestamp
              << " owner=" << tx.data_owner_id << " kind=" << ledger::to_string(tx.kind());
    if (const auto* da = std::get_if<ledger::DataAccessDetails>(&tx.payload)) {
      std::cout << " idp=" << da->idp_id << " sp=" << da->sp_id << " outcome=" << ledger::to_string(da->outcome);
    } else {
      std::cout << " attribute=" << std::get<ledger::RecertificationDetails>(tx.payload).attribute;
    }
    std::cout << "\n";
  }
  return kOk;
}

int cmd_report(const std::string& dir) {
  const auto report = scenario::audit_run_dir(dir);
  std::ofstream(fs::path(dir) / scenario::kReportFile, std::ios::trunc) << report.dump(2) << "\n";
  print_audit(report);
  return scenario::audit_clean(report) ? kOk : kFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated identity scenario runner and ledger tools"};
  app.require_subcommand(1);

  std::string scenario_path, out_dir, mode, ledger_path, key, run_dir;
  std::optional<std::uint64_t> seed;
  bool literal = false;
  std::uint32_t gap = ledger::kDefaultGapLimit;

  auto* run = app.add_subcommand("run", "Execute a scenario and write its artifacts");
  run->add_option("scenario", scenario_path, "Scenario file")->required();
  run->add_option("--out", out_dir, std::string("Output directory (default $") + kOutDirEnv + " or " +
                                        kDefaultOutDir + ")");
  run->add_option("--seed", seed, "Override the scenario seed");
  run->add_option("--mode", mode, "Key derivation mode")->check(CLI::IsMember({"additive", "multiplicative"}));
  run->add_flag("--paper-literal-login", literal, "Compare login public keys instead of signing a challenge");

  auto* verify = app.add_subcommand("verify", "Check a ledger file's integrity");
  verify->add_option("ledger", ledger_path, "Ledger file")->required();

  auto* trace = app.add_subcommand("trace", "List ledger records derived from an extended public key");
  trace->add_option("ledger", ledger_path, "Ledger file")->required();
  trace->add_option("--key", key, "Parent extended public key (base58)")->required();
  trace->add_option("--gap", gap, "Gap limit")->check(CLI::PositiveNumber);

  auto* report = app.add_subcommand("report", "Audit a run directory");
  report->add_option("run_dir", run_dir, "Directory written by `run`")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInputError;
  }

  try {
    if (*run) return cmd_run(scenario_path, out_dir, seed, mode, literal);
    if (*verify) return cmd_verify(ledger_path);
    if (*trace) return cmd_trace(ledger_path, key, gap);
    if (*report) return cmd_report(run_dir);
  } catch (const scenario::ParseError& e) {
    std::cerr << "error: " << (*run ? scenario_path : run_dir) << ": " << e.what() << "\n";
    return kInputError;
  } catch (const scenario::AuditError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const scenario::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const ledger::ParseError& e) {
    std::cerr << "error: " << ledger_path << ": " << e.what() << "\n";
    return kInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  }
  return kInputError;
}
