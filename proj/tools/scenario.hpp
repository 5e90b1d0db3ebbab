#pragma once

// Declarative scenarios for the fedid runner.
//
// A scenario is a YAML document pinned by `schema: fedid-scenario/1`. It
// declares the deployment (owners, IDPs, SPs, users with wallet seeds and
// consent, trust parameters, faults) and an ordered list of steps. Each step
// is a single-key map naming its kind, plus an optional `expect` map checked
// against the step's result. See README.md for the full schema.

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedid/actors.hpp"

namespace fedid::scenario {

using json = nlohmann::ordered_json;

inline constexpr std::string_view kSchema = "fedid-scenario/1";

/// Carries the 1-based source line of the offending node (0 when unknown).
class ParseError : public std::runtime_error {
 public:
  ParseError(int line, const std::string& message)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + message : message), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

struct Step {
  std::string kind;
  int line = 0;
  json args;
  json expect;  // empty object when the step asserts nothing
};

struct Scenario {
  actors::DeploymentConfig config;
  std::vector<Step> steps;
};

/// Wallet seed bytes for a seed string: SHA-256 of its UTF-8 bytes.
Bytes wallet_seed(std::string_view text);

/// Parses and validates; ids must be declared before any step uses them.
Scenario parse(const std::string& yaml_text);
Scenario load(const std::filesystem::path& path);

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<hd::Mode> mode;
  bool paper_literal_login = false;
};
void apply(Scenario& s, const Overrides& o);

struct StepResult {
  std::size_t index = 0;  // 1-based
  std::string kind;
  int line = 0;
  json result;
  std::vector<std::string> failures;
};

struct RunResult {
  std::vector<StepResult> steps;
  bool passed() const;
  /// "step N (kind, line L): ..." for every failed expectation.
  std::vector<std::string> failure_messages() const;
};

/// Executes every step in order against `d`, checking expectations.
RunResult run(const Scenario& s, actors::Deployment& d);

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Scenario-wide audit of a ledger file: chain check, per-user traces,
/// per-owner counts and privacy scans.
class AuditError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AuditInputs {
  const Scenario* scenario = nullptr;
  std::string ledger_text;
  std::map<std::string, Bytes> idp_states;  // idp id -> persisted state
};

/// Throws AuditError when the ledger belongs to a different deployment.
json audit(const AuditInputs& in);
/// True iff the chain verified and both privacy scans came back clean.
bool audit_clean(const json& report);

// Run directory layout.
inline constexpr const char* kTranscriptFile = "transcript.txt";
inline constexpr const char* kLedgerFile = "ledger.txt";
inline constexpr const char* kStepsFile = "steps.json";
inline constexpr const char* kReportFile = "report.json";
inline constexpr const char* kRunFile = "run.json";
inline constexpr const char* kScenarioCopy = "scenario.yaml";
inline constexpr const char* kWalletsFile = "wallets.json";
inline constexpr const char* kStateDir = "state";

/// Writes every run artifact into `dir` (created if missing).
void write_run(const std::filesystem::path& dir, const std::string& scenario_text, const Overrides& overrides,
               const Scenario& s, const actors::Deployment& d, const RunResult& r);

/// Re-audits a run directory from its files alone.
json audit_run_dir(const std::filesystem::path& dir);

}  // namespace fedid::scenario
