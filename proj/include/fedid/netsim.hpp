#pragma once

// Deterministic in-memory message bus.
//
// Delivery proceeds in rounds. Everything queued when a round starts forms
// its batch; the batch is shuffled by a seed-keyed permutation that keeps
// per-(from, to) FIFO order, and messages sent while the batch is processed
// wait for the next round. Faults (offline actors, drops, byte flips) are
// applied at dequeue. The transcript is a pure function of the seed and the
// sequence of sends.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fedid/bytes.hpp"

namespace fedid::net {

inline constexpr std::size_t kDefaultMaxSteps = 100000;

enum class Status { delivered, tampered, dropped, offline };
std::string_view to_string(Status s);

struct Envelope {
  std::uint64_t seq = 0;
  std::string from;
  std::string to;
  std::string kind;
  std::string phase;
  Bytes payload;
};

struct TranscriptEntry {
  std::uint64_t seq;
  std::uint64_t step;
  std::string from;
  std::string to;
  std::string kind;
  std::string phase;
  Hash256 digest;  // SHA-256 of the payload as delivered
  Status status;

  /// seq=.. step=.. from=.. to=.. kind=.. phase=.. digest=<16 hex> status=..
  std::string line() const;
};

class RoutingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class LivelockError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Bus;

class Actor {
 public:
  virtual ~Actor() = default;
  virtual void on_message(Bus& bus, const Envelope& env) = 0;
  /// Called on the sender when `env` could not be delivered.
  virtual void on_delivery_failure(Bus&, const Envelope&) {}
};

/// Empty fields match anything.
struct Match {
  std::string from;
  std::string to;
  std::string kind;

  bool matches(const Envelope& env) const;
};

struct TamperRule {
  Match match;
  std::int64_t byte_index = 0;  // negative counts from the end
  std::uint8_t mask = 0x01;
};

struct FaultConfig {
  std::set<std::string> offline;
  std::vector<TamperRule> tamper;
  std::vector<Match> drop;
};

/// Sends whose sender and receiver ids start with these prefixes are refused.
struct ForbiddenRoute {
  std::string from_prefix;
  std::string to_prefix;
};

class Bus {
 public:
  explicit Bus(std::uint64_t seed, FaultConfig faults = {}, std::size_t max_steps = kDefaultMaxSteps);

  /// Non-owning; the actor must outlive the bus. Throws RoutingError on a duplicate id.
  void register_actor(const std::string& id, Actor& actor);
  bool has_actor(std::string_view id) const { return actors_.find(std::string(id)) != actors_.end(); }

  void forbid(ForbiddenRoute route) { forbidden_.push_back(std::move(route)); }

  /// Queues an envelope; throws RoutingError for unknown ids or a forbidden route.
  std::uint64_t send(const std::string& from, const std::string& to, const std::string& kind,
                     const std::string& phase, Bytes payload);

  /// Delivers until no envelope is pending. Throws LivelockError past max_steps.
  void run_until_idle();
  bool idle() const { return queue_.empty(); }

  FaultConfig& faults() { return faults_; }
  void set_offline(const std::string& id, bool offline);
  bool is_offline(const std::string& id) const { return faults_.offline.count(id) != 0; }

  /// Simulated clock in unix seconds.
  std::int64_t now() const { return now_; }
  void set_time(std::int64_t t) { now_ = t; }
  void advance(std::int64_t seconds);

  /// Called with every envelope as it reaches its destination, after faults.
  void set_observer(std::function<void(const Envelope&)> observer) { observer_ = std::move(observer); }

  const std::vector<TranscriptEntry>& transcript() const { return transcript_; }
  std::string transcript_text() const;
  std::uint64_t steps() const { return steps_; }

 private:
  std::vector<Envelope> next_batch();
  void deliver(Envelope env);

  std::uint64_t seed_;
  FaultConfig faults_;
  std::size_t max_steps_;
  std::map<std::string, Actor*> actors_;
  std::vector<ForbiddenRoute> forbidden_;
  std::vector<Envelope> queue_;
  std::vector<TranscriptEntry> transcript_;
  std::function<void(const Envelope&)> observer_;
  std::uint64_t next_seq_ = 1;
  std::uint64_t steps_ = 0;
  std::int64_t now_ = 0;
};

}  // namespace fedid::net
