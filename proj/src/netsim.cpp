#include "fedid/netsim.hpp"

#include <algorithm>
#include <sstream>

#include "fedid/crypto.hpp"

namespace fedid::net {

std::string_view to_string(Status s) {
  switch (s) {
    case Status::delivered:
      return "delivered";
    case Status::tampered:
      return "tampered";
    case Status::dropped:
      return "dropped";
    case Status::offline:
      return "offline";
  }
  return "unknown";
}

std::string TranscriptEntry::line() const {
  std::ostringstream os;
  os << "seq=" << seq << " step=" << step << " from=" << from << " to=" << to << " kind=" << kind
     << " phase=" << (phase.empty() ? "-" : phase) << " digest=" << to_hex(ByteView(digest).first(8))
     << " status=" << to_string(status);
  return os.str();
}

bool Match::matches(const Envelope& env) const {
  return (from.empty() || from == env.from) && (to.empty() || to == env.to) &&
         (kind.empty() || kind == env.kind);
}

Bus::Bus(std::uint64_t seed, FaultConfig faults, std::size_t max_steps)
    : seed_(seed), faults_(std::move(faults)), max_steps_(max_steps) {}

void Bus::register_actor(const std::string& id, Actor& actor) {
  if (id.empty()) throw RoutingError("actor id must be nonempty");
  if (!actors_.emplace(id, &actor).second) throw RoutingError("duplicate actor id: " + id);
}

std::uint64_t Bus::send(const std::string& from, const std::string& to, const std::string& kind,
                        const std::string& phase, Bytes payload) {
  if (!has_actor(from)) throw RoutingError("unknown sender: " + from);
  if (!has_actor(to)) throw RoutingError("unknown destination: " + to);
  for (const auto& f : forbidden_) {
    if (from.rfind(f.from_prefix, 0) == 0 && to.rfind(f.to_prefix, 0) == 0) {
      throw RoutingError("route " + from + " -> " + to + " must go through the communication server");
    }
  }
  const auto seq = next_seq_++;
  queue_.push_back({seq, from, to, kind, phase, std::move(payload)});
  return seq;
}

void Bus::set_offline(const std::string& id, bool offline) {
  if (offline) {
    faults_.offline.insert(id);
  } else {
    faults_.offline.erase(id);
  }
}

void Bus::advance(std::int64_t seconds) {
  if (seconds < 0) throw std::invalid_argument("clock cannot move backwards");
  now_ += seconds;
}

std::vector<Envelope> Bus::next_batch() {
  std::vector<Envelope> batch;
  batch.swap(queue_);

  // Seed-keyed slot order, then per-pair FIFO refill of the slots.
  std::vector<std::pair<Hash256, std::size_t>> slots;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Writer w;
    w.u64(seed_).u64(batch[i].seq);
    slots.push_back({sha256(w.data()), i});
  }
  std::sort(slots.begin(), slots.end());

  // Pair keys are captured up front: slot owners may already be moved out.
  using PairKey = std::pair<std::string, std::string>;
  std::vector<PairKey> pair_of;
  std::map<PairKey, std::vector<std::size_t>> by_pair;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    pair_of.emplace_back(batch[i].from, batch[i].to);
    by_pair[pair_of.back()].push_back(i);
  }
  std::map<PairKey, std::size_t> taken;

  std::vector<Envelope> ordered;
  ordered.reserve(batch.size());
  for (const auto& [key, original] : slots) {
    const auto& pair = pair_of[original];
    ordered.push_back(std::move(batch[by_pair[pair][taken[pair]++]]));
  }
  return ordered;
}

void Bus::deliver(Envelope env) {
  if (++steps_ > max_steps_) {
    throw LivelockError("exceeded " + std::to_string(max_steps_) + " delivery steps");
  }
  Status status = Status::delivered;
  if (is_offline(env.to)) {
    status = Status::offline;
  } else if (std::any_of(faults_.drop.begin(), faults_.drop.end(),
                         [&](const Match& m) { return m.matches(env); })) {
    status = Status::dropped;
  } else {
    for (const auto& rule : faults_.tamper) {
      if (!rule.match.matches(env) || env.payload.empty()) continue;
      const auto n = static_cast<std::int64_t>(env.payload.size());
      const auto at = rule.byte_index < 0 ? n + rule.byte_index : rule.byte_index;
      if (at < 0 || at >= n) continue;
      env.payload[static_cast<std::size_t>(at)] ^= rule.mask;
      status = Status::tampered;
    }
  }
  transcript_.push_back(
      {env.seq, steps_, env.from, env.to, env.kind, env.phase, sha256(env.payload), status});

  if (status == Status::offline || status == Status::dropped) {
    // Drops are silent; offline destinations bounce back to a reachable sender.
    if (status == Status::offline && !is_offline(env.from)) {
      actors_.at(env.from)->on_delivery_failure(*this, env);
    }
    return;
  }
  if (observer_) observer_(env);
  actors_.at(env.to)->on_message(*this, env);
}

void Bus::run_until_idle() {
  while (!queue_.empty()) {
    for (auto& env : next_batch()) deliver(std::move(env));
  }
}

std::string Bus::transcript_text() const {
  std::string out;
  for (const auto& e : transcript_) out += e.line() + "\n";
  return out;
}

}  // namespace fedid::net
