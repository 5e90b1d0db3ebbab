#pragma once

// Time-decaying trust scores: per-source exponential half-life decay,
// noisy-or aggregation across sources, service-provider thresholds and
// minimal source-set recommendation.

#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fedid::trust {

using Timestamp = std::int64_t;  // unix seconds, simulated clock

enum class SourceClass { government, credit_bureau, delivery, social, other };

std::string_view to_string(SourceClass c);
/// Throws TrustError(unknown_class).
SourceClass class_from_string(std::string_view s);

class TrustError : public std::runtime_error {
 public:
  enum class Code { bad_weight, negative_age, bad_half_life, empty_sources, bad_score,
                    missing_policy, bad_threshold, unknown_class };
  TrustError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

class SourceWeightTable {
 public:
  /// government 0.95, credit_bureau 0.85, delivery 0.70, social 0.50, other 0.30.
  static SourceWeightTable defaults();

  double weight(SourceClass c) const;
  /// w must lie in (0, 1].
  void set(SourceClass c, double w);

 private:
  std::map<SourceClass, double> weights_;
};

struct TrustParams {
  std::int64_t half_life_seconds = 180 * 86400;
  double unavailability_penalty = 0.5;
  double staleness_factor = 0.9;  // applied to scores from IDP-stored documents
};

/// w * 2^(-(now - last_recert) / half_life) * (available ? 1 : penalty).
double single_source_score(double weight, Timestamp last_recert, Timestamp now,
                           std::int64_t half_life_seconds, bool available,
                           double unavailability_penalty = 0.5);

/// Noisy-or 1 - prod(1 - s_i), folded in the given order.
double aggregate(std::span<const double> scores);

struct SourceEvidence {
  std::string owner_id;
  SourceClass source_class = SourceClass::other;
  Timestamp last_recert = 0;
  bool available = true;

  friend bool operator==(const SourceEvidence&, const SourceEvidence&) = default;
};

struct AttributeAssertion {
  std::string name;
  std::string value;
  double score = 0.0;
  std::vector<SourceEvidence> sources;
  Timestamp issued_at = 0;

  friend bool operator==(const AttributeAssertion&, const AttributeAssertion&) = default;
};

struct ClaimPolicy {
  double threshold = 0.0;
  bool mandatory = true;
};

struct ServicePolicy {
  std::map<std::string, ClaimPolicy, std::less<>> claims;

  /// Throws TrustError(bad_threshold) unless every threshold is in [0, 1].
  void validate() const;
};

struct AssertionDecision {
  AttributeAssertion assertion;
  bool granted = false;
};

/// Scores the attribute over its sources and compares with the policy
/// threshold. `factor` scales the aggregate (staleness on the stored path).
/// Throws TrustError(missing_policy) if the policy has no entry for `name`.
AssertionDecision assert_attribute(std::string_view name, std::string_view value,
                                   const std::vector<SourceEvidence>& sources,
                                   const SourceWeightTable& table, const TrustParams& params,
                                   Timestamp now, const ServicePolicy& policy, double factor = 1.0);

/// True iff every mandatory claim has an assertion meeting its threshold.
bool service_decision(const ServicePolicy& policy, const std::vector<AttributeAssertion>& assertions);

struct CatalogEntry {
  std::string owner_id;
  SourceClass source_class = SourceClass::other;
  Timestamp last_recert = 0;
};

struct Recommendation {
  std::vector<std::size_t> members;  // ascending catalog indices
  double score = 0.0;

  friend bool operator==(const Recommendation&, const Recommendation&) = default;
};

/// All nonempty subsets meeting `threshold` that contain no smaller subset
/// meeting it, ordered by size, then descending score, then member indices.
/// Exponential in catalog size.
std::vector<Recommendation> recommend_sources(double threshold, const std::vector<CatalogEntry>& catalog,
                                              const SourceWeightTable& table, const TrustParams& params,
                                              Timestamp now);

}  // namespace fedid::trust
