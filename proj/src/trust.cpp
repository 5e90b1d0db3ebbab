#include "fedid/trust.hpp"

#include <algorithm>
#include <cmath>

namespace fedid::trust {

using Code = TrustError::Code;

namespace {

constexpr std::pair<SourceClass, std::string_view> kClassNames[] = {
    {SourceClass::government, "government"},
    {SourceClass::credit_bureau, "credit_bureau"},
    {SourceClass::delivery, "delivery"},
    {SourceClass::social, "social"},
    {SourceClass::other, "other"},
};

void check_score(double s) {
  if (!(s >= 0.0 && s <= 1.0)) throw TrustError(Code::bad_score, "score outside [0, 1]");
}

// Advances `idx` to the next k-combination of [0, n) in lexicographic order.
bool next_combination(std::vector<std::size_t>& idx, std::size_t n) {
  const std::size_t k = idx.size();
  for (std::size_t i = k; i-- > 0;) {
    if (idx[i] < n - k + i) {
      ++idx[i];
      for (std::size_t j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
      return true;
    }
  }
  return false;
}

bool is_subset(const std::vector<std::size_t>& small, const std::vector<std::size_t>& big) {
  return std::includes(big.begin(), big.end(), small.begin(), small.end());
}

}  // namespace

std::string_view to_string(SourceClass c) {
  for (auto [cls, name] : kClassNames) {
    if (cls == c) return name;
  }
  return "other";
}

SourceClass class_from_string(std::string_view s) {
  for (auto [cls, name] : kClassNames) {
    if (name == s) return cls;
  }
  throw TrustError(Code::unknown_class, "unknown source class: " + std::string(s));
}

SourceWeightTable SourceWeightTable::defaults() {
  SourceWeightTable t;
  t.set(SourceClass::government, 0.95);
  t.set(SourceClass::credit_bureau, 0.85);
  t.set(SourceClass::delivery, 0.70);
  t.set(SourceClass::social, 0.50);
  t.set(SourceClass::other, 0.30);
  return t;
}

double SourceWeightTable::weight(SourceClass c) const {
  auto it = weights_.find(c);
  if (it == weights_.end()) throw TrustError(Code::bad_weight, "no weight for class");
  return it->second;
}

void SourceWeightTable::set(SourceClass c, double w) {
  if (!(w > 0.0 && w <= 1.0)) throw TrustError(Code::bad_weight, "weight must be in (0, 1]");
  weights_[c] = w;
}

double single_source_score(double weight, Timestamp last_recert, Timestamp now,
                           std::int64_t half_life_seconds, bool available,
                           double unavailability_penalty) {
  if (!(weight > 0.0 && weight <= 1.0)) throw TrustError(Code::bad_weight, "weight must be in (0, 1]");
  if (half_life_seconds <= 0) throw TrustError(Code::bad_half_life, "half-life must be positive");
  if (now < last_recert) throw TrustError(Code::negative_age, "re-certification is in the future");
  check_score(unavailability_penalty);
  const double age = static_cast<double>(now - last_recert) / static_cast<double>(half_life_seconds);
  return weight * std::exp2(-age) * (available ? 1.0 : unavailability_penalty);
}

double aggregate(std::span<const double> scores) {
  if (scores.empty()) throw TrustError(Code::empty_sources, "aggregate needs at least one score");
  double miss = 1.0;
  for (double s : scores) {
    check_score(s);
    miss *= 1.0 - s;
  }
  return 1.0 - miss;
}

void ServicePolicy::validate() const {
  for (const auto& [name, claim] : claims) {
    if (!(claim.threshold >= 0.0 && claim.threshold <= 1.0)) {
      throw TrustError(Code::bad_threshold, "threshold for " + name + " outside [0, 1]");
    }
  }
}

AssertionDecision assert_attribute(std::string_view name, std::string_view value,
                                   const std::vector<SourceEvidence>& sources,
                                   const SourceWeightTable& table, const TrustParams& params,
                                   Timestamp now, const ServicePolicy& policy, double factor) {
  auto claim = policy.claims.find(name);
  if (claim == policy.claims.end()) {
    throw TrustError(Code::missing_policy, "no policy entry for attribute " + std::string(name));
  }
  if (sources.empty()) throw TrustError(Code::empty_sources, "assertion needs at least one source");
  check_score(factor);

  std::vector<double> scores;
  scores.reserve(sources.size());
  for (const auto& s : sources) {
    scores.push_back(single_source_score(table.weight(s.source_class), s.last_recert, now,
                                         params.half_life_seconds, s.available,
                                         params.unavailability_penalty));
  }
  const double score = aggregate(scores) * factor;
  AttributeAssertion a{std::string(name), std::string(value), score, sources, now};
  return {std::move(a), score >= claim->second.threshold};
}

bool service_decision(const ServicePolicy& policy, const std::vector<AttributeAssertion>& assertions) {
  for (const auto& [name, claim] : policy.claims) {
    if (!claim.mandatory) continue;
    auto it = std::find_if(assertions.begin(), assertions.end(),
                           [&](const AttributeAssertion& a) { return a.name == name; });
    if (it == assertions.end() || it->score < claim.threshold) return false;
  }
  return true;
}

std::vector<Recommendation> recommend_sources(double threshold, const std::vector<CatalogEntry>& catalog,
                                              const SourceWeightTable& table, const TrustParams& params,
                                              Timestamp now) {
  std::vector<double> single;
  single.reserve(catalog.size());
  for (const auto& e : catalog) {
    single.push_back(single_source_score(table.weight(e.source_class), e.last_recert, now,
                                         params.half_life_seconds, true));
  }

  std::vector<Recommendation> found;
  const std::size_t n = catalog.size();
  for (std::size_t k = 1; k <= n; ++k) {
    const std::size_t level_start = found.size();
    std::vector<std::size_t> idx(k);
    for (std::size_t i = 0; i < k; ++i) idx[i] = i;
    do {
      bool dominated = false;
      for (std::size_t f = 0; f < level_start && !dominated; ++f) {
        dominated = is_subset(found[f].members, idx);
      }
      if (dominated) continue;
      std::vector<double> scores;
      for (auto i : idx) scores.push_back(single[i]);
      const double s = aggregate(scores);
      if (s >= threshold) found.push_back({idx, s});
    } while (next_combination(idx, n));

    std::stable_sort(found.begin() + static_cast<std::ptrdiff_t>(level_start), found.end(),
                     [](const Recommendation& a, const Recommendation& b) { return a.score > b.score; });
  }
  return found;
}

}  // namespace fedid::trust
