#pragma once

// Reject-option threshold fitting. An example is accepted iff its confidence
// is >= the threshold. Coverage is the accepted fraction; risk is the error
// rate among accepted examples (0 when nothing is accepted).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "confident/believability.hpp"
#include "confident/core.hpp"
#include "confident/error.hpp"

namespace confident {

struct ScoredOutcome {
  double confidence = 0.0;
  bool correct = false;
};

enum class ConstraintKind { CoverageAtLeast, RiskAtMost };

inline const char* to_string(ConstraintKind k) {
  return k == ConstraintKind::CoverageAtLeast ? "coverage_at_least" : "risk_at_most";
}

struct RejectionConstraint {
  ConstraintKind kind = ConstraintKind::CoverageAtLeast;
  double value = 1.0;
  bool operator==(const RejectionConstraint&) const = default;
};

struct RejectionPolicy {
  double threshold = 0.0;
  double achieved_coverage = 0.0;
  double achieved_risk = 0.0;
  RejectionConstraint constraint;
  bool feasible = true;

  bool accepts(double confidence) const { return confidence >= threshold; }
  bool operator==(const RejectionPolicy&) const = default;
};

struct CoverageRisk {
  double coverage = 0.0;
  double risk = 0.0;
};

/// Argmax confidence and correctness of every row. Logits go through the
/// temperature model when one is given, plain softmax otherwise.
inline std::vector<ScoredOutcome> scored_outcomes(const PredictionSet& preds,
                                                  const TemperatureModel* temperature = nullptr) {
  if (!preds.has_labels()) throw DomainError("rejection fitting needs ground-truth labels");
  const PredictionSet probs = (temperature && preds.kind() == ScoreKind::Logits)
                                  ? apply_temperature(preds, *temperature)
                                  : to_probabilities(preds);
  std::vector<ScoredOutcome> out;
  out.reserve(probs.size());
  for (std::size_t r = 0; r < probs.size(); ++r) {
    const auto row = probs.row(r);
    const std::size_t pred = argmax_class(row);
    out.push_back({row[pred], pred == probs.label(r)});
  }
  return out;
}

inline CoverageRisk evaluate_threshold(std::span<const ScoredOutcome> outcomes, double threshold) {
  if (outcomes.empty()) throw DomainError("cannot evaluate a threshold on zero outcomes");
  std::size_t accepted = 0;
  std::size_t wrong = 0;
  for (const auto& o : outcomes) {
    if (o.confidence >= threshold) {
      ++accepted;
      if (!o.correct) ++wrong;
    }
  }
  CoverageRisk cr;
  cr.coverage = static_cast<double>(accepted) / static_cast<double>(outcomes.size());
  cr.risk = accepted == 0 ? 0.0 : static_cast<double>(wrong) / static_cast<double>(accepted);
  return cr;
}

namespace detail {

struct Candidate {
  double threshold;
  std::size_t accepted;
  std::size_t wrong;
};

inline void check_outcomes(std::span<const ScoredOutcome> outcomes) {
  if (outcomes.empty()) throw DomainError("rejection fitting needs at least one outcome");
  for (const auto& o : outcomes) {
    if (!std::isfinite(o.confidence)) throw DomainError("outcome confidence must be finite");
  }
}

/// Every distinct accepted set, ordered by ascending threshold: the sentinel
/// below the minimum, midpoints between adjacent distinct confidences, and
/// the sentinel above the maximum.
inline std::vector<Candidate> candidate_thresholds(std::span<const ScoredOutcome> outcomes) {
  std::vector<ScoredOutcome> sorted(outcomes.begin(), outcomes.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoredOutcome& a, const ScoredOutcome& b) { return a.confidence > b.confidence; });
  const std::size_t n = sorted.size();

  // Walking from the highest confidence down, after consuming each group of
  // equal confidences the accepted set is exactly that prefix.
  std::vector<Candidate> desc;
  desc.push_back({sorted.front().confidence + 1.0, 0, 0});
  std::size_t accepted = 0;
  std::size_t wrong = 0;
  std::size_t i = 0;
  while (i < n) {
    const double value = sorted[i].confidence;
    while (i < n && sorted[i].confidence == value) {
      ++accepted;
      if (!sorted[i].correct) ++wrong;
      ++i;
    }
    double threshold;
    if (i == n) {
      threshold = value - 1.0;
    } else {
      const double next = sorted[i].confidence;
      threshold = next + (value - next) / 2.0;
      // Adjacent doubles can round the midpoint onto the lower value.
      if (!(threshold > next)) threshold = value;
    }
    desc.push_back({threshold, accepted, wrong});
  }
  std::reverse(desc.begin(), desc.end());
  return desc;
}

inline RejectionPolicy make_policy(const Candidate& c, std::size_t total, RejectionConstraint constraint,
                                   bool feasible) {
  RejectionPolicy p;
  p.threshold = c.threshold;
  p.achieved_coverage = static_cast<double>(c.accepted) / static_cast<double>(total);
  p.achieved_risk = c.accepted == 0 ? 0.0 : static_cast<double>(c.wrong) / static_cast<double>(c.accepted);
  p.constraint = constraint;
  p.feasible = feasible;
  return p;
}

/// Exact comparison of wrong_a / accepted_a against wrong_b / accepted_b
/// (empty sets have risk 0). Returns <0, 0, >0.
inline int compare_risk(const Candidate& a, const Candidate& b) {
  const std::size_t lhs = a.wrong * std::max<std::size_t>(b.accepted, 1);
  const std::size_t rhs = b.wrong * std::max<std::size_t>(a.accepted, 1);
  return lhs < rhs ? -1 : (lhs > rhs ? 1 : 0);
}

}  // namespace detail

/// Minimum-risk threshold among those accepting at least `min_coverage` of
/// the outcomes. Ties: higher coverage, then lower threshold.
inline RejectionPolicy fit_coverage_constrained(std::span<const ScoredOutcome> outcomes, double min_coverage) {
  detail::check_outcomes(outcomes);
  if (!(min_coverage > 0.0 && min_coverage <= 1.0)) throw DomainError("min_coverage must lie in (0, 1]");
  const auto candidates = detail::candidate_thresholds(outcomes);
  const std::size_t n = outcomes.size();
  const detail::Candidate* best = nullptr;
  for (const auto& c : candidates) {
    const double coverage = static_cast<double>(c.accepted) / static_cast<double>(n);
    if (coverage < min_coverage) continue;
    if (!best) {
      best = &c;
      continue;
    }
    const int cmp = detail::compare_risk(c, *best);
    if (cmp < 0 || (cmp == 0 && (c.accepted > best->accepted ||
                                 (c.accepted == best->accepted && c.threshold < best->threshold)))) {
      best = &c;
    }
  }
  // The lowest candidate accepts everything, so `best` is always set.
  return detail::make_policy(*best, n, {ConstraintKind::CoverageAtLeast, min_coverage}, true);
}

/// Maximum-coverage threshold among those with risk <= `max_risk`. Ties:
/// lower risk, then lower threshold. If only the accept-nothing threshold
/// qualifies, it is returned with feasible = false.
inline RejectionPolicy fit_risk_constrained(std::span<const ScoredOutcome> outcomes, double max_risk) {
  detail::check_outcomes(outcomes);
  if (!(max_risk >= 0.0 && max_risk < 1.0)) throw DomainError("max_risk must lie in [0, 1)");
  const auto candidates = detail::candidate_thresholds(outcomes);
  const std::size_t n = outcomes.size();
  const detail::Candidate* best = nullptr;
  for (const auto& c : candidates) {
    const double risk = c.accepted == 0 ? 0.0 : static_cast<double>(c.wrong) / static_cast<double>(c.accepted);
    if (risk > max_risk) continue;
    if (!best || c.accepted > best->accepted) {
      best = &c;
      continue;
    }
    if (c.accepted == best->accepted) {
      const int cmp = detail::compare_risk(c, *best);
      if (cmp < 0 || (cmp == 0 && c.threshold < best->threshold)) best = &c;
    }
  }
  return detail::make_policy(*best, n, {ConstraintKind::RiskAtMost, max_risk}, best->accepted > 0);
}

inline RejectionPolicy fit_rejection(std::span<const ScoredOutcome> outcomes, RejectionConstraint constraint) {
  return constraint.kind == ConstraintKind::CoverageAtLeast ? fit_coverage_constrained(outcomes, constraint.value)
                                                            : fit_risk_constrained(outcomes, constraint.value);
}

}  // namespace confident
