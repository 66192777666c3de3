#pragma once

// Prior-shift adaptation.
//
// Bayes' rule with training priors pi gives q_i = L_i pi_i / sum_j L_j pi_j.
// Cross-multiplying yields the homogeneous system M L = 0 with
//
//   M[i][j] = delta_ij * pi_j - q_i * pi_j,
//
// whose nullspace is one-dimensional for strictly positive q and pi. The
// likelihoods L are recovered (up to scale) from that nullspace, which is also
// the eigenvalue-1 eigenvector of A = M + I, and then re-combined with new
// priors through Bayes' rule.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "confident/core.hpp"
#include "confident/error.hpp"

namespace confident {

inline constexpr double kPriorSumTolerance = 1e-9;
inline constexpr double kNullspaceResidualTolerance = 1e-9;
inline constexpr double kDefaultSmoothingEpsilon = 1e-9;

/// Strictly positive class priors summing to 1.
class PriorVector {
public:
  PriorVector() = default;

  explicit PriorVector(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw DomainError("prior vector is empty");
    double sum = 0.0;
    for (std::size_t i = 0; i < values_.size(); ++i) {
      if (!std::isfinite(values_[i]) || !(values_[i] > 0.0)) {
        throw DomainError("prior " + std::to_string(i) + " must be finite and > 0");
      }
      sum += values_[i];
    }
    if (std::abs(sum - 1.0) > kPriorSumTolerance) {
      throw DomainError("priors sum to " + std::to_string(sum) + ", expected 1");
    }
  }

  /// Divides positive weights by their sum.
  static PriorVector normalized(std::vector<double> weights) {
    double sum = 0.0;
    for (double w : weights) sum += w;
    if (!(sum > 0.0) || !std::isfinite(sum)) throw DomainError("prior weights must have a positive sum");
    for (double& w : weights) w /= sum;
    return PriorVector(std::move(weights));
  }

  static PriorVector uniform(std::size_t n) { return PriorVector(std::vector<double>(n, 1.0 / static_cast<double>(n))); }

  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  const std::vector<double>& values() const noexcept { return values_; }
  bool operator==(const PriorVector&) const = default;

private:
  std::vector<double> values_;
};

/// Dense N x N homogeneous system built from one posterior and its priors.
struct ShiftSystem {
  std::size_t n = 0;
  std::vector<double> matrix;  ///< row-major M
  std::vector<double> posterior;
  PriorVector train_priors;

  double at(std::size_t i, std::size_t j) const { return matrix[i * n + j]; }

  std::vector<double> apply(std::span<const double> v) const {
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < n; ++j) sum += at(i, j) * v[j];
      out[i] = sum;
    }
    return out;
  }

  /// max_i |(M v)_i|
  double residual(std::span<const double> v) const {
    double worst = 0.0;
    for (double r : apply(v)) worst = std::max(worst, std::abs(r));
    return worst;
  }

  /// max_i |((M + I) v)_i - v_i|, the eigenvalue-1 check on A = M + I.
  double eigen_residual(std::span<const double> v) const {
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double av = 0.0;
      for (std::size_t j = 0; j < n; ++j) av += (at(i, j) + (i == j ? 1.0 : 0.0)) * v[j];
      worst = std::max(worst, std::abs(av - v[i]));
    }
    return worst;
  }
};

/// Likelihoods p(x | c_i), fixed in scale by summing to 1.
struct LikelihoodVector {
  std::vector<double> values;
};

inline ShiftSystem build_shift_system(std::span<const double> posterior, const PriorVector& train_priors) {
  const std::size_t n = posterior.size();
  if (n != train_priors.size()) {
    throw DomainError("posterior has " + std::to_string(n) + " entries but there are " +
                      std::to_string(train_priors.size()) + " priors");
  }
  if (n == 0) throw DomainError("empty posterior");
  double sum = 0.0;
  for (double q : posterior) {
    if (!std::isfinite(q) || q < 0.0) throw DomainError("posterior entries must be finite and >= 0");
    sum += q;
  }
  if (std::abs(sum - 1.0) > kProbabilitySumTolerance) throw DomainError("posterior must sum to 1");

  ShiftSystem s;
  s.n = n;
  s.posterior.assign(posterior.begin(), posterior.end());
  s.train_priors = train_priors;
  s.matrix.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      s.matrix[i * n + j] = (i == j ? train_priors[j] : 0.0) - posterior[i] * train_priors[j];
    }
  }
  return s;
}

namespace detail {

/// Solves a x = b in place by Gaussian elimination with partial pivoting.
/// Returns the smallest absolute pivot encountered.
inline double solve_partial_pivot(std::vector<double> a, std::vector<double>& b, std::size_t n) {
  double min_pivot = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t p = k;
    for (std::size_t i = k + 1; i < n; ++i) {
      if (std::abs(a[i * n + k]) > std::abs(a[p * n + k])) p = i;
    }
    if (p != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a[k * n + j], a[p * n + j]);
      std::swap(b[k], b[p]);
    }
    const double pivot = a[k * n + k];
    min_pivot = std::min(min_pivot, std::abs(pivot));
    if (pivot == 0.0) return 0.0;
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = a[i * n + k] / pivot;
      if (f == 0.0) continue;
      for (std::size_t j = k; j < n; ++j) a[i * n + j] -= f * a[k * n + j];
      b[i] -= f * b[k];
    }
  }
  for (std::size_t k = n; k-- > 0;) {
    double sum = b[k];
    for (std::size_t j = k + 1; j < n; ++j) sum -= a[k * n + j] * b[j];
    b[k] = sum / a[k * n + k];
  }
  return min_pivot;
}

inline void require_positive_posterior(const ShiftSystem& s) {
  for (std::size_t i = 0; i < s.n; ++i) {
    if (!(s.posterior[i] > 0.0)) {
      throw DomainError("posterior entry " + std::to_string(i) +
                        " is zero; the likelihood system is degenerate (enable smoothing)");
    }
  }
}

/// Sum-to-one gauge; nullopt unless every entry is strictly positive.
inline std::optional<std::vector<double>> positive_normalized(std::vector<double> v) {
  double sum = 0.0;
  for (double x : v) sum += x;
  if (!std::isfinite(sum) || sum == 0.0) return std::nullopt;
  for (double& x : v) {
    x /= sum;
    if (!(x > 0.0)) return std::nullopt;
  }
  return v;
}

}  // namespace detail

/// Nullspace of M by inverse iteration on A = M + I with a shift just off the
/// eigenvalue 1. Used as the fallback route of recover_likelihoods.
inline std::vector<double> nullspace_by_inverse_iteration(const ShiftSystem& s, std::size_t max_iterations = 50) {
  const std::size_t n = s.n;
  constexpr double kShift = 1e-10;
  std::vector<double> shifted = s.matrix;  // (A - (1 + shift) I) = M - shift I
  for (std::size_t i = 0; i < n; ++i) shifted[i * n + i] -= kShift;
  std::vector<double> v(n, 1.0 / static_cast<double>(n));
  for (std::size_t it = 0; it < max_iterations; ++it) {
    std::vector<double> w = v;
    if (detail::solve_partial_pivot(shifted, w, n) == 0.0) break;
    double sum = 0.0;
    for (double x : w) sum += x;
    for (double& x : w) x /= sum;
    v = std::move(w);
    if (s.residual(v) <= kNullspaceResidualTolerance * 1e-3) break;
  }
  return v;
}

/// Likelihoods from the nullspace of M.
///
/// The columns of M sum to zero, so any one row is redundant; it is replaced by
/// the gauge row sum(v) = 1 and the resulting nonsingular system is solved by
/// elimination with partial pivoting. Inverse iteration is the fallback if
/// that misses the residual target.
inline LikelihoodVector recover_likelihoods(const ShiftSystem& s) {
  try {
    detail::require_positive_posterior(s);
  } catch (const DomainError& e) {
    throw DegenerateSystemError(e.what());
  }
  const std::size_t n = s.n;
  if (n == 1) return {{1.0}};

  const std::size_t gauge_row = argmax_class(s.posterior);
  std::vector<double> a = s.matrix;
  for (std::size_t j = 0; j < n; ++j) a[gauge_row * n + j] = 1.0;
  std::vector<double> b(n, 0.0);
  b[gauge_row] = 1.0;
  const double min_pivot = detail::solve_partial_pivot(a, b, n);

  std::optional<std::vector<double>> v;
  if (min_pivot > 0.0) v = detail::positive_normalized(b);
  double residual = v ? s.residual(*v) : std::numeric_limits<double>::infinity();
  if (!v || residual > kNullspaceResidualTolerance) {
    v = detail::positive_normalized(nullspace_by_inverse_iteration(s));
    residual = v ? s.residual(*v) : std::numeric_limits<double>::infinity();
  }
  if (!v || residual > kNullspaceResidualTolerance) {
    throw NumericalError("likelihood recovery failed: residual " + std::to_string(residual) +
                         ", smallest elimination pivot " + std::to_string(min_pivot) + ", N = " + std::to_string(n));
  }
  return {std::move(*v)};
}

struct AdaptOptions {
  bool smoothing = false;
  double epsilon = kDefaultSmoothingEpsilon;
};

/// Adds epsilon to every entry and renormalizes.
inline std::vector<double> smooth_posterior(std::span<const double> posterior, double epsilon = kDefaultSmoothingEpsilon) {
  std::vector<double> out(posterior.begin(), posterior.end());
  double sum = 0.0;
  for (double& q : out) {
    q += epsilon;
    sum += q;
  }
  for (double& q : out) q /= sum;
  return out;
}

/// Bayes' rule with new priors over likelihoods recovered from the posterior.
/// With smoothing enabled, posteriors containing a zero are smoothed first;
/// strictly positive posteriors are used as given.
inline std::vector<double> adapt_posterior(std::span<const double> posterior, const PriorVector& train_priors,
                                           const PriorVector& new_priors, const AdaptOptions& options = {}) {
  if (new_priors.size() != train_priors.size()) {
    throw DomainError("train and new priors differ in length");
  }
  std::vector<double> q(posterior.begin(), posterior.end());
  const bool has_zero = std::any_of(q.begin(), q.end(), [](double x) { return !(x > 0.0); });
  if (has_zero && options.smoothing) q = smooth_posterior(q, options.epsilon);

  const auto likelihood = recover_likelihoods(build_shift_system(q, train_priors));
  std::vector<double> out(q.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = likelihood.values[i] * new_priors[i];
    sum += out[i];
  }
  for (double& x : out) x /= sum;
  return out;
}

/// Row-wise adapt_posterior; ids and labels carry through unchanged.
inline PredictionSet adapt_prediction_set(const PredictionSet& preds, const PriorVector& train_priors,
                                          const PriorVector& new_priors, const AdaptOptions& options = {}) {
  if (preds.kind() != ScoreKind::Probabilities) throw DomainError("prior adaptation needs probabilities");
  if (train_priors.size() != preds.num_classes()) {
    throw DomainError("priors cover " + std::to_string(train_priors.size()) + " classes but predictions have " +
                      std::to_string(preds.num_classes()));
  }
  std::vector<double> out;
  out.reserve(preds.scores().size());
  for (std::size_t r = 0; r < preds.size(); ++r) {
    try {
      const auto adapted = adapt_posterior(preds.row(r), train_priors, new_priors, options);
      out.insert(out.end(), adapted.begin(), adapted.end());
    } catch (const DegenerateSystemError& e) {
      throw DegenerateSystemError("row '" + preds.id(r) + "': " + e.what());
    } catch (const NumericalError& e) {
      throw NumericalError("row '" + preds.id(r) + "': " + e.what());
    }
  }
  return PredictionSet(preds.catalog(), ScoreKind::Probabilities, std::move(out), preds.labels(), preds.ids(),
                       RowNormalization::Keep);
}

}  // namespace confident
