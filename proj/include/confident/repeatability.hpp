#pragma once

// Multi-run summaries and one-sided paired t-tests between models.

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "confident/core.hpp"
#include "confident/error.hpp"

namespace confident {

inline constexpr double kDefaultAlpha = 0.05;
inline constexpr double kDefaultPracticalThreshold = 1.0;

struct RunSummary {
  double mean = 0.0;
  double std = 0.0;  ///< sample standard deviation (n - 1 denominator)
  std::pair<double, double> three_sigma_range{0.0, 0.0};
  std::size_t n_runs = 0;
};

struct ComparisonResult {
  double mean_diff = 0.0;  ///< mean of a_i - b_i
  /// +/-infinity when the differences have zero variance and nonzero mean.
  double t_statistic = 0.0;
  std::size_t degrees_freedom = 0;
  double p_value = 0.5;  ///< one-sided, H1: a > b
  double alpha = kDefaultAlpha;
  bool statistically_significant = false;
  bool practically_significant = false;
  double practical_threshold = kDefaultPracticalThreshold;
};

namespace detail {

inline double mean_of(std::span<const double> values) {
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

inline double sample_std(std::span<const double> values, double mean) {
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

// Continued fraction for the incomplete beta function (modified Lentz).
inline double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIterations = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIterations; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps) return h;
  }
  throw NumericalError("incomplete beta continued fraction did not converge (a=" +
                       std::to_string(a) + ", b=" + std::to_string(b) + ", x=" + std::to_string(x) + ")");
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b). `y` must equal 1 - x; it is taken
/// separately so callers can supply it without cancellation.
inline double regularized_incomplete_beta(double a, double b, double x, double y) {
  if (!(a > 0.0) || !(b > 0.0)) throw DomainError("incomplete beta needs a, b > 0");
  if (x < 0.0 || y < 0.0) throw DomainError("incomplete beta needs x in [0, 1]");
  if (x == 0.0) return 0.0;
  if (y == 0.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log(y);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * detail::beta_continued_fraction(a, b, x) / a;
  }
  return 1.0 - front * detail::beta_continued_fraction(b, a, y) / b;
}

/// P(T >= t) for Student's t with `df` degrees of freedom.
inline double student_t_upper_tail(double t, std::size_t df) {
  if (df == 0) throw DomainError("student t needs at least 1 degree of freedom");
  if (!std::isfinite(t)) {
    if (std::isnan(t)) throw DomainError("student t statistic is NaN");
    return t > 0 ? 0.0 : 1.0;
  }
  if (t == 0.0) return 0.5;
  const double nu = static_cast<double>(df);
  const double t2 = t * t;
  const double x = nu / (nu + t2);
  const double y = t2 / (nu + t2);
  const double half_tail = 0.5 * regularized_incomplete_beta(0.5 * nu, 0.5, x, y);
  return t > 0.0 ? half_tail : 1.0 - half_tail;
}

/// Mean, sample std and the mean +/- 3 std band of repeated runs.
inline RunSummary summarize_runs(std::span<const double> values) {
  if (values.size() < 2) {
    throw InsufficientDataError("run summary needs at least 2 runs, got " +
                                std::to_string(values.size()));
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw DomainError("run values must be finite");
  }
  RunSummary s;
  s.n_runs = values.size();
  s.mean = detail::mean_of(values);
  s.std = detail::sample_std(values, s.mean);
  s.three_sigma_range = {s.mean - 3.0 * s.std, s.mean + 3.0 * s.std};
  return s;
}

/// Fills the two significance flags from the other fields of `r`.
inline void assess_significance(ComparisonResult& r) {
  r.statistically_significant = r.p_value < r.alpha;
  r.practically_significant = r.statistically_significant && r.mean_diff >= r.practical_threshold;
}

/// One-sided paired t-test of H1: mean(a - b) > 0.
///
/// Zero-variance differences: p = 0 if mean_diff > 0, 0.5 if it is 0 and 1
/// if it is negative.
inline ComparisonResult paired_t_test(std::span<const double> a, std::span<const double> b,
                                      double alpha = kDefaultAlpha,
                                      double practical_threshold = kDefaultPracticalThreshold) {
  if (a.size() != b.size()) {
    throw DomainError("paired t-test needs equal-length samples (" + std::to_string(a.size()) +
                      " vs " + std::to_string(b.size()) + ")");
  }
  if (a.size() < 2) throw DomainError("paired t-test needs at least 2 pairs");
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in (0, 1)");

  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a[i]) || !std::isfinite(b[i])) throw DomainError("samples must be finite");
    d[i] = a[i] - b[i];
  }
  const double n = static_cast<double>(d.size());

  ComparisonResult r;
  r.alpha = alpha;
  r.practical_threshold = practical_threshold;
  r.degrees_freedom = d.size() - 1;
  r.mean_diff = detail::mean_of(d);
  const double sd = detail::sample_std(d, r.mean_diff);
  if (sd == 0.0) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    if (r.mean_diff > 0.0) {
      r.t_statistic = inf;
      r.p_value = 0.0;
    } else if (r.mean_diff < 0.0) {
      r.t_statistic = -inf;
      r.p_value = 1.0;
    } else {
      r.t_statistic = 0.0;
      r.p_value = 0.5;
    }
  } else {
    r.t_statistic = r.mean_diff / (sd / std::sqrt(n));
    r.p_value = student_t_upper_tail(r.t_statistic, r.degrees_freedom);
  }
  assess_significance(r);
  return r;
}

/// Paired comparison of two columns of a run table plus per-model summaries.
struct ModelComparison {
  std::string model_a;
  std::string model_b;
  RunSummary summary_a;
  RunSummary summary_b;
  ComparisonResult result;
};

inline ModelComparison compare_models(const RunScoreTable& table, const std::string& model_a,
                                      const std::string& model_b, double alpha = kDefaultAlpha,
                                      double practical_threshold = kDefaultPracticalThreshold) {
  const auto a = table.column(model_a);
  const auto b = table.column(model_b);
  ModelComparison out;
  out.model_a = model_a;
  out.model_b = model_b;
  out.summary_a = summarize_runs(a);
  out.summary_b = summarize_runs(b);
  out.result = paired_t_test(a, b, alpha, practical_threshold);
  return out;
}

}  // namespace confident
