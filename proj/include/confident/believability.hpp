#pragma once

// Calibration measurement and temperature scaling.
//
// Reliability bins hold the argmax-selected confidence of each example; ECE is
// the count-weighted mean of |avg confidence - precision| over bins. The total
// calibration error (TCE) bins every one of the N*C probability entries and
// compares each bin's mean entry value with the fraction of its entries that
// belong to the ground-truth class, weighting by count / (N*C).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "confident/core.hpp"
#include "confident/error.hpp"

namespace confident {

inline constexpr std::size_t kDefaultNumBins = 15;
inline constexpr std::size_t kDefaultMinSamples = 25;

/// Equal-width partition of [0, 1]. Value v lands in bin m iff
/// edges[m] <= v < edges[m+1]; v = 1 goes to the last bin.
class BinningConfig {
public:
  explicit BinningConfig(std::size_t num_bins = kDefaultNumBins) : edges_(num_bins + 1) {
    if (num_bins == 0) throw DomainError("binning needs at least one bin");
    for (std::size_t m = 0; m <= num_bins; ++m) {
      edges_[m] = static_cast<double>(m) / static_cast<double>(num_bins);
    }
    edges_.front() = 0.0;
    edges_.back() = 1.0;
  }

  std::size_t num_bins() const noexcept { return edges_.size() - 1; }
  const std::vector<double>& edges() const noexcept { return edges_; }

  std::size_t bin_of(double v) const {
    const std::size_t last = num_bins() - 1;
    if (!(v > 0.0)) return 0;
    if (v >= 1.0) return last;
    auto m = static_cast<std::size_t>(v * static_cast<double>(num_bins()));
    m = std::min(m, last);
    // floor(v*M) can be off by one near an edge; settle against the stored edges.
    while (m > 0 && v < edges_[m]) --m;
    while (m < last && v >= edges_[m + 1]) ++m;
    return m;
  }

private:
  std::vector<double> edges_;
};

struct ReliabilityBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  double avg_confidence = 0.0;
  /// Fraction of members that are correct (ECE bins) or that are the
  /// ground-truth entry (TCE bins). 0 for empty bins.
  double precision = 0.0;
};

struct CalibrationReport {
  std::vector<ReliabilityBin> bins;
  double ece = 0.0;
  std::vector<ReliabilityBin> total_bins;  ///< empty unless TCE was computed
  std::optional<double> tce;
  std::size_t n_examples = 0;
};

enum class TemperatureMode { Global, PerClass };
enum class CalibrationObjective { NLL, ECE };

inline const char* to_string(TemperatureMode m) {
  return m == TemperatureMode::Global ? "global" : "per_class";
}
inline const char* to_string(CalibrationObjective o) {
  return o == CalibrationObjective::NLL ? "nll" : "ece";
}

/// Fitted temperatures. In PerClass mode a row's temperature is looked up by
/// the row's argmax class.
struct TemperatureModel {
  TemperatureMode mode = TemperatureMode::Global;
  double global_t = 1.0;
  std::vector<double> per_class_t;
  CalibrationObjective objective = CalibrationObjective::NLL;

  double temperature_for(std::size_t predicted_class) const {
    if (mode == TemperatureMode::Global) return global_t;
    return per_class_t.at(predicted_class);
  }

  void validate(std::size_t num_classes) const {
    if (!(global_t > 0.0) || !std::isfinite(global_t)) throw ValidationError("temperature must be > 0");
    if (mode == TemperatureMode::PerClass) {
      if (per_class_t.size() != num_classes) {
        throw ValidationError("per-class temperature count " + std::to_string(per_class_t.size()) +
                              " does not match " + std::to_string(num_classes) + " classes");
      }
      for (double t : per_class_t) {
        if (!(t > 0.0) || !std::isfinite(t)) throw ValidationError("temperature must be > 0");
      }
    }
  }

  bool operator==(const TemperatureModel&) const = default;
};

/// Log-spaced temperature candidates.
struct TemperatureGrid {
  double lo = 0.05;
  double hi = 20.0;
  std::size_t points = 200;

  std::vector<double> values() const {
    if (!(lo > 0.0) || !(hi > lo) || points < 2) {
      throw DomainError("temperature grid needs 0 < lo < hi and at least 2 points");
    }
    std::vector<double> out(points);
    const double log_lo = std::log(lo);
    const double step = (std::log(hi) - log_lo) / static_cast<double>(points - 1);
    for (std::size_t k = 0; k < points; ++k) out[k] = std::exp(log_lo + step * static_cast<double>(k));
    out.front() = lo;
    out.back() = hi;
    return out;
  }

  /// Ratio between neighbouring grid points.
  double step_ratio() const {
    return std::exp((std::log(hi) - std::log(lo)) / static_cast<double>(points - 1));
  }
};

namespace detail {

inline void require_labels(const PredictionSet& preds) {
  if (!preds.has_labels()) throw DomainError("calibration needs ground-truth labels");
}

inline std::vector<ReliabilityBin> finish_bins(const BinningConfig& cfg, const std::vector<std::size_t>& counts,
                                               const std::vector<double>& conf_sum,
                                               const std::vector<double>& hit_sum) {
  std::vector<ReliabilityBin> bins(cfg.num_bins());
  for (std::size_t m = 0; m < bins.size(); ++m) {
    bins[m].lo = cfg.edges()[m];
    bins[m].hi = cfg.edges()[m + 1];
    bins[m].count = counts[m];
    if (counts[m] > 0) {
      bins[m].avg_confidence = conf_sum[m] / static_cast<double>(counts[m]);
      bins[m].precision = hit_sum[m] / static_cast<double>(counts[m]);
    }
  }
  return bins;
}

}  // namespace detail

/// Count-weighted mean absolute gap between bin confidence and precision.
/// Returns 0 when the bins are all empty.
inline double weighted_calibration_gap(std::span<const ReliabilityBin> bins) {
  std::size_t total = 0;
  for (const auto& b : bins) total += b.count;
  if (total == 0) return 0.0;
  double gap = 0.0;
  for (const auto& b : bins) {
    gap += static_cast<double>(b.count) / static_cast<double>(total) *
           std::abs(b.avg_confidence - b.precision);
  }
  return gap;
}

/// Bins the argmax confidence of every example (logits go through softmax).
inline std::vector<ReliabilityBin> reliability_bins(const PredictionSet& preds,
                                                    const BinningConfig& cfg = BinningConfig()) {
  detail::require_labels(preds);
  const std::size_t m = cfg.num_bins();
  std::vector<std::size_t> counts(m, 0);
  std::vector<double> conf_sum(m, 0.0);
  std::vector<double> hit_sum(m, 0.0);
  for (std::size_t r = 0; r < preds.size(); ++r) {
    const auto probs = probabilities_of(preds, r);
    const std::size_t pred = argmax_class(probs);
    const double conf = probs[pred];
    const std::size_t bin = cfg.bin_of(conf);
    ++counts[bin];
    conf_sum[bin] += conf;
    if (pred == preds.label(r)) hit_sum[bin] += 1.0;
  }
  return detail::finish_bins(cfg, counts, conf_sum, hit_sum);
}

/// Bins all N*C probability entries; "precision" is the ground-truth fraction.
inline std::vector<ReliabilityBin> total_calibration_bins(const PredictionSet& preds,
                                                          const BinningConfig& cfg = BinningConfig()) {
  detail::require_labels(preds);
  const std::size_t m = cfg.num_bins();
  std::vector<std::size_t> counts(m, 0);
  std::vector<double> conf_sum(m, 0.0);
  std::vector<double> hit_sum(m, 0.0);
  for (std::size_t r = 0; r < preds.size(); ++r) {
    const auto probs = probabilities_of(preds, r);
    const std::size_t truth = preds.label(r);
    for (std::size_t j = 0; j < probs.size(); ++j) {
      const std::size_t bin = cfg.bin_of(probs[j]);
      ++counts[bin];
      conf_sum[bin] += probs[j];
      if (j == truth) hit_sum[bin] += 1.0;
    }
  }
  return detail::finish_bins(cfg, counts, conf_sum, hit_sum);
}

inline double ece(const PredictionSet& preds, const BinningConfig& cfg = BinningConfig()) {
  return weighted_calibration_gap(reliability_bins(preds, cfg));
}

inline double total_calibration_error(const PredictionSet& preds,
                                      const BinningConfig& cfg = BinningConfig()) {
  return weighted_calibration_gap(total_calibration_bins(preds, cfg));
}

inline CalibrationReport calibration_report(const PredictionSet& preds,
                                            const BinningConfig& cfg = BinningConfig(),
                                            bool with_total = true) {
  CalibrationReport report;
  report.n_examples = preds.size();
  report.bins = reliability_bins(preds, cfg);
  report.ece = weighted_calibration_gap(report.bins);
  if (with_total) {
    report.total_bins = total_calibration_bins(preds, cfg);
    report.tce = weighted_calibration_gap(report.total_bins);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Temperature scaling
// ---------------------------------------------------------------------------

/// Divides each row's logits by its temperature and applies softmax. The
/// argmax of every row is unchanged.
inline PredictionSet apply_temperature(const PredictionSet& preds, const TemperatureModel& model) {
  if (preds.kind() != ScoreKind::Logits) throw DomainError("temperature scaling needs logits");
  model.validate(preds.num_classes());
  std::vector<double> out;
  out.reserve(preds.scores().size());
  for (std::size_t r = 0; r < preds.size(); ++r) {
    const auto row = preds.row(r);
    const auto p = softmax(row, model.temperature_for(argmax_class(row)));
    out.insert(out.end(), p.begin(), p.end());
  }
  return PredictionSet(preds.catalog(), ScoreKind::Probabilities, std::move(out), preds.labels(),
                       preds.ids(), RowNormalization::Keep);
}

/// Mean negative log-likelihood of the labels under softmax(logits / T),
/// restricted to `rows`.
inline double temperature_nll(const PredictionSet& preds, std::span<const std::size_t> rows, double t) {
  if (rows.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t r : rows) sum -= log_softmax_at(preds.row(r), preds.label(r), t);
  return sum / static_cast<double>(rows.size());
}

/// ECE of softmax(logits / T) over `rows`.
inline double temperature_ece(const PredictionSet& preds, std::span<const std::size_t> rows, double t,
                              const BinningConfig& cfg) {
  const std::size_t m = cfg.num_bins();
  std::vector<std::size_t> counts(m, 0);
  std::vector<double> conf_sum(m, 0.0);
  std::vector<double> hit_sum(m, 0.0);
  for (std::size_t r : rows) {
    const auto p = softmax(preds.row(r), t);
    const std::size_t pred = argmax_class(p);
    const std::size_t bin = cfg.bin_of(p[pred]);
    ++counts[bin];
    conf_sum[bin] += p[pred];
    if (pred == preds.label(r)) hit_sum[bin] += 1.0;
  }
  return weighted_calibration_gap(detail::finish_bins(cfg, counts, conf_sum, hit_sum));
}

namespace detail {

inline void require_fit_input(const PredictionSet& preds) {
  if (preds.kind() != ScoreKind::Logits) throw DomainError("temperature fitting needs logits");
  require_labels(preds);
}

/// Grid argmin; ties go to the T closest to 1, then to the smaller T.
inline double grid_argmin(const PredictionSet& preds, std::span<const std::size_t> rows,
                          CalibrationObjective objective, const TemperatureGrid& grid,
                          const BinningConfig& cfg) {
  double best_t = 1.0;
  double best_value = 0.0;
  bool first = true;
  for (double t : grid.values()) {
    const double value = objective == CalibrationObjective::NLL ? temperature_nll(preds, rows, t)
                                                                : temperature_ece(preds, rows, t, cfg);
    const bool better = first || value < best_value ||
                        (value == best_value && std::abs(t - 1.0) < std::abs(best_t - 1.0));
    if (better) {
      best_t = t;
      best_value = value;
      first = false;
    }
  }
  return best_t;
}

inline std::vector<std::size_t> all_rows(const PredictionSet& preds) {
  std::vector<std::size_t> rows(preds.size());
  for (std::size_t r = 0; r < rows.size(); ++r) rows[r] = r;
  return rows;
}

}  // namespace detail

/// Single temperature minimizing the objective over a log-spaced grid.
inline TemperatureModel fit_temperature(const PredictionSet& preds,
                                        CalibrationObjective objective = CalibrationObjective::NLL,
                                        const TemperatureGrid& grid = {},
                                        const BinningConfig& cfg = BinningConfig()) {
  detail::require_fit_input(preds);
  const auto rows = detail::all_rows(preds);
  TemperatureModel model;
  model.mode = TemperatureMode::Global;
  model.objective = objective;
  model.global_t = detail::grid_argmin(preds, rows, objective, grid, cfg);
  return model;
}

/// One temperature per argmax-predicted class. Classes predicted fewer than
/// `min_samples` times get the global temperature.
inline TemperatureModel fit_per_class_temperatures(const PredictionSet& preds,
                                                   CalibrationObjective objective = CalibrationObjective::NLL,
                                                   const TemperatureGrid& grid = {},
                                                   std::size_t min_samples = kDefaultMinSamples,
                                                   const BinningConfig& cfg = BinningConfig()) {
  TemperatureModel model = fit_temperature(preds, objective, grid, cfg);
  model.mode = TemperatureMode::PerClass;
  std::vector<std::vector<std::size_t>> partitions(preds.num_classes());
  for (std::size_t r = 0; r < preds.size(); ++r) partitions[argmax_class(preds.row(r))].push_back(r);
  model.per_class_t.assign(preds.num_classes(), model.global_t);
  for (std::size_t c = 0; c < partitions.size(); ++c) {
    if (!partitions[c].empty() && partitions[c].size() >= min_samples) {
      model.per_class_t[c] = detail::grid_argmin(preds, partitions[c], objective, grid, cfg);
    }
  }
  return model;
}

}  // namespace confident
