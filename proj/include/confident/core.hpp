#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "confident/error.hpp"

namespace confident {

/// Row-sum tolerance accepted on probability dumps before renormalization.
inline constexpr double kProbabilitySumTolerance = 1e-6;

// ---------------------------------------------------------------------------
// ClassCatalog
// ---------------------------------------------------------------------------

/// Ordered set of class identifiers; position i is classifier column i.
class ClassCatalog {
public:
  ClassCatalog() = default;

  explicit ClassCatalog(std::vector<std::string> names) : names_(std::move(names)) {
    if (names_.size() < 2) {
      throw DomainError("class catalog needs at least 2 classes, got " +
                        std::to_string(names_.size()));
    }
    for (std::size_t i = 0; i < names_.size(); ++i) {
      if (names_[i].empty()) {
        throw DomainError("class " + std::to_string(i) + " has an empty name");
      }
      if (!index_.emplace(names_[i], i).second) {
        throw DomainError("duplicate class name '" + names_[i] + "'");
      }
    }
  }

  /// Catalog named "0", "1", ..., "C-1".
  static ClassCatalog indexed(std::size_t num_classes) {
    std::vector<std::string> names;
    names.reserve(num_classes);
    for (std::size_t i = 0; i < num_classes; ++i) names.push_back(std::to_string(i));
    return ClassCatalog(std::move(names));
  }

  std::size_t size() const noexcept { return names_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  const std::string& name(std::size_t i) const { return names_.at(i); }

  std::optional<std::size_t> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  bool operator==(const ClassCatalog& other) const { return names_ == other.names_; }

private:
  std::vector<std::string> names_;
  std::map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// PredictionSet
// ---------------------------------------------------------------------------

enum class ScoreKind { Logits, Probabilities };

/// Whether probability rows are divided by their sum on construction. Keep is
/// for rows this library produced itself (softmax output), so results stay
/// bit-identical to the primitive that made them.
enum class RowNormalization { Renormalize, Keep };

inline const char* to_string(ScoreKind kind) {
  return kind == ScoreKind::Logits ? "logits" : "probabilities";
}

/// N x C matrix of per-example class scores with optional labels and ids.
/// Immutable once built; probability rows are renormalized on construction.
class PredictionSet {
public:
  PredictionSet() = default;

  /// Validates and builds a set. `scores` is row-major with catalog.size()
  /// columns. Throws DomainError naming the first offending row.
  PredictionSet(ClassCatalog catalog, ScoreKind kind, std::vector<double> scores,
                std::optional<std::vector<std::size_t>> labels = std::nullopt,
                std::optional<std::vector<std::string>> ids = std::nullopt,
                RowNormalization normalization = RowNormalization::Renormalize)
      : catalog_(std::move(catalog)),
        kind_(kind),
        scores_(std::move(scores)),
        labels_(std::move(labels)),
        ids_(std::move(ids)) {
    const std::size_t c = catalog_.size();
    if (c < 2) throw DomainError("prediction set needs a catalog of at least 2 classes");
    if (scores_.size() % c != 0) {
      throw DomainError("score buffer of length " + std::to_string(scores_.size()) +
                        " is not a multiple of " + std::to_string(c) + " classes");
    }
    rows_ = scores_.size() / c;
    if (labels_ && labels_->size() != rows_) {
      throw DomainError("label count " + std::to_string(labels_->size()) +
                        " does not match row count " + std::to_string(rows_));
    }
    if (ids_ && ids_->size() != rows_) {
      throw DomainError("id count " + std::to_string(ids_->size()) +
                        " does not match row count " + std::to_string(rows_));
    }
    for (std::size_t r = 0; r < rows_; ++r) {
      std::span<double> row(scores_.data() + r * c, c);
      if (auto problem = check_row(row, kind_)) {
        throw DomainError("row " + std::to_string(r) + ": " + *problem);
      }
      if (kind_ == ScoreKind::Probabilities && normalization == RowNormalization::Renormalize) {
        double sum = 0.0;
        for (double v : row) sum += v;
        // Rows already normalized to rounding level are left bit-identical so
        // that load -> write -> load is a fixed point.
        const double rounding = static_cast<double>(c) * std::numeric_limits<double>::epsilon();
        if (std::abs(sum - 1.0) > rounding) {
          for (double& v : row) v /= sum;
        }
      }
      if (labels_ && (*labels_)[r] >= c) {
        throw DomainError("row " + std::to_string(r) + ": label " +
                          std::to_string((*labels_)[r]) + " out of range [0, " +
                          std::to_string(c) + ")");
      }
    }
  }

  /// Reason a raw row would be rejected, or nullopt when it is acceptable.
  static std::optional<std::string> check_row(std::span<const double> row, ScoreKind kind) {
    double sum = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (!std::isfinite(row[j])) {
        return "non-finite score in column " + std::to_string(j);
      }
      if (kind == ScoreKind::Probabilities && row[j] < 0.0) {
        return "negative probability in column " + std::to_string(j);
      }
      sum += row[j];
    }
    if (kind == ScoreKind::Probabilities && std::abs(sum - 1.0) > kProbabilitySumTolerance) {
      return "probabilities sum to " + std::to_string(sum) + ", expected 1";
    }
    return std::nullopt;
  }

  std::size_t size() const noexcept { return rows_; }
  bool empty() const noexcept { return rows_ == 0; }
  std::size_t num_classes() const noexcept { return catalog_.size(); }
  ScoreKind kind() const noexcept { return kind_; }
  const ClassCatalog& catalog() const noexcept { return catalog_; }

  std::span<const double> row(std::size_t r) const {
    return {scores_.data() + r * num_classes(), num_classes()};
  }
  const std::vector<double>& scores() const noexcept { return scores_; }

  bool has_labels() const noexcept { return labels_.has_value(); }
  const std::optional<std::vector<std::size_t>>& labels() const noexcept { return labels_; }
  std::size_t label(std::size_t r) const {
    if (!labels_) throw DomainError("prediction set has no labels");
    return (*labels_)[r];
  }

  bool has_ids() const noexcept { return ids_.has_value(); }
  const std::optional<std::vector<std::string>>& ids() const noexcept { return ids_; }
  /// Example id, or its 0-based row position when the set carries no ids.
  std::string id(std::size_t r) const { return ids_ ? (*ids_)[r] : std::to_string(r); }

  bool operator==(const PredictionSet& other) const = default;

private:
  ClassCatalog catalog_;
  ScoreKind kind_ = ScoreKind::Logits;
  std::vector<double> scores_;
  std::size_t rows_ = 0;
  std::optional<std::vector<std::size_t>> labels_;
  std::optional<std::vector<std::string>> ids_;
};

// ---------------------------------------------------------------------------
// RunScoreTable
// ---------------------------------------------------------------------------

/// R paired runs x K models of a scalar metric.
class RunScoreTable {
public:
  RunScoreTable() = default;

  RunScoreTable(std::vector<std::string> model_names, std::vector<std::vector<double>> runs)
      : model_names_(std::move(model_names)), runs_(std::move(runs)) {
    if (model_names_.empty()) throw DomainError("run table has no model columns");
    for (std::size_t i = 0; i < model_names_.size(); ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        if (model_names_[i] == model_names_[j]) {
          throw DomainError("duplicate model column '" + model_names_[i] + "'");
        }
      }
    }
    for (std::size_t r = 0; r < runs_.size(); ++r) {
      if (runs_[r].size() != model_names_.size()) {
        throw DomainError("run " + std::to_string(r) + " has " + std::to_string(runs_[r].size()) +
                          " values, expected " + std::to_string(model_names_.size()));
      }
      for (double v : runs_[r]) {
        if (!std::isfinite(v)) throw DomainError("run " + std::to_string(r) + " has a non-finite value");
      }
    }
  }

  std::size_t num_runs() const noexcept { return runs_.size(); }
  const std::vector<std::string>& model_names() const noexcept { return model_names_; }

  /// Metric values of one model across runs, in run order.
  std::vector<double> column(const std::string& model) const {
    auto it = std::find(model_names_.begin(), model_names_.end(), model);
    if (it == model_names_.end()) throw DomainError("unknown model column '" + model + "'");
    const auto k = static_cast<std::size_t>(it - model_names_.begin());
    std::vector<double> out;
    out.reserve(runs_.size());
    for (const auto& run : runs_) out.push_back(run[k]);
    return out;
  }

private:
  std::vector<std::string> model_names_;
  std::vector<std::vector<double>> runs_;
};

// ---------------------------------------------------------------------------
// Softmax / argmax
// ---------------------------------------------------------------------------

/// Temperature-scaled softmax of a logit row, max-subtracted for overflow
/// safety. temperature == 1 is plain softmax.
inline std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw DomainError("softmax temperature must be positive and finite");
  }
  if (logits.empty()) throw DomainError("softmax of an empty row");
  double max_logit = logits[0];
  for (double v : logits) {
    if (!std::isfinite(v)) throw DomainError("softmax of a non-finite logit");
    max_logit = std::max(max_logit, v);
  }
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp((logits[i] - max_logit) / temperature);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

/// log softmax(logits / T)[index], computed via log-sum-exp.
inline double log_softmax_at(std::span<const double> logits, std::size_t index,
                             double temperature = 1.0) {
  double max_logit = logits[0];
  for (double v : logits) max_logit = std::max(max_logit, v);
  double sum = 0.0;
  for (double v : logits) sum += std::exp((v - max_logit) / temperature);
  return (logits[index] - max_logit) / temperature - std::log(sum);
}

/// Index of the largest entry; ties go to the lowest index.
inline std::size_t argmax_class(std::span<const double> row) {
  if (row.empty()) throw DomainError("argmax of an empty row");
  std::size_t best = 0;
  for (std::size_t i = 1; i < row.size(); ++i) {
    if (row[i] > row[best]) best = i;
  }
  return best;
}

/// Row r as probabilities: copied for probability sets, softmax(T=1) for logits.
inline std::vector<double> probabilities_of(const PredictionSet& preds, std::size_t r) {
  auto row = preds.row(r);
  if (preds.kind() == ScoreKind::Probabilities) return {row.begin(), row.end()};
  return softmax(row);
}

/// Whole set as probabilities (softmax at T=1 for logits).
inline PredictionSet to_probabilities(const PredictionSet& preds) {
  if (preds.kind() == ScoreKind::Probabilities) return preds;
  std::vector<double> out;
  out.reserve(preds.scores().size());
  for (std::size_t r = 0; r < preds.size(); ++r) {
    auto p = softmax(preds.row(r));
    out.insert(out.end(), p.begin(), p.end());
  }
  return PredictionSet(preds.catalog(), ScoreKind::Probabilities, std::move(out), preds.labels(),
                       preds.ids(), RowNormalization::Keep);
}

}  // namespace confident
