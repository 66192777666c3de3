#pragma once

// JSON forms of reports and the policy bundle.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "confident/adapt.hpp"
#include "confident/believability.hpp"
#include "confident/error.hpp"
#include "confident/generalize.hpp"
#include "confident/reject.hpp"
#include "confident/repeatability.hpp"

namespace confident {

using Json = nlohmann::ordered_json;

/// Finite values as numbers; infinities as "inf" / "-inf" strings.
inline Json number_or_string(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

inline Json to_json(const RunSummary& s) {
  return Json{{"mean", s.mean},
              {"std", s.std},
              {"three_sigma_range", {s.three_sigma_range.first, s.three_sigma_range.second}},
              {"n_runs", s.n_runs}};
}

inline Json to_json(const ComparisonResult& r) {
  return Json{{"mean_diff", r.mean_diff},
              {"t_statistic", number_or_string(r.t_statistic)},
              {"degrees_freedom", r.degrees_freedom},
              {"p_value", r.p_value},
              {"alpha", r.alpha},
              {"statistically_significant", r.statistically_significant},
              {"practically_significant", r.practically_significant},
              {"practical_threshold", r.practical_threshold}};
}

inline Json to_json(const ModelComparison& c) {
  return Json{{"model_a", c.model_a},
              {"model_b", c.model_b},
              {"comparison", to_json(c.result)},
              {"summary_a", to_json(c.summary_a)},
              {"summary_b", to_json(c.summary_b)}};
}

inline Json to_json(const ReliabilityBin& b) {
  return Json{{"bin_lo", b.lo},
              {"bin_hi", b.hi},
              {"count", b.count},
              {"avg_confidence", b.avg_confidence},
              {"precision", b.precision}};
}

inline Json to_json(const CalibrationReport& r) {
  Json bins = Json::array();
  for (const auto& b : r.bins) bins.push_back(to_json(b));
  Json out{{"n_examples", r.n_examples}, {"ece", r.ece}, {"bins", bins}};
  if (r.tce) {
    Json total = Json::array();
    for (const auto& b : r.total_bins) total.push_back(to_json(b));
    out["tce"] = *r.tce;
    out["total_bins"] = total;
  }
  return out;
}

inline Json to_json(const TemperatureModel& m) {
  Json out{{"mode", to_string(m.mode)}, {"objective", to_string(m.objective)}, {"global_t", m.global_t}};
  if (m.mode == TemperatureMode::PerClass) out["per_class_t"] = m.per_class_t;
  return out;
}

inline Json to_json(const RejectionPolicy& p) {
  return Json{{"threshold", p.threshold},
              {"achieved_coverage", p.achieved_coverage},
              {"achieved_risk", p.achieved_risk},
              {"constraint", {{"type", to_string(p.constraint.kind)}, {"value", p.constraint.value}}},
              {"feasible", p.feasible}};
}

inline Json to_json(const GeneralizationResult& g) {
  Json path = Json::array();
  for (const auto& s : g.path) path.push_back(Json{{"node", s.name}, {"confidence", s.confidence}});
  return Json{{"chosen", g.chosen_step().name},
              {"confidence", g.chosen_step().confidence},
              {"unknown", g.unknown},
              {"path", path}};
}

// ---------------------------------------------------------------------------
// Policy bundle
// ---------------------------------------------------------------------------

struct GeneralizationConfig {
  std::string hierarchy;  ///< path of the hierarchy file, as given
  double threshold = 0.9;
  bool subset = false;
  bool operator==(const GeneralizationConfig&) const = default;
};

struct PriorShiftConfig {
  std::vector<std::string> classes;
  PriorVector train;
  PriorVector target;
  bool smoothing = false;
  bool operator==(const PriorShiftConfig&) const = default;
};

struct ProvenanceEntry {
  std::string step;
  std::string file;
  std::string sha256;
  std::string modified;  ///< file modification time, UTC ISO-8601
  bool operator==(const ProvenanceEntry&) const = default;
};

/// Every fitted artifact needed to run the full decision pipeline.
struct PolicyBundle {
  std::optional<TemperatureModel> temperature;
  std::optional<RejectionPolicy> rejection;
  std::optional<GeneralizationConfig> generalization;
  std::optional<PriorShiftConfig> priors;
  std::vector<ProvenanceEntry> provenance;
  bool operator==(const PolicyBundle&) const = default;
};

inline constexpr const char* kPolicyFormat = "confident-policy";
inline constexpr int kPolicyVersion = 1;

inline Json to_json(const PolicyBundle& b) {
  Json out{{"format", kPolicyFormat}, {"version", kPolicyVersion}};
  if (b.temperature) out["temperature"] = to_json(*b.temperature);
  if (b.rejection) out["rejection"] = to_json(*b.rejection);
  if (b.generalization) {
    out["generalization"] = Json{{"hierarchy", b.generalization->hierarchy},
                                 {"threshold", b.generalization->threshold},
                                 {"subset", b.generalization->subset}};
  }
  if (b.priors) {
    out["priors"] = Json{{"classes", b.priors->classes},
                         {"train", b.priors->train.values()},
                         {"new", b.priors->target.values()},
                         {"smoothing", b.priors->smoothing}};
  }
  Json prov = Json::array();
  for (const auto& p : b.provenance) {
    prov.push_back(Json{{"step", p.step}, {"file", p.file}, {"sha256", p.sha256}, {"modified", p.modified}});
  }
  out["provenance"] = prov;
  return out;
}

namespace detail {

template <class T>
T policy_field(const Json& j, const char* key, const char* section) {
  if (!j.contains(key)) throw ValidationError(std::string("policy ") + section + " is missing '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("policy ") + section + "." + key + ": " + e.what());
  }
}

}  // namespace detail

inline PolicyBundle policy_from_json(const Json& j) {
  using detail::policy_field;
  if (!j.is_object() || policy_field<std::string>(j, "format", "document") != kPolicyFormat) {
    throw ValidationError("not a policy document");
  }
  if (policy_field<int>(j, "version", "document") != kPolicyVersion) {
    throw ValidationError("unsupported policy version");
  }
  PolicyBundle b;
  if (j.contains("temperature")) {
    const auto& t = j["temperature"];
    TemperatureModel m;
    const auto mode = policy_field<std::string>(t, "mode", "temperature");
    if (mode == "global") m.mode = TemperatureMode::Global;
    else if (mode == "per_class") m.mode = TemperatureMode::PerClass;
    else throw ValidationError("policy temperature.mode must be 'global' or 'per_class'");
    const auto objective = policy_field<std::string>(t, "objective", "temperature");
    if (objective == "nll") m.objective = CalibrationObjective::NLL;
    else if (objective == "ece") m.objective = CalibrationObjective::ECE;
    else throw ValidationError("policy temperature.objective must be 'nll' or 'ece'");
    m.global_t = policy_field<double>(t, "global_t", "temperature");
    if (m.mode == TemperatureMode::PerClass) {
      m.per_class_t = policy_field<std::vector<double>>(t, "per_class_t", "temperature");
      m.validate(m.per_class_t.size());
    } else {
      m.validate(0);
    }
    b.temperature = m;
  }
  if (j.contains("rejection")) {
    const auto& r = j["rejection"];
    RejectionPolicy p;
    p.threshold = policy_field<double>(r, "threshold", "rejection");
    p.achieved_coverage = policy_field<double>(r, "achieved_coverage", "rejection");
    p.achieved_risk = policy_field<double>(r, "achieved_risk", "rejection");
    p.feasible = policy_field<bool>(r, "feasible", "rejection");
    const auto c = policy_field<Json>(r, "constraint", "rejection");
    const auto type = policy_field<std::string>(c, "type", "rejection.constraint");
    if (type == "coverage_at_least") p.constraint.kind = ConstraintKind::CoverageAtLeast;
    else if (type == "risk_at_most") p.constraint.kind = ConstraintKind::RiskAtMost;
    else throw ValidationError("policy rejection.constraint.type is unknown");
    p.constraint.value = policy_field<double>(c, "value", "rejection.constraint");
    b.rejection = p;
  }
  if (j.contains("generalization")) {
    const auto& g = j["generalization"];
    b.generalization = GeneralizationConfig{policy_field<std::string>(g, "hierarchy", "generalization"),
                                            policy_field<double>(g, "threshold", "generalization"),
                                            policy_field<bool>(g, "subset", "generalization")};
  }
  if (j.contains("priors")) {
    const auto& p = j["priors"];
    PriorShiftConfig cfg;
    cfg.classes = policy_field<std::vector<std::string>>(p, "classes", "priors");
    try {
      cfg.train = PriorVector(policy_field<std::vector<double>>(p, "train", "priors"));
      cfg.target = PriorVector(policy_field<std::vector<double>>(p, "new", "priors"));
    } catch (const DomainError& e) {
      throw ValidationError(std::string("policy priors: ") + e.what());
    }
    if (cfg.train.size() != cfg.classes.size() || cfg.target.size() != cfg.classes.size()) {
      throw ValidationError("policy priors do not match the class list");
    }
    cfg.smoothing = policy_field<bool>(p, "smoothing", "priors");
    b.priors = cfg;
  }
  if (j.contains("provenance")) {
    for (const auto& e : j["provenance"]) {
      b.provenance.push_back({policy_field<std::string>(e, "step", "provenance"),
                              policy_field<std::string>(e, "file", "provenance"),
                              policy_field<std::string>(e, "sha256", "provenance"),
                              policy_field<std::string>(e, "modified", "provenance")});
    }
  }
  return b;
}

inline PolicyBundle load_policy(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open policy '" + path.string() + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("policy '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return policy_from_json(j);
}

inline void save_policy(const std::filesystem::path& path, const PolicyBundle& bundle) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write policy '" + path.string() + "'");
  out << to_json(bundle).dump(2) << '\n';
}

}  // namespace confident
