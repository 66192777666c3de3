#include "cli.hpp"

#include <sys/stat.h>

#include <array>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <sstream>

#include <openssl/evp.h>

#include <CLI11.hpp>

#include "confident/confident.hpp"

namespace confident::cli {
namespace {

namespace fs = std::filesystem;

class InfeasibleConstraint : public Error {
public:
  using Error::Error;
};

/// Flag combinations CLI11 cannot express; reported like a parse error.
class UsageError : public Error {
public:
  using Error::Error;
};

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open '" + path.string() + "'");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 initialisation failed");
  }
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest.data(), &len);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return hex.str();
}

std::string modified_utc(const fs::path& path) {
  struct stat st {};
  if (::stat(path.c_str(), &st) != 0) return "";
  std::tm tm{};
  gmtime_r(&st.st_mtime, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Records the fitting file of `step`, replacing an older entry for it.
void record_provenance(PolicyBundle& bundle, const std::string& step, const fs::path& file) {
  std::erase_if(bundle.provenance, [&](const ProvenanceEntry& e) { return e.step == step; });
  bundle.provenance.push_back({step, file.string(), sha256_file(file), modified_utc(file)});
}

PolicyBundle load_policy_or_empty(const std::string& path) {
  return path.empty() ? PolicyBundle{} : load_policy(path);
}

PredictionFormat resolve_format(const std::string& flag, const fs::path& path) {
  if (flag == "csv") return PredictionFormat::CSV;
  if (flag == "jsonl") return PredictionFormat::JSONL;
  return format_from_path(path);
}

void check_prior_classes(const PriorShiftConfig& cfg, const ClassCatalog& catalog) {
  if (cfg.classes != catalog.names()) {
    throw ValidationError("policy priors were fitted for a different class list");
  }
}

/// Probabilities after the policy's temperature and prior-shift stages.
PredictionSet pipeline_probabilities(const PredictionSet& preds, const PolicyBundle& bundle) {
  PredictionSet probs = preds;
  if (preds.kind() == ScoreKind::Logits) {
    probs = bundle.temperature ? apply_temperature(preds, *bundle.temperature) : to_probabilities(preds);
  }
  if (bundle.priors) {
    check_prior_classes(*bundle.priors, probs.catalog());
    probs = adapt_prediction_set(probs, bundle.priors->train, bundle.priors->target,
                                 AdaptOptions{bundle.priors->smoothing, kDefaultSmoothingEpsilon});
  }
  return probs;
}

fs::path resolve_hierarchy(const std::string& stored, const std::string& policy_path) {
  fs::path p(stored);
  if (p.is_absolute() || fs::exists(p) || policy_path.empty()) return p;
  fs::path beside = fs::path(policy_path).parent_path() / p;
  return fs::exists(beside) ? beside : p;
}

void write_line(std::ostream& out, const Json& j) { out << j.dump() << '\n'; }

Json example_generalization(const Hierarchy& h, const ClassCatalog& catalog, std::span<const double> probs,
                            double threshold) {
  const auto g = generalize(h, probs, threshold);
  Json j = to_json(g);
  j["argmax"] = catalog.name(argmax_class(probs));
  return j;
}

Json example_subset(const ClassCatalog& catalog, std::span<const double> probs, double threshold) {
  const auto s = subset_generalize(probs, threshold);
  Json members = Json::array();
  for (const auto& m : s.members) members.push_back(Json{{"class", catalog.name(m.class_index)}, {"confidence", m.confidence}});
  return Json{{"members", members}, {"total_confidence", s.total_confidence}};
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

struct CompareArgs {
  std::string file;
  std::string a;
  std::string b;
  double alpha = kDefaultAlpha;
  double practical_threshold = kDefaultPracticalThreshold;
};

int do_compare(const CompareArgs& args, std::ostream& out) {
  const auto table = load_run_table(args.file);
  const auto comparison = compare_models(table, args.a, args.b, args.alpha, args.practical_threshold);
  out << to_json(comparison).dump(2) << '\n';
  return kExitOk;
}

struct CalibrateArgs {
  std::string file;
  std::string format;
  std::size_t bins = kDefaultNumBins;
  std::string objective = "nll";
  bool per_class = false;
  std::size_t min_samples = kDefaultMinSamples;
  TemperatureGrid grid;
  std::string policy_in;
  std::string policy_out;
  std::string bins_csv;
  std::string raw_bins_csv;
};

void write_bins_csv(const fs::path& path, const std::vector<ReliabilityBin>& bins) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  out << "bin_lo,bin_hi,count,avg_confidence,precision\n";
  for (const auto& b : bins) {
    out << detail::format_double(b.lo) << ',' << detail::format_double(b.hi) << ',' << b.count << ','
        << detail::format_double(b.avg_confidence) << ',' << detail::format_double(b.precision) << '\n';
  }
}

int do_calibrate(const CalibrateArgs& args, std::ostream& out) {
  const auto preds = load_predictions(args.file, resolve_format(args.format, args.file));
  if (preds.kind() != ScoreKind::Logits) throw ValidationError("calibrate needs a logits file");
  if (!preds.has_labels()) throw ValidationError("calibrate needs labelled predictions");
  const BinningConfig cfg(args.bins);
  const auto objective = args.objective == "ece" ? CalibrationObjective::ECE : CalibrationObjective::NLL;
  const auto model = args.per_class ? fit_per_class_temperatures(preds, objective, args.grid, args.min_samples, cfg)
                                    : fit_temperature(preds, objective, args.grid, cfg);
  const auto before = calibration_report(preds, cfg);
  const auto after = calibration_report(apply_temperature(preds, model), cfg);

  Json report{{"temperature", to_json(model)}, {"before", to_json(before)}, {"after", to_json(after)}};
  out << report.dump(2) << '\n';
  if (!args.bins_csv.empty()) write_bins_csv(args.bins_csv, after.bins);
  if (!args.raw_bins_csv.empty()) write_bins_csv(args.raw_bins_csv, before.bins);
  if (!args.policy_out.empty()) {
    auto bundle = load_policy_or_empty(args.policy_in);
    bundle.temperature = model;
    record_provenance(bundle, "calibrate", args.file);
    save_policy(args.policy_out, bundle);
  }
  return kExitOk;
}

struct RejectArgs {
  std::string file;
  std::string format;
  std::optional<double> min_coverage;
  std::optional<double> max_risk;
  bool apply = false;
  std::string policy_in;
  std::string policy_out;
  std::string accepted;
  std::string rejected;
};

int do_reject(const RejectArgs& args, std::ostream& out, std::ostream& err) {
  const auto format = resolve_format(args.format, args.file);
  const auto preds = load_predictions(args.file, format);
  auto bundle = load_policy_or_empty(args.policy_in);
  const auto probs = pipeline_probabilities(preds, bundle);

  if (args.apply) {
    if (!bundle.rejection) throw ValidationError("policy has no rejection threshold");
    if (args.accepted.empty() || args.rejected.empty()) {
      throw UsageError("--apply needs --accepted and --rejected output files");
    }
    std::vector<std::size_t> keep;
    std::vector<std::size_t> drop;
    for (std::size_t r = 0; r < probs.size(); ++r) {
      const auto row = probs.row(r);
      (bundle.rejection->accepts(row[argmax_class(row)]) ? keep : drop).push_back(r);
    }
    auto subset = [&](const std::vector<std::size_t>& rows) {
      std::vector<double> scores;
      std::vector<std::size_t> labels;
      std::vector<std::string> ids;
      for (std::size_t r : rows) {
        auto row = preds.row(r);
        scores.insert(scores.end(), row.begin(), row.end());
        if (preds.has_labels()) labels.push_back(preds.label(r));
        ids.push_back(preds.id(r));
      }
      std::optional<std::vector<std::size_t>> opt_labels;
      if (preds.has_labels()) opt_labels = std::move(labels);
      return PredictionSet(preds.catalog(), preds.kind(), std::move(scores), std::move(opt_labels), std::move(ids),
                           RowNormalization::Keep);
    };
    save_predictions(args.accepted, subset(keep), format);
    save_predictions(args.rejected, subset(drop), format);
    out << Json{{"threshold", bundle.rejection->threshold}, {"accepted", keep.size()}, {"rejected", drop.size()}}.dump(2)
        << '\n';
    return kExitOk;
  }

  if (args.min_coverage.has_value() == args.max_risk.has_value()) {
    throw UsageError("give exactly one of --min-coverage and --max-risk");
  }
  const auto outcomes = scored_outcomes(probs);
  const auto policy = args.min_coverage ? fit_coverage_constrained(outcomes, *args.min_coverage)
                                        : fit_risk_constrained(outcomes, *args.max_risk);
  out << to_json(policy).dump(2) << '\n';
  if (!policy.feasible) {
    throw InfeasibleConstraint("risk constraint " + detail::format_double(*args.max_risk) +
                               " cannot be met without rejecting every example");
  }
  if (!args.policy_out.empty()) {
    bundle.rejection = policy;
    record_provenance(bundle, "reject", args.file);
    save_policy(args.policy_out, bundle);
  }
  (void)err;
  return kExitOk;
}

struct GeneralizeArgs {
  std::string file;
  std::string format;
  std::string hierarchy;
  double threshold = 0.9;
  bool subset = false;
  double tce_warn = 0.1;
  std::size_t bins = kDefaultNumBins;
  std::string policy_in;
  std::string policy_out;
};

int do_generalize(const GeneralizeArgs& args, std::ostream& out, std::ostream& err) {
  const auto preds = load_predictions(args.file, resolve_format(args.format, args.file));
  auto bundle = load_policy_or_empty(args.policy_in);
  PolicyBundle scaling_only;
  scaling_only.temperature = bundle.temperature;
  const auto probs = pipeline_probabilities(preds, scaling_only);
  if (args.threshold <= 0.0 || args.threshold > 1.0) throw UsageError("--threshold must lie in (0, 1]");

  if (probs.has_labels() && !probs.empty()) {
    const double tce = total_calibration_error(probs, BinningConfig(args.bins));
    if (tce > args.tce_warn) {
      err << "warning: total calibration error " << detail::format_double(tce) << " exceeds "
          << detail::format_double(args.tce_warn) << "; summed super-class confidences may be unreliable\n";
    }
  }

  std::optional<Hierarchy> h;
  if (!args.subset) {
    if (args.hierarchy.empty()) throw UsageError("--hierarchy is required unless --subset is given");
    h = load_hierarchy(args.hierarchy, probs.catalog());
  }
  for (std::size_t r = 0; r < probs.size(); ++r) {
    const auto row = probs.row(r);
    Json j{{"id", probs.id(r)}};
    const Json body = h ? example_generalization(*h, probs.catalog(), row, args.threshold)
                        : example_subset(probs.catalog(), row, args.threshold);
    for (const auto& [k, v] : body.items()) j[k] = v;
    write_line(out, j);
  }
  if (!args.policy_out.empty()) {
    bundle.generalization = GeneralizationConfig{args.hierarchy, args.threshold, args.subset};
    save_policy(args.policy_out, bundle);
  }
  return kExitOk;
}

struct AdaptArgs {
  std::string file;
  std::string format;
  std::string train_priors;
  std::string new_priors;
  std::string output;
  bool smooth = false;
  std::string policy_in;
  std::string policy_out;
};

int do_adapt(const AdaptArgs& args, std::ostream& out) {
  const auto format = resolve_format(args.format, args.file);
  const auto preds = load_predictions(args.file, format);
  auto bundle = load_policy_or_empty(args.policy_in);
  PolicyBundle scaling_only;
  scaling_only.temperature = bundle.temperature;
  const auto probs = pipeline_probabilities(preds, scaling_only);

  PriorShiftConfig cfg;
  cfg.classes = probs.catalog().names();
  try {
    cfg.train = PriorVector(load_priors(args.train_priors, probs.catalog()));
    cfg.target = PriorVector(load_priors(args.new_priors, probs.catalog()));
  } catch (const DomainError& e) {
    throw ValidationError(e.what());
  }
  cfg.smoothing = args.smooth;

  const auto adapted = adapt_prediction_set(probs, cfg.train, cfg.target, AdaptOptions{cfg.smoothing});
  if (args.output.empty()) {
    write_predictions(out, adapted, format);
  } else {
    save_predictions(args.output, adapted, format_from_path(args.output));
  }
  if (!args.policy_out.empty()) {
    bundle.priors = cfg;
    record_provenance(bundle, "adapt-priors", args.new_priors);
    save_policy(args.policy_out, bundle);
  }
  return kExitOk;
}

struct ApplyArgs {
  std::string file;
  std::string format;
  std::string policy;
  std::string hierarchy;
  std::optional<double> threshold;
  bool subset = false;
};

int do_apply(const ApplyArgs& args, std::ostream& out) {
  const auto preds = load_predictions(args.file, resolve_format(args.format, args.file));
  const auto bundle = load_policy(args.policy);
  const auto probs = pipeline_probabilities(preds, bundle);

  std::optional<GeneralizationConfig> gen = bundle.generalization;
  if (!args.hierarchy.empty() || args.subset) {
    gen = GeneralizationConfig{args.hierarchy, args.threshold.value_or(gen ? gen->threshold : 0.9), args.subset};
  } else if (gen && args.threshold) {
    gen->threshold = *args.threshold;
  }
  std::optional<Hierarchy> h;
  if (gen && !gen->subset) {
    if (gen->hierarchy.empty()) throw ValidationError("generalization needs a hierarchy file");
    h = load_hierarchy(resolve_hierarchy(gen->hierarchy, args.policy), probs.catalog());
  }

  const auto& catalog = probs.catalog();
  for (std::size_t r = 0; r < probs.size(); ++r) {
    const auto row = probs.row(r);
    const std::size_t top = argmax_class(row);
    Json j{{"id", probs.id(r)}, {"argmax", catalog.name(top)}, {"confidence", row[top]}};
    const bool accepted = !bundle.rejection || bundle.rejection->accepts(row[top]);
    j["decision"] = accepted ? "accept" : "reject";
    if (!accepted) {
      j["label"] = nullptr;
    } else if (h) {
      const auto g = generalize(*h, row, gen->threshold);
      j["label"] = g.chosen_step().name;
      j["generalization"] = to_json(g);
    } else if (gen && gen->subset) {
      const auto s = example_subset(catalog, row, gen->threshold);
      Json names = Json::array();
      for (const auto& m : s["members"]) names.push_back(m["class"]);
      j["label"] = names;
      j["subset"] = s;
    } else {
      j["label"] = catalog.name(top);
    }
    write_line(out, j);
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Calibrated, sufficiency-gated and prior-adapted classifier decisions", "confident"};
  app.require_subcommand(1);
  const std::vector<std::string> formats{"", "csv", "jsonl"};

  CompareArgs compare;
  auto* cmp = app.add_subcommand("compare", "One-sided paired t-test between two model columns of a run table");
  cmp->add_option("runs", compare.file, "Run-score CSV (header of model names)")->required()->check(CLI::ExistingFile);
  cmp->add_option("--a", compare.a, "Model column hypothesised to be better")->required();
  cmp->add_option("--b", compare.b, "Baseline model column")->required();
  cmp->add_option("--alpha", compare.alpha, "Significance level")->capture_default_str();
  cmp->add_option("--practical-threshold", compare.practical_threshold, "Minimum mean difference of practical interest")
      ->capture_default_str();

  CalibrateArgs calibrate;
  auto* cal = app.add_subcommand("calibrate", "Fit temperature scaling and report reliability bins, ECE and TCE");
  cal->add_option("predictions", calibrate.file, "Labelled logits file")->required()->check(CLI::ExistingFile);
  cal->add_option("--format", calibrate.format, "csv or jsonl (default: by extension)")->check(CLI::IsMember(formats));
  cal->add_option("--bins", calibrate.bins, "Number of equal-width bins")->capture_default_str()->check(CLI::PositiveNumber);
  cal->add_option("--objective", calibrate.objective, "nll or ece")->capture_default_str()->check(CLI::IsMember({"nll", "ece"}));
  cal->add_flag("--per-class", calibrate.per_class, "Fit one temperature per predicted class");
  cal->add_option("--min-samples", calibrate.min_samples, "Per-class fallback threshold")->capture_default_str();
  cal->add_option("--grid-lo", calibrate.grid.lo, "Smallest temperature")->capture_default_str();
  cal->add_option("--grid-hi", calibrate.grid.hi, "Largest temperature")->capture_default_str();
  cal->add_option("--grid-points", calibrate.grid.points, "Log-spaced grid size")->capture_default_str();
  cal->add_option("--policy", calibrate.policy_in, "Existing policy to extend")->check(CLI::ExistingFile);
  cal->add_option("--out", calibrate.policy_out, "Write the policy file here");
  cal->add_option("--bins-csv", calibrate.bins_csv, "Write calibrated reliability bins as CSV");
  cal->add_option("--raw-bins-csv", calibrate.raw_bins_csv, "Write uncalibrated reliability bins as CSV");

  RejectArgs reject;
  auto* rej = app.add_subcommand("reject", "Fit or apply a reject-option confidence threshold");
  rej->add_option("predictions", reject.file, "Predictions file")->required()->check(CLI::ExistingFile);
  rej->add_option("--format", reject.format, "csv or jsonl (default: by extension)")->check(CLI::IsMember(formats));
  auto* min_cov = rej->add_option("--min-coverage", reject.min_coverage, "Minimise risk with coverage >= c");
  auto* max_risk = rej->add_option("--max-risk", reject.max_risk, "Maximise coverage with risk <= r");
  min_cov->excludes(max_risk);
  auto* apply_flag = rej->add_flag("--apply", reject.apply, "Partition the file with the policy's threshold");
  apply_flag->excludes(min_cov)->excludes(max_risk);
  rej->add_option("--policy", reject.policy_in, "Existing policy (temperature/priors applied first)")->check(CLI::ExistingFile);
  rej->add_option("--out", reject.policy_out, "Write the policy file here");
  rej->add_option("--accepted", reject.accepted, "Accepted rows output (with --apply)");
  rej->add_option("--rejected", reject.rejected, "Rejected rows output (with --apply)");

  GeneralizeArgs general;
  auto* gen = app.add_subcommand("generalize", "Generalize predictions up a hierarchy or into class subsets");
  gen->add_option("predictions", general.file, "Predictions file")->required()->check(CLI::ExistingFile);
  gen->add_option("--format", general.format, "csv or jsonl (default: by extension)")->check(CLI::IsMember(formats));
  gen->add_option("--hierarchy", general.hierarchy, "Hierarchy JSON")->check(CLI::ExistingFile);
  gen->add_option("--threshold", general.threshold, "Required confidence")->capture_default_str();
  gen->add_flag("--subset", general.subset, "Hierarchy-free subset generalization");
  gen->add_option("--tce-warn", general.tce_warn, "Warn when total calibration error exceeds this")->capture_default_str();
  gen->add_option("--bins", general.bins, "Bins for the TCE check")->capture_default_str()->check(CLI::PositiveNumber);
  gen->add_option("--policy", general.policy_in, "Existing policy (temperature applied first)")->check(CLI::ExistingFile);
  gen->add_option("--out", general.policy_out, "Write the policy file here");

  AdaptArgs adapt;
  auto* ada = app.add_subcommand("adapt-priors", "Re-estimate posteriors under new class priors");
  ada->add_option("predictions", adapt.file, "Predictions file")->required()->check(CLI::ExistingFile);
  ada->add_option("--format", adapt.format, "csv or jsonl (default: by extension)")->check(CLI::IsMember(formats));
  ada->add_option("--train-priors", adapt.train_priors, "CSV class,prior")->required()->check(CLI::ExistingFile);
  ada->add_option("--new-priors", adapt.new_priors, "CSV class,prior")->required()->check(CLI::ExistingFile);
  ada->add_option("--output", adapt.output, "Adapted predictions file (default: standard output)");
  ada->add_flag("--smooth", adapt.smooth, "Smooth posteriors containing zeros instead of failing");
  ada->add_option("--policy", adapt.policy_in, "Existing policy (temperature applied first)")->check(CLI::ExistingFile);
  ada->add_option("--out", adapt.policy_out, "Write the policy file here");

  ApplyArgs apply;
  auto* app_cmd = app.add_subcommand("apply", "Run temperature -> priors -> rejection -> generalization");
  app_cmd->add_option("predictions", apply.file, "Predictions file")->required()->check(CLI::ExistingFile);
  app_cmd->add_option("--format", apply.format, "csv or jsonl (default: by extension)")->check(CLI::IsMember(formats));
  app_cmd->add_option("--policy", apply.policy, "Policy file")->required()->check(CLI::ExistingFile);
  app_cmd->add_option("--hierarchy", apply.hierarchy, "Hierarchy JSON (overrides the policy)")->check(CLI::ExistingFile);
  app_cmd->add_option("--threshold", apply.threshold, "Generalization threshold (overrides the policy)");
  app_cmd->add_flag("--subset", apply.subset, "Subset generalization instead of a hierarchy");

  std::vector<std::string> argv_storage{"confident"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_storage) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (app.got_subcommand(cmp)) return do_compare(compare, out);
    if (app.got_subcommand(cal)) return do_calibrate(calibrate, out);
    if (app.got_subcommand(rej)) return do_reject(reject, out, err);
    if (app.got_subcommand(gen)) return do_generalize(general, out, err);
    if (app.got_subcommand(ada)) return do_adapt(adapt, out);
    if (app.got_subcommand(app_cmd)) return do_apply(apply, out);
  } catch (const UsageError& e) {
    err << "usage: " << e.what() << '\n';
    return kExitUsage;
  } catch (const InfeasibleConstraint& e) {
    err << "infeasible: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const DegenerateSystemError& e) {
    err << "degenerate: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  return kExitUsage;
}

}  // namespace confident::cli
