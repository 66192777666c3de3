#include <gtest/gtest.h>

#include "confident/serialize.hpp"
#include "support.hpp"

using namespace confident;

namespace {

PolicyBundle full_bundle() {
  PolicyBundle b;
  TemperatureModel t;
  t.mode = TemperatureMode::PerClass;
  t.global_t = 1.7;
  t.per_class_t = {1.5, 0.4, 1.7};
  t.objective = CalibrationObjective::ECE;
  b.temperature = t;
  RejectionPolicy r;
  r.threshold = 0.6123456789012345;
  r.achieved_coverage = 0.75;
  r.achieved_risk = 1.0 / 3.0;
  r.constraint = {ConstraintKind::RiskAtMost, 0.05};
  b.rejection = r;
  b.generalization = GeneralizationConfig{"tree.json", 0.9, false};
  b.priors = PriorShiftConfig{{"a", "b", "c"}, PriorVector({0.2, 0.3, 0.5}), PriorVector({0.6, 0.3, 0.1}), true};
  b.provenance.push_back({"calibrate", "val.csv", std::string(64, 'a'), "2024-01-02T03:04:05Z"});
  return b;
}

}  // namespace

TEST(Policy, JsonRoundTripIsExact) {
  const auto b = full_bundle();
  const auto j = to_json(b);
  EXPECT_EQ(policy_from_json(Json::parse(j.dump())), b);
  EXPECT_EQ(j["format"], kPolicyFormat);
}

TEST(Policy, FileRoundTrip) {
  const auto dir = testing_support::scratch_dir("policy");
  save_policy(dir / "p.json", full_bundle());
  EXPECT_EQ(load_policy(dir / "p.json"), full_bundle());
  PolicyBundle empty;
  save_policy(dir / "e.json", empty);
  EXPECT_EQ(load_policy(dir / "e.json"), empty);
  std::filesystem::remove_all(dir);
}

TEST(Policy, RejectsMalformedDocuments) {
  EXPECT_THROW(policy_from_json(Json::parse(R"({"format":"other","version":1})")), ValidationError);
  EXPECT_THROW(policy_from_json(Json::parse(R"({"format":"confident-policy","version":2})")), ValidationError);
  EXPECT_THROW(policy_from_json(Json::parse(
                   R"({"format":"confident-policy","version":1,"temperature":{"mode":"global","objective":"nll","global_t":-1}})")),
               ValidationError);
  EXPECT_THROW(policy_from_json(Json::parse(
                   R"({"format":"confident-policy","version":1,"priors":{"classes":["a","b"],"train":[0.5,0.6],"new":[0.5,0.5],"smoothing":false}})")),
               ValidationError);
  EXPECT_THROW(policy_from_json(Json::parse(R"({"format":"confident-policy","version":1,"rejection":{"threshold":0.5}})")),
               ValidationError);
}

TEST(Reports, InfiniteStatisticIsAString) {
  ComparisonResult r;
  r.t_statistic = std::numeric_limits<double>::infinity();
  r.p_value = 0.0;
  EXPECT_EQ(to_json(r)["t_statistic"], "inf");
  r.t_statistic = -r.t_statistic;
  EXPECT_EQ(to_json(r)["t_statistic"], "-inf");
}

TEST(Reports, CalibrationReportCarriesBins) {
  PredictionSet p(ClassCatalog::indexed(2), ScoreKind::Probabilities, {0.9, 0.1}, std::vector<std::size_t>{1});
  const auto j = to_json(calibration_report(p, BinningConfig(2)));
  EXPECT_EQ(j["bins"].size(), 2u);
  EXPECT_NEAR(j["tce"].get<double>(), 0.9, 1e-12);
  EXPECT_EQ(j["bins"][1]["count"], 1);
}
