#include <gtest/gtest.h>

#include "confident/adapt.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace confident;
using testing_support::Gen;

namespace {

std::vector<double> recover(const std::vector<double>& q, const std::vector<double>& pi) {
  return recover_likelihoods(build_shift_system(q, PriorVector(pi))).values;
}

}  // namespace

TEST(PriorVector, Validation) {
  EXPECT_THROW(PriorVector({0.5, 0.6}), DomainError);
  EXPECT_THROW(PriorVector({1.0, 0.0}), DomainError);
  EXPECT_THROW(PriorVector(std::vector<double>{}), DomainError);
  EXPECT_NO_THROW(PriorVector({0.25, 0.75}));
  EXPECT_NEAR(PriorVector::normalized({1, 3}).values()[1], 0.75, 1e-15);
}

TEST(ShiftSystem, ColumnsSumToZero) {
  auto s = build_shift_system(std::vector<double>{0.7, 0.2, 0.1}, PriorVector({0.2, 0.3, 0.5}));
  for (std::size_t j = 0; j < 3; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < 3; ++i) sum += s.at(i, j);
    EXPECT_NEAR(sum, 0.0, 1e-15);
  }
  EXPECT_THROW(build_shift_system(std::vector<double>{0.5, 0.5}, PriorVector({0.2, 0.3, 0.5})), DomainError);
  EXPECT_THROW(build_shift_system(std::vector<double>{0.5, 0.6}, PriorVector({0.5, 0.5})), DomainError);
}

TEST(Recover, WorkedValues) {
  auto v = recover({0.8, 0.2}, {0.5, 0.5});
  EXPECT_NEAR(v[0], 0.8, 1e-12);
  EXPECT_NEAR(v[1], 0.2, 1e-12);
  v = recover({0.5, 0.5}, {0.5, 0.5});
  EXPECT_NEAR(v[0], 0.5, 1e-12);
  v = recover({0.7, 0.2, 0.1}, {0.2, 0.3, 0.5});
  const double total = 3.5 + 2.0 / 3.0 + 0.2;
  EXPECT_NEAR(v[0], 3.5 / total, 1e-12);
  EXPECT_NEAR(v[1], (2.0 / 3.0) / total, 1e-12);
  EXPECT_NEAR(v[2], 0.2 / total, 1e-12);
  EXPECT_NEAR(v[0], 0.8015, 1e-4);
}

TEST(Recover, ZeroPosteriorIsDegenerate) {
  EXPECT_THROW(recover({1.0, 0.0}, {0.5, 0.5}), DegenerateSystemError);
}

TEST(Recover, MatchesClosedFormOnRandomPairs) {
  Gen g(41);
  for (int trial = 0; trial < 3000; ++trial) {
    const std::size_t n = g.index(2, 50);
    const auto q = g.simplex(n);
    const auto pi = g.simplex(n);
    auto s = build_shift_system(q, PriorVector(pi));
    const auto v = recover_likelihoods(s).values;
    EXPECT_LE(oracle::max_abs_diff(v, oracle::likelihood_ratio(q, pi)), 1e-9) << "n=" << n;
    EXPECT_LE(s.residual(v), 1e-9);
    EXPECT_LE(s.eigen_residual(v), 1e-9);
    for (double x : v) EXPECT_GT(x, 0.0);
  }
}

TEST(Recover, InverseIterationAgrees) {
  Gen g(43);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = g.index(2, 30);
    const auto q = g.simplex(n);
    const auto pi = g.simplex(n);
    auto s = build_shift_system(q, PriorVector(pi));
    const auto v = nullspace_by_inverse_iteration(s);
    EXPECT_LE(oracle::max_abs_diff(v, oracle::likelihood_ratio(q, pi)), 1e-9);
  }
}

TEST(Adapt, WorkedExample) {
  auto out = adapt_posterior(std::vector<double>{0.8, 0.2}, PriorVector({0.5, 0.5}), PriorVector({0.25, 0.75}));
  EXPECT_NEAR(out[0], 4.0 / 7.0, 1e-9);
  EXPECT_NEAR(out[1], 3.0 / 7.0, 1e-9);
}

TEST(Adapt, IdentityRoundTripAndScale) {
  Gen g(47);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = g.index(2, 50);
    const auto q = g.simplex(n);
    const PriorVector pi(g.simplex(n));
    const PriorVector pi_new(g.simplex(n));
    EXPECT_LE(oracle::max_abs_diff(adapt_posterior(q, pi, pi), q), 1e-9);
    const auto shifted = adapt_posterior(q, pi, pi_new);
    EXPECT_LE(oracle::max_abs_diff(shifted, oracle::bayes_shift(q, pi.values(), pi_new.values())), 1e-9);
    EXPECT_LE(oracle::max_abs_diff(adapt_posterior(shifted, pi_new, pi), q), 1e-9);
    double sum = 0.0;
    for (double x : shifted) sum += x;
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Adapt, SmoothingRescuesZeros) {
  const std::vector<double> q{1.0, 0.0, 0.0};
  const PriorVector pi = PriorVector::uniform(3);
  const PriorVector pi_new({0.2, 0.3, 0.5});
  EXPECT_THROW(adapt_posterior(q, pi, pi_new), DegenerateSystemError);
  auto out = adapt_posterior(q, pi, pi_new, AdaptOptions{true});
  for (double x : out) EXPECT_GT(x, 0.0);
  EXPECT_NEAR(out[0], 1.0, 1e-8);
}

TEST(Adapt, PredictionSetCarriesIdsAndLabels) {
  PredictionSet p(ClassCatalog({"a", "b"}), ScoreKind::Probabilities, {0.8, 0.2, 0.5, 0.5}, std::vector<std::size_t>{0, 1},
                  std::vector<std::string>{"x", "y"});
  auto out = adapt_prediction_set(p, PriorVector({0.5, 0.5}), PriorVector({0.25, 0.75}));
  EXPECT_NEAR(out.row(0)[0], 4.0 / 7.0, 1e-9);
  EXPECT_NEAR(out.row(1)[1], 0.75, 1e-9);
  EXPECT_EQ(out.ids(), p.ids());
  EXPECT_EQ(out.labels(), p.labels());

  auto same = adapt_prediction_set(p, PriorVector({0.5, 0.5}), PriorVector({0.5, 0.5}));
  EXPECT_LE(oracle::max_abs_diff(same.scores(), p.scores()), 1e-9);

  PredictionSet zero(ClassCatalog::indexed(2), ScoreKind::Probabilities, {1.0, 0.0}, std::nullopt,
                     std::vector<std::string>{"bad-row"});
  try {
    adapt_prediction_set(zero, PriorVector({0.5, 0.5}), PriorVector({0.25, 0.75}));
    FAIL();
  } catch (const DegenerateSystemError& e) {
    EXPECT_NE(std::string(e.what()).find("bad-row"), std::string::npos);
  }
  auto smoothed = adapt_prediction_set(zero, PriorVector({0.5, 0.5}), PriorVector({0.25, 0.75}), AdaptOptions{true});
  EXPECT_GT(smoothed.row(0)[1], 0.0);

  PredictionSet logits(ClassCatalog::indexed(2), ScoreKind::Logits, {1.0, 0.0});
  EXPECT_THROW(adapt_prediction_set(logits, PriorVector({0.5, 0.5}), PriorVector({0.5, 0.5})), DomainError);
}
