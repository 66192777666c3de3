#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "confident/core.hpp"
#include "support.hpp"

using namespace confident;
using testing_support::Gen;

TEST(ClassCatalog, RejectsTooFewDuplicateOrEmptyNames) {
  EXPECT_THROW(ClassCatalog({"only"}), DomainError);
  EXPECT_THROW(ClassCatalog({"a", "a"}), DomainError);
  EXPECT_THROW(ClassCatalog({"a", ""}), DomainError);
  ClassCatalog c({"cat", "dog"});
  EXPECT_EQ(c.size(), 2u);
  EXPECT_EQ(c.find("dog"), 1u);
  EXPECT_FALSE(c.find("cow").has_value());
}

TEST(PredictionSet, ValidatesRows) {
  auto cat = ClassCatalog::indexed(2);
  EXPECT_THROW(PredictionSet(cat, ScoreKind::Logits, {1.0, 2.0, 3.0}), DomainError);
  EXPECT_THROW(PredictionSet(cat, ScoreKind::Logits, {1.0, NAN}), DomainError);
  EXPECT_THROW(PredictionSet(cat, ScoreKind::Logits, {1.0, INFINITY}), DomainError);
  EXPECT_THROW(PredictionSet(cat, ScoreKind::Probabilities, {0.7, 0.7}), DomainError);
  EXPECT_THROW(PredictionSet(cat, ScoreKind::Probabilities, {1.1, -0.1}), DomainError);
  EXPECT_THROW(PredictionSet(cat, ScoreKind::Logits, {1.0, 2.0}, std::vector<std::size_t>{2}), DomainError);
  EXPECT_THROW(PredictionSet(cat, ScoreKind::Logits, {1.0, 2.0}, std::vector<std::size_t>{0, 1}), DomainError);
}

TEST(PredictionSet, RenormalizesSmallDrift) {
  PredictionSet p(ClassCatalog::indexed(2), ScoreKind::Probabilities, {0.6000004, 0.4});
  EXPECT_NEAR(p.row(0)[0] + p.row(0)[1], 1.0, 1e-15);
}

TEST(PredictionSet, IdFallsBackToRowPosition) {
  PredictionSet p(ClassCatalog::indexed(2), ScoreKind::Logits, {0, 1, 2, 3});
  EXPECT_EQ(p.id(1), "1");
}

TEST(Softmax, WorkedValues) {
  const std::vector<double> zero{0.0, 0.0};
  auto p = softmax(zero);
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.5);

  const std::vector<double> ln2{std::numbers::ln2, 0.0};
  p = softmax(ln2);
  EXPECT_NEAR(p[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(p[1], 1.0 / 3.0, 1e-15);

  const std::vector<double> wide{5.0, 1.0};
  p = softmax(wide, 1e6);
  EXPECT_NEAR(p[0], 0.5, 1e-5);
  EXPECT_NEAR(p[1], 0.5, 1e-5);
}

TEST(Softmax, RejectsBadTemperatureAndInput) {
  const std::vector<double> row{1.0, 2.0};
  EXPECT_THROW(softmax(row, 0.0), DomainError);
  EXPECT_THROW(softmax(row, -1.0), DomainError);
  EXPECT_THROW(softmax(row, INFINITY), DomainError);
  EXPECT_THROW(softmax(std::vector<double>{}), DomainError);
}

TEST(Softmax, HugeLogitsDoNotOverflow) {
  const std::vector<double> row{1000.0, 999.0, -1000.0};
  auto p = softmax(row);
  for (double v : p) EXPECT_TRUE(std::isfinite(v));
  EXPECT_NEAR(p[0] / p[1], std::exp(1.0), 1e-12);
}

TEST(Softmax, PropertiesOnRandomRows) {
  Gen g(11);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t c = g.index(2, 20);
    std::vector<double> row(c);
    for (double& v : row) v = g.normal(0.0, 5.0);
    const double t = std::exp(g.uniform(std::log(0.05), std::log(20.0)));
    const auto p = softmax(row, t);
    double sum = 0.0;
    for (double v : p) {
      EXPECT_GE(v, 0.0);
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
    EXPECT_EQ(argmax_class(p), argmax_class(row));

    std::vector<double> shifted = row;
    const double k = g.uniform(-50.0, 50.0);
    for (double& v : shifted) v += k;
    const auto q = softmax(shifted, t);
    for (std::size_t i = 0; i < c; ++i) EXPECT_NEAR(p[i], q[i], 1e-12);
  }
}

TEST(Softmax, LogSoftmaxAgreesWithSoftmax) {
  const std::vector<double> row{0.3, -1.2, 2.5, 0.0};
  const auto p = softmax(row, 1.7);
  for (std::size_t i = 0; i < row.size(); ++i) EXPECT_NEAR(log_softmax_at(row, i, 1.7), std::log(p[i]), 1e-13);
}

TEST(Argmax, TiesGoToLowestIndex) {
  EXPECT_EQ(argmax_class(std::vector<double>{0.2, 0.5, 0.3}), 1u);
  EXPECT_EQ(argmax_class(std::vector<double>{0.5, 0.5}), 0u);
  EXPECT_EQ(argmax_class(std::vector<double>{0.1, 0.1, 0.8}), 2u);
  EXPECT_THROW(argmax_class(std::vector<double>{}), DomainError);
}

TEST(ToProbabilities, MatchesRowSoftmaxBitExactly) {
  Gen g(5);
  std::vector<double> logits(30);
  for (double& v : logits) v = g.normal(0.0, 3.0);
  PredictionSet p(ClassCatalog::indexed(3), ScoreKind::Logits, logits);
  auto probs = to_probabilities(p);
  ASSERT_EQ(probs.kind(), ScoreKind::Probabilities);
  for (std::size_t r = 0; r < p.size(); ++r) {
    const auto expect = softmax(p.row(r));
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(probs.row(r)[j], expect[j]);
  }
}

TEST(RunScoreTable, ColumnsAndValidation) {
  RunScoreTable t({"a", "b"}, {{1, 2}, {3, 4}});
  EXPECT_EQ(t.column("b"), (std::vector<double>{2, 4}));
  EXPECT_THROW(t.column("c"), DomainError);
  EXPECT_THROW(RunScoreTable({"a", "a"}, {}), DomainError);
  EXPECT_THROW(RunScoreTable({"a", "b"}, {{1}}), DomainError);
}
