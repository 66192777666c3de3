#include <sstream>

#include <gtest/gtest.h>

#include "confident/io.hpp"
#include "support.hpp"

using namespace confident;
using testing_support::Gen;

namespace {

PredictionSet read_csv(const std::string& text) {
  std::istringstream in(text);
  return read_predictions(in, PredictionFormat::CSV, "mem.csv");
}

PredictionSet read_jsonl(const std::string& text) {
  std::istringstream in(text);
  return read_predictions(in, PredictionFormat::JSONL, "mem.jsonl");
}

std::size_t error_line(const std::function<void()>& f) {
  try {
    f();
  } catch (const IngestionError& e) {
    return e.line();
  }
  return 0;
}

}  // namespace

TEST(ReadCsv, ThreeRowLogits) {
  auto p = read_csv("id,label,logit_0,logit_1\na,0,1.5,-0.5\nb,1,0,2\nc,1,3,3\n");
  EXPECT_EQ(p.size(), 3u);
  EXPECT_EQ(p.num_classes(), 2u);
  EXPECT_EQ(p.kind(), ScoreKind::Logits);
  EXPECT_EQ(p.id(2), "c");
  EXPECT_EQ(p.label(1), 1u);
  EXPECT_DOUBLE_EQ(p.row(0)[0], 1.5);
}

TEST(ReadCsv, LabelsByClassName) {
  auto p = read_csv("label,prob_cat,prob_dog\ndog,0.25,0.75\ncat,1,0\n");
  EXPECT_EQ(p.catalog().names(), (std::vector<std::string>{"cat", "dog"}));
  EXPECT_EQ(p.label(0), 1u);
  EXPECT_EQ(p.label(1), 0u);
  EXPECT_FALSE(p.has_ids());
}

TEST(ReadCsv, ErrorsNameTheLine) {
  EXPECT_EQ(error_line([] { read_csv("id,logit_0,logit_1\na,1,2\nb,NaN,1\n"); }), 3u);
  EXPECT_EQ(error_line([] { read_csv("id,logit_0,logit_1\na,1,2,3\n"); }), 2u);
  EXPECT_EQ(error_line([] { read_csv("id,label,logit_0,logit_1\na,5,1,2\n"); }), 2u);
  EXPECT_EQ(error_line([] { read_csv("id,label,logit_0,logit_1\na,0,1,inf\n"); }), 2u);
  EXPECT_EQ(error_line([] { read_csv("id,prob_0,prob_1\na,0.5,0.6\n"); }), 2u);
  EXPECT_EQ(error_line([] { read_csv("id,logit_0,prob_1\n"); }), 1u);
  EXPECT_EQ(error_line([] { read_csv("id,logit_0,logit_1\n\n\nz,1,x\n"); }), 4u);
}

TEST(ReadCsv, ErrorMessageCitesSourceAndLine) {
  try {
    read_csv("id,logit_0,logit_1\nb,NaN,1\n");
    FAIL();
  } catch (const IngestionError& e) {
    EXPECT_NE(std::string(e.what()).find("mem.csv"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find('2'), std::string::npos);
  }
}

TEST(ReadJsonl, RowsWithoutLabels) {
  auto p = read_jsonl(R"({"kind":"probabilities"}
{"id":"x","scores":[0.1,0.9]}
{"id":"y","scores":[0.5,0.5]}
)");
  EXPECT_FALSE(p.has_labels());
  EXPECT_EQ(p.size(), 2u);
  EXPECT_EQ(p.id(1), "y");
  EXPECT_EQ(p.kind(), ScoreKind::Probabilities);
}

TEST(ReadJsonl, HeaderClassesAndNamedLabels) {
  auto p = read_jsonl(R"({"kind":"logits","classes":["a","b","c"]}
{"id":"1","label":"c","scores":[0,1,2]}
{"id":"2","label":0,"scores":[2,1,0]}
)");
  EXPECT_EQ(p.label(0), 2u);
  EXPECT_EQ(p.label(1), 0u);
  EXPECT_EQ(p.catalog().name(1), "b");
}

TEST(ReadJsonl, Errors) {
  EXPECT_EQ(error_line([] { read_jsonl("{\"kind\":\"logits\"}\n{\"scores\":[1,2]}\n{\"scores\":[1]}\n"); }), 3u);
  EXPECT_EQ(error_line([] { read_jsonl("{\"kind\":\"odd\"}\n"); }), 1u);
  EXPECT_EQ(error_line([] { read_jsonl("{\"kind\":\"logits\"}\n{\"scores\":[1,2],\"label\":0}\n{\"scores\":[1,2]}\n"); }),
            3u);
  EXPECT_EQ(error_line([] { read_jsonl("{\"kind\":\"logits\"}\n{nope\n"); }), 2u);
}

TEST(RoundTrip, RandomSetsAreFixedPoints) {
  Gen g(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t c = g.index(2, 8);
    const std::size_t n = g.index(1, 30);
    const bool probs = g.coin();
    std::vector<double> scores;
    for (std::size_t r = 0; r < n; ++r) {
      if (probs) {
        auto s = g.simplex(c, 0.0);
        scores.insert(scores.end(), s.begin(), s.end());
      } else {
        for (std::size_t j = 0; j < c; ++j) scores.push_back(g.normal(0.0, 10.0));
      }
    }
    std::optional<std::vector<std::size_t>> labels;
    if (g.coin()) {
      labels.emplace();
      for (std::size_t r = 0; r < n; ++r) labels->push_back(g.index(0, c - 1));
    }
    std::optional<std::vector<std::string>> ids;
    if (g.coin()) {
      ids.emplace();
      for (std::size_t r = 0; r < n; ++r) ids->push_back(r % 3 == 0 ? "id, \"quoted\" " + std::to_string(r) : "e" + std::to_string(r));
    }
    PredictionSet original(ClassCatalog::indexed(c), probs ? ScoreKind::Probabilities : ScoreKind::Logits, scores,
                           labels, ids);
    for (auto fmt : {PredictionFormat::CSV, PredictionFormat::JSONL}) {
      std::stringstream buf;
      write_predictions(buf, original, fmt);
      auto once = read_predictions(buf, fmt);
      std::stringstream buf2;
      write_predictions(buf2, once, fmt);
      auto twice = read_predictions(buf2, fmt);
      EXPECT_EQ(once, twice);
      EXPECT_EQ(once.scores(), original.scores());
      EXPECT_EQ(once.labels(), original.labels());
      if (ids) EXPECT_EQ(once.ids(), original.ids());
    }
  }
}

TEST(RunTable, ReadsPairedRuns) {
  std::istringstream in("m1,m2\n0.8,0.82\n0.81,0.83\n");
  auto t = read_run_table(in);
  EXPECT_EQ(t.num_runs(), 2u);
  EXPECT_EQ(t.column("m2"), (std::vector<double>{0.82, 0.83}));
  std::istringstream bad("m1,m2\n0.8\n");
  EXPECT_THROW(read_run_table(bad), IngestionError);
}

TEST(Priors, MatchByNameInCatalogOrder) {
  ClassCatalog cat({"a", "b", "c"});
  std::istringstream in("class,prior\nc,0.5\na,0.2\nb,0.3\n");
  EXPECT_EQ(read_priors(in, cat), (std::vector<double>{0.2, 0.3, 0.5}));
  std::istringstream missing("class,prior\na,1\n");
  EXPECT_THROW(read_priors(missing, cat), IngestionError);
  std::istringstream unknown("class,prior\nz,1\n");
  EXPECT_THROW(read_priors(unknown, cat), IngestionError);
}

TEST(Format, FromExtension) {
  EXPECT_EQ(format_from_path("a/b.jsonl"), PredictionFormat::JSONL);
  EXPECT_EQ(format_from_path("a/b.csv"), PredictionFormat::CSV);
}

TEST(LoadPredictions, SampleFile) {
  auto p = load_predictions(testing_support::data_path("val_logits.csv"));
  EXPECT_EQ(p.num_classes(), 3u);
  EXPECT_EQ(p.size(), 300u);
  EXPECT_TRUE(p.has_labels());
}
