#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "ttpmap/error.hpp"
#include "ttpmap/evaluate.hpp"

using namespace ttpmap;

namespace {

void expect_near(const MetricsReport& a, const MetricsReport& b, double tol) {
  EXPECT_NEAR(a.micro_precision, b.micro_precision, tol);
  EXPECT_NEAR(a.micro_recall, b.micro_recall, tol);
  EXPECT_NEAR(a.micro_f05, b.micro_f05, tol);
  EXPECT_NEAR(a.macro_precision, b.macro_precision, tol);
  EXPECT_NEAR(a.macro_recall, b.macro_recall, tol);
  EXPECT_NEAR(a.macro_f05, b.macro_f05, tol);
}

std::vector<LabelId> label_list(std::size_t n) {
  std::vector<LabelId> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("L" + std::to_string(100 + i));
  return out;
}

LabelSet random_set(std::mt19937& rng, const std::vector<LabelId>& labels, double p) {
  std::bernoulli_distribution pick(p);
  LabelSet s;
  for (const auto& l : labels) {
    if (pick(rng)) s.insert(l);
  }
  return s;
}

}  // namespace

TEST(FBeta, Values) {
  EXPECT_EQ(f_beta(1.0, 1.0), 1.0);
  EXPECT_NEAR(f_beta(2.0 / 3.0, 0.5), 0.625, 1e-12);
  EXPECT_EQ(f_beta(0.0, 0.0), 0.0);
  EXPECT_NEAR(f_beta(0.5, 0.5, 1.0), 0.5, 1e-15);
}

TEST(FBeta, MonotoneInEachArgument) {
  for (double p = 0.05; p <= 1.0; p += 0.05) {
    for (double r = 0.05; r <= 0.95; r += 0.05) {
      EXPECT_LE(f_beta(p, r), f_beta(p, r + 0.05) + 1e-15);
      EXPECT_LE(f_beta(r, p), f_beta(r + 0.05, p) + 1e-15);
    }
  }
}

TEST(Score, HandExample) {
  // A: TP=1, FP=1, FN=0; B: TP=0, FP=0, FN=1.
  const std::vector<LabelSet> gold{{"A"}, {"B"}};
  const std::vector<LabelSet> pred{{"A"}, {"A"}};
  const std::vector<LabelId> labels{"A", "B"};
  const auto m = score(gold, pred, labels);
  EXPECT_NEAR(m.micro_f05, 0.5, 1e-12);
  EXPECT_NEAR(m.macro_f05, f_beta(0.5, 1.0) / 2, 1e-12);
  EXPECT_NEAR(m.macro_f05, 0.2778, 1e-4);
}

TEST(Score, PerfectAndEmpty) {
  const std::vector<LabelSet> gold{{"A"}, {"A", "B"}};
  const std::vector<LabelId> labels{"A", "B"};
  const auto perfect = score(gold, gold, labels);
  expect_near(perfect, {1, 1, 1, 1, 1, 1}, 0.0);
  const std::vector<LabelSet> empty(2);
  expect_near(score(gold, empty, labels), {}, 0.0);
}

TEST(Score, PredictedLabelOutsideListIsError) {
  const std::vector<LabelSet> gold{{"A"}};
  const std::vector<LabelSet> pred{{"Z"}};
  const std::vector<LabelId> labels{"A"};
  EXPECT_THROW(score(gold, pred, labels), ConfigError);
}

TEST(Score, MatchesNaiveOracle) {
  std::mt19937 rng(1);
  const auto labels = label_list(20);
  for (int i = 0; i < 300; ++i) {
    const std::size_t docs = 1 + rng() % 15;
    std::vector<LabelSet> gold, pred;
    for (std::size_t d = 0; d < docs; ++d) {
      gold.push_back(random_set(rng, labels, 0.2));
      pred.push_back(random_set(rng, labels, 0.2));
    }
    expect_near(score(gold, pred, labels), oracle::score(gold, pred, labels), 1e-12);
  }
}

TEST(Score, MicroInvariantUnderRelabeling) {
  std::mt19937 rng(2);
  const auto labels = label_list(10);
  auto shuffled = labels;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  auto relabel = [&](const LabelSet& s) {
    LabelSet out;
    for (const auto& l : s) out.insert(shuffled[std::find(labels.begin(), labels.end(), l) - labels.begin()]);
    return out;
  };
  for (int i = 0; i < 100; ++i) {
    std::vector<LabelSet> gold, pred, gold2, pred2;
    for (int d = 0; d < 8; ++d) {
      gold.push_back(random_set(rng, labels, 0.3));
      pred.push_back(random_set(rng, labels, 0.3));
      gold2.push_back(relabel(gold.back()));
      pred2.push_back(relabel(pred.back()));
    }
    const auto a = score(gold, pred, labels);
    const auto b = score(gold2, pred2, labels);
    EXPECT_EQ(a.micro_precision, b.micro_precision);
    EXPECT_EQ(a.micro_recall, b.micro_recall);
    EXPECT_EQ(a.micro_f05, b.micro_f05);
  }
}

TEST(Score, MacroBetweenPerLabelExtremes) {
  std::mt19937 rng(3);
  const auto labels = label_list(6);
  for (int i = 0; i < 100; ++i) {
    std::vector<LabelSet> gold, pred;
    for (int d = 0; d < 10; ++d) {
      gold.push_back(random_set(rng, labels, 0.4));
      pred.push_back(random_set(rng, labels, 0.4));
    }
    const auto counts = count_labels(gold, pred, labels);
    double lo = 1.0, hi = 0.0;
    for (const auto& c : counts.counts) {
      const double p = c.tp + c.fp == 0 ? 0.0 : double(c.tp) / (c.tp + c.fp);
      const double r = c.tp + c.fn == 0 ? 0.0 : double(c.tp) / (c.tp + c.fn);
      lo = std::min(lo, f_beta(p, r));
      hi = std::max(hi, f_beta(p, r));
    }
    const auto m = report_from_counts(counts);
    EXPECT_GE(m.macro_f05, lo - 1e-12);
    EXPECT_LE(m.macro_f05, hi + 1e-12);
  }
}

TEST(MajorityBaseline, MostFrequentAndTies) {
  std::vector<LabelSet> train;
  for (int i = 0; i < 5; ++i) train.push_back({"TA0001"});
  for (int i = 0; i < 3; ++i) train.push_back({"TA0002"});
  EXPECT_EQ(majority_baseline(train, 4), std::vector<LabelSet>(4, LabelSet{"TA0001"}));
  for (int i = 0; i < 2; ++i) train.push_back({"TA0002"});
  EXPECT_EQ(majority_baseline(train, 1), std::vector<LabelSet>(1, LabelSet{"TA0001"}));
  train.push_back({"TA0000"});
  for (int i = 0; i < 4; ++i) train.push_back({"TA0000"});
  EXPECT_EQ(majority_baseline(train, 1), std::vector<LabelSet>(1, LabelSet{"TA0000"}));
}

TEST(AssignFolds, BalancedAndDeterministic) {
  const auto f = assign_folds(5, 5, 42);
  std::vector<std::size_t> sorted = f;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(sorted, (std::vector<std::size_t>{0, 1, 2, 3, 4}));  // folds of size 1
  EXPECT_EQ(assign_folds(103, 5, 7), assign_folds(103, 5, 7));
  const auto g = assign_folds(103, 5, 7);
  for (std::size_t k = 0; k < 5; ++k) {
    const auto n = std::count(g.begin(), g.end(), k);
    EXPECT_TRUE(n == 20 || n == 21);
  }
  EXPECT_THROW(assign_folds(3, 0, 1), ConfigError);
}

TEST(Report, CsvShape) {
  ComparisonRow row;
  row.strategy = "hanging-node";
  row.tactics = {0.5, 0.25, 0.125, 1, 0, 0};
  std::ostringstream out;
  write_csv(out, std::vector<ComparisonRow>{row});
  std::istringstream in(out.str());
  std::string header, l1, l2;
  std::getline(in, header);
  std::getline(in, l1);
  std::getline(in, l2);
  EXPECT_EQ(header, "strategy,scope,micro_p,micro_r,micro_f05,macro_p,macro_r,macro_f05,micro_f05_sd,macro_f05_sd");
  EXPECT_EQ(l1, "hanging-node,tactics,0.500000,0.250000,0.125000,1.000000,0.000000,0.000000,0.000000,0.000000");
  EXPECT_EQ(l2.rfind("hanging-node,techniques,", 0), 0u);
  std::ostringstream table;
  write_table(table, std::vector<ComparisonRow>{row});
  EXPECT_NE(table.str().find("50.00%"), std::string::npos);
}

TEST(Report, JsonRoundTrip) {
  const MetricsReport m{0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  EXPECT_EQ(MetricsReport::from_json(m.to_json()), m);
}
