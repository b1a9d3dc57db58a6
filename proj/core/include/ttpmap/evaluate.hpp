#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "ttpmap/attack_kb.hpp"

namespace ttpmap {

struct LabelCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  bool operator==(const LabelCounts&) const = default;
};

/// Per-label TP/FP/FN in label-list order.
struct MetricCounts {
  std::vector<LabelId> labels;
  std::vector<LabelCounts> counts;

  MetricCounts& operator+=(const MetricCounts& other);
};

struct MetricsReport {
  double micro_precision = 0.0;
  double micro_recall = 0.0;
  double micro_f05 = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f05 = 0.0;

  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
  bool operator==(const MetricsReport&) const = default;
};

/// (1 + beta^2) * p * r / (beta^2 * p + r), or 0 when the denominator is 0.
double f_beta(double precision, double recall, double beta = 0.5);

/// Counts over aligned per-document gold and predicted label sets. Gold labels
/// outside `labels` are ignored; predicted labels outside it raise ConfigError.
MetricCounts count_labels(std::span<const LabelSet> gold, std::span<const LabelSet> pred,
                          std::span<const LabelId> labels);

/// Micro metrics from summed counts; macro metrics as unweighted means of the
/// per-label precision, recall and F0.5, with 0/0 taken as 0.
MetricsReport report_from_counts(const MetricCounts& counts);

MetricsReport score(std::span<const LabelSet> gold, std::span<const LabelSet> pred,
                    std::span<const LabelId> labels);

/// Predicts the single most frequent training label (ties: smallest id) for
/// each of `test_size` documents. Empty sets when no training label exists.
std::vector<LabelSet> majority_baseline(std::span<const LabelSet> train, std::size_t test_size);

/// Uniform random fold index in [0, k) for each of `n` documents, with every
/// fold receiving floor(n/k) or ceil(n/k) documents.
std::vector<std::size_t> assign_folds(std::size_t n, std::size_t k, std::uint64_t seed);

/// One row of a strategy comparison.
struct ComparisonRow {
  std::string strategy;
  MetricsReport tactics;
  MetricsReport techniques;
  double tactics_micro_f05_sd = 0.0;
  double tactics_macro_f05_sd = 0.0;
  double techniques_micro_f05_sd = 0.0;
  double techniques_macro_f05_sd = 0.0;
};

/// CSV with header
/// `strategy,scope,micro_p,micro_r,micro_f05,macro_p,macro_r,macro_f05,micro_f05_sd,macro_f05_sd`,
/// two lines (tactics, techniques) per row.
void write_csv(std::ostream& out, std::span<const ComparisonRow> rows);

/// Human-readable aligned table with percentages.
void write_table(std::ostream& out, std::span<const ComparisonRow> rows);

}  // namespace ttpmap
