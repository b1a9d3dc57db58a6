#pragma once

#include <span>
#include <string>
#include <vector>

#include "ttpmap/attack_kb.hpp"
#include "ttpmap/bundle.hpp"
#include "ttpmap/evaluate.hpp"
#include "ttpmap/ingest.hpp"
#include "ttpmap/postprocess.hpp"

namespace ttpmap {

struct CrossValidationResult {
  MetricsReport tactics;     // pooled over folds
  MetricsReport techniques;  // pooled over folds
  std::vector<MetricsReport> fold_tactics;
  std::vector<MetricsReport> fold_techniques;
  /// Folds used as test sets, per document.
  std::vector<std::size_t> fold_of;

  ComparisonRow to_row(std::string strategy) const;
};

/// Labels scored during evaluation: the trainable labels with at least one
/// positive document.
TrainableLabels scored_labels(std::span<const LabeledDocument> docs, const Taxonomy& taxonomy,
                              std::size_t min_reports);

/// k-fold cross-validation (k = config.folds, seeded uniform fold assignment).
/// Each fold fits the vectorizer and models on the other folds, predicts the
/// held-out fold and applies `strategy`; counts are pooled across folds. Throws
/// ConfigError when there are fewer documents than folds.
CrossValidationResult cross_validate(std::span<const LabeledDocument> docs, const Taxonomy& taxonomy,
                                     const AssociationStats& stats, const TrainConfig& config,
                                     Strategy strategy);

/// Cross-validated majority-label baseline, tactics and techniques scored
/// separately.
CrossValidationResult cross_validate_baseline(std::span<const LabeledDocument> docs,
                                              const Taxonomy& taxonomy, const TrainConfig& config);

/// The independent (no post-processing) row followed by one row per requested
/// strategy; `none` in `strategies` is folded into the first row. Folds are
/// trained once and shared by all strategies except tactics-as-features, which
/// retrains.
std::vector<ComparisonRow> compare_strategies(std::span<const LabeledDocument> docs,
                                              const Taxonomy& taxonomy, const AssociationStats& stats,
                                              const TrainConfig& config,
                                              std::span<const Strategy> strategies);

struct AutoSelection {
  Strategy strategy = Strategy::HangingNode;
  CrossValidationResult cv;
  bool fallback = false;
  std::string warning;
};

/// Picks the candidate with the best cross-validated technique macro F0.5. An
/// exact tie goes to hanging-node. Stores too small to cross-validate fall back
/// to hanging-node with a warning.
AutoSelection auto_select(std::span<const LabeledDocument> docs, const Taxonomy& taxonomy,
                          const AssociationStats& stats, const TrainConfig& config,
                          std::span<const Strategy> candidates = std::span<const Strategy>{});

/// Fits the vectorizer and every trainable label on the whole store, selects the
/// post-processing (auto or fixed by config) and records cross-validated scores.
/// Throws Error for an empty store, for a store where no technique reaches
/// `min_reports`, and when every label is degenerate.
ModelBundle train_bundle(std::span<const LabeledDocument> docs, const Taxonomy& taxonomy,
                         const AssociationStats& stats, const TrainConfig& config);

}  // namespace ttpmap
