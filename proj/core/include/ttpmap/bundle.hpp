#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ttpmap/attack_kb.hpp"
#include "ttpmap/classifier.hpp"
#include "ttpmap/evaluate.hpp"
#include "ttpmap/features.hpp"
#include "ttpmap/ingest.hpp"
#include "ttpmap/postprocess.hpp"

namespace ttpmap {

/// Everything that controls training and evaluation. Loadable from a JSON
/// config file; absent keys keep their defaults.
struct TrainConfig {
  VectorizerOptions vectorizer;
  double tactic_c = 1.0;
  double technique_c = 1.0;
  double svm_tolerance = 1e-6;
  std::size_t svm_max_epochs = 1000;
  ResamplingPolicy resampling;
  std::size_t min_reports = 5;
  std::size_t folds = 5;
  std::uint64_t seed = 42;
  /// Strategy parameters. The strategy itself is used only when auto_select is off.
  PostprocessConfig postprocess;
  bool auto_select = true;
  /// Stopword list; empty means the built-in English list.
  std::vector<std::string> stopwords;

  SvmOptions tactic_svm() const { return {tactic_c, svm_tolerance, svm_max_epochs, seed}; }
  SvmOptions technique_svm() const { return {technique_c, svm_tolerance, svm_max_epochs, seed}; }

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Fitted vectorizer plus one linear model per non-degenerate trainable label.
struct TrainedModels {
  VectorizerModel vectorizer;
  /// Trainable tactics, in the order used for tactic features.
  std::vector<LabelId> tactic_labels;
  std::vector<LinearModel> tactic_models;
  std::vector<LinearModel> technique_models;
  /// Labels skipped because their training targets had a single class.
  std::vector<LabelId> skipped;
  /// Technique models expect tactic confidences appended to the text features.
  bool tactic_features = false;
};

/// Fits the vectorizer on `tokens` and trains every label independently. With
/// `tactic_features`, technique models see the gold tactic labels (one-hot) as
/// extra features. Throws Error when every label is degenerate.
TrainedModels train_models(std::span<const LabeledDocument> docs,
                           std::span<const std::vector<std::string>> tokens,
                           const TrainableLabels& labels, const TrainConfig& config,
                           bool tactic_features);

/// Raw decision scores for already-cleaned tokens.
PredictionSet predict_tokens(const TrainedModels& models, std::span<const std::string> tokens,
                             std::string doc_id = {});

/// Trained artefact: models, the taxonomy and association statistics they were
/// trained against, and the chosen post-processing.
struct ModelBundle {
  static constexpr int kFormatVersion = 1;

  TrainedModels models;
  Taxonomy taxonomy;
  AssociationStats stats;
  std::vector<std::string> stopwords;
  PostprocessConfig postprocess;
  BoostMatrix boosts;
  std::string trained_at;
  std::size_t trained_on = 0;
  MetricsReport cv_tactics;
  MetricsReport cv_techniques;
  std::vector<std::string> warnings;

  /// Derived at load time, not serialised.
  PostprocessArtifacts artifacts;
  StopwordSet stopword_set;

  const std::string& taxonomy_version() const { return taxonomy.version(); }
  /// Rebuilds the derived members after construction or deserialisation.
  void prepare();

  nlohmann::json to_json() const;
  static ModelBundle from_json(const nlohmann::json& j);

  /// Writes atomically (temporary file + rename).
  void save(const std::filesystem::path& path) const;
  static ModelBundle load(const std::filesystem::path& path);
};

/// Raw per-label scores: confidence = scale(raw), decided at 0.5.
PredictionSet predict(const ModelBundle& bundle, const Document& doc);

/// predict followed by the bundle's post-processing, or `override_strategy`
/// when given. TacticsAsFeatures can only be requested for bundles trained
/// with it.
PredictionSet classify(const ModelBundle& bundle, const Document& doc,
                       std::optional<Strategy> override_strategy = std::nullopt);

}  // namespace ttpmap
