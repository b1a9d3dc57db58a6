#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

namespace ttpmap {

enum class Weighting { TF, TFIDF };

std::string to_string(Weighting w);
Weighting weighting_from_string(const std::string& s);

struct FeatureEntry {
  std::uint32_t index;
  double weight;

  bool operator==(const FeatureEntry&) const = default;
};

/// Sparse non-negative vector, entries sorted by index.
struct FeatureVector {
  std::vector<FeatureEntry> entries;

  double dot(std::span<const double> dense) const;
  double squared_norm() const;
  bool operator==(const FeatureVector&) const = default;
};

struct VectorizerOptions {
  Weighting mode = Weighting::TFIDF;
  std::size_t min_df = 2;  // absolute document count
  double max_df = 0.90;    // fraction of the corpus
};

/// Bag-of-words vectorizer with document-frequency cutoffs and top-half
/// feature selection.
///
/// The vocabulary is every token whose document frequency `df` satisfies
/// `min_df <= df` and `df / N <= max_df`, indexed in lexicographic order. The
/// inverse document frequency is `ln((1 + N) / (1 + df)) + 1`. Of the surviving
/// tokens, the `ceil(V / 2)` with the largest summed corpus weight are selected
/// (raw counts in TF mode, unit-normalised TF-IDF rows in TFIDF mode; ties go to
/// the lexicographically smaller token). Transformed vectors live in the selected
/// space, indexed `0 .. dimension() - 1` in token order.
class VectorizerModel {
 public:
  VectorizerModel() = default;

  /// Throws FitError for an empty corpus or an empty vocabulary after cutoffs.
  static VectorizerModel fit(std::span<const std::vector<std::string>> corpus,
                             const VectorizerOptions& options = {});

  /// TF: raw counts. TFIDF: count * idf, scaled to unit Euclidean norm.
  /// Out-of-vocabulary and unselected tokens are ignored.
  FeatureVector transform(std::span<const std::string> tokens) const;

  /// Number of selected features.
  std::size_t dimension() const { return selected_tokens_.size(); }
  std::size_t vocabulary_size() const { return vocabulary_.size(); }

  Weighting mode() const { return options_.mode; }
  const VectorizerOptions& options() const { return options_; }
  const std::vector<std::string>& vocabulary() const { return vocabulary_; }
  const std::vector<double>& idf() const { return idf_; }
  const std::vector<bool>& selected() const { return selected_; }
  /// Selected tokens in feature-index order.
  const std::vector<std::string>& selected_tokens() const { return selected_tokens_; }

  nlohmann::json to_json() const;
  static VectorizerModel from_json(const nlohmann::json& j);

  bool operator==(const VectorizerModel& other) const {
    return vocabulary_ == other.vocabulary_ && idf_ == other.idf_ && selected_ == other.selected_ &&
           options_.mode == other.options_.mode && options_.min_df == other.options_.min_df &&
           options_.max_df == other.options_.max_df;
  }

 private:
  void index_selection();

  VectorizerOptions options_;
  std::vector<std::string> vocabulary_;
  std::vector<double> idf_;
  std::vector<bool> selected_;
  std::vector<std::string> selected_tokens_;
  std::vector<double> selected_idf_;
  std::map<std::string, std::uint32_t, std::less<>> feature_of_;
};

}  // namespace ttpmap
