#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <nlohmann/json.hpp>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "ttpmap/attack_kb.hpp"

namespace ttpmap {

/// Text of `<p>` elements only, in document order, separated by single spaces.
/// Inline markup inside a paragraph is flattened; script, style and comments are
/// skipped. Throws EmptyTextError when no paragraph text remains.
std::string extract_html_text(std::string_view html);

class StopwordSet {
 public:
  StopwordSet() = default;
  explicit StopwordSet(std::vector<std::string> words);

  static StopwordSet from_file(const std::filesystem::path& path);
  /// The English list compiled into the library.
  static const StopwordSet& english();

  bool contains(std::string_view token) const { return words_.contains(std::string(token)); }
  std::size_t size() const { return words_.size(); }
  /// Sorted word list, for serialisation.
  std::vector<std::string> words() const;

 private:
  std::unordered_set<std::string> words_;
};

/// Lowercased ASCII-alphabetic tokens of length >= 2 with stopwords removed,
/// in original order.
std::vector<std::string> clean_text(std::string_view raw, const StopwordSet& stopwords);

/// clean_text joined by single spaces.
std::string clean_joined(std::string_view raw, const StopwordSet& stopwords);

struct Document {
  std::string doc_id;
  std::string source;
  std::string text;

  bool operator==(const Document&) const = default;
};

/// Reads a report from disk. `.html`/`.htm` files go through extract_html_text,
/// anything else is taken as plain text.
Document load_document(const std::filesystem::path& path);

struct LabeledDocument {
  Document document;
  LabelSet tactic_labels;
  LabelSet technique_labels;
  std::string added_at;

  bool operator==(const LabeledDocument&) const = default;

  nlohmann::json to_json() const;
  static LabeledDocument from_json(const nlohmann::json& j);
};

/// Append-only JSON-lines file of labelled documents.
///
/// One writer at a time; readers take snapshots and always see a prefix of the
/// file. Appends are fsynced before `append` returns.
class TrainingStore {
 public:
  /// Opens `path`, loading existing entries. A missing file is an empty store.
  explicit TrainingStore(std::filesystem::path path);

  TrainingStore(const TrainingStore&) = delete;
  TrainingStore& operator=(const TrainingStore&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::size_t size() const;
  bool contains(const std::string& doc_id) const;
  std::vector<LabeledDocument> snapshot() const;

  /// Throws ValidationError for unknown labels or empty text, ConflictError for a
  /// duplicate doc_id. Nothing is written when validation fails.
  void append(LabeledDocument entry, const Taxonomy& taxonomy);

  /// Reads a store file without keeping it open.
  static std::vector<LabeledDocument> read(const std::filesystem::path& path);

 private:
  std::filesystem::path path_;
  mutable std::shared_mutex mutex_;
  std::vector<LabeledDocument> entries_;
  std::unordered_set<std::string> ids_;
};

/// Checks every label of `entry` against the taxonomy.
void validate_labels(const LabeledDocument& entry, const Taxonomy& taxonomy);

struct TrainableLabels {
  std::vector<LabelId> tactics;
  std::vector<LabelId> techniques;
};

/// All taxonomy tactics, plus the techniques with at least `min_reports`
/// positive documents. Both lists sorted by id.
TrainableLabels filter_trainable_labels(std::span<const LabeledDocument> docs,
                                        const Taxonomy& taxonomy, std::size_t min_reports = 5);

/// Builds labelled documents from the external references in a bundle.
///
/// Every non-ATT&CK reference URL attached to an attack-pattern, or to a `uses`
/// relationship targeting one, labels the report with that technique. The report
/// body is looked up in `corpus_dir` as `<sha256(url)>.txt` or `.html`; missing
/// or empty files are reported and skipped. Tactic labels are the member tactics
/// of the technique labels.
std::vector<LabeledDocument> bootstrap_corpus(const nlohmann::json& bundle, const Taxonomy& taxonomy,
                                              const std::filesystem::path& corpus_dir,
                                              const StopwordSet& stopwords,
                                              Diagnostics* diagnostics = nullptr);

}  // namespace ttpmap
