#include "ttpmap/features.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ttpmap/error.hpp"
#include "ttpmap/util.hpp"

namespace ttpmap {

std::string to_string(Weighting w) { return w == Weighting::TF ? "tf" : "tfidf"; }

Weighting weighting_from_string(const std::string& s) {
  if (s == "tf") return Weighting::TF;
  if (s == "tfidf") return Weighting::TFIDF;
  throw ConfigError("unknown weighting '" + s + "' (expected tf or tfidf)");
}

double FeatureVector::dot(std::span<const double> dense) const {
  double s = 0.0;
  for (const auto& e : entries) {
    if (e.index < dense.size()) s += e.weight * dense[e.index];
  }
  return s;
}

double FeatureVector::squared_norm() const {
  double s = 0.0;
  for (const auto& e : entries) s += e.weight * e.weight;
  return s;
}

VectorizerModel VectorizerModel::fit(std::span<const std::vector<std::string>> corpus,
                                     const VectorizerOptions& options) {
  if (corpus.empty()) throw FitError("cannot fit a vectorizer on an empty corpus");
  if (options.max_df <= 0.0 || options.max_df > 1.0) throw ConfigError("max_df must be in (0, 1]");

  const auto n_docs = corpus.size();
  std::vector<std::map<std::string, std::size_t>> counts(n_docs);
  std::map<std::string, std::size_t> df;
  for (std::size_t d = 0; d < n_docs; ++d) {
    for (const auto& tok : corpus[d]) ++counts[d][tok];
    for (const auto& [tok, c] : counts[d]) ++df[tok];
  }

  VectorizerModel model;
  model.options_ = options;
  for (const auto& [tok, f] : df) {  // std::map iterates lexicographically
    const double fraction = static_cast<double>(f) / static_cast<double>(n_docs);
    if (f >= options.min_df && fraction <= options.max_df) {
      model.vocabulary_.push_back(tok);
      model.idf_.push_back(std::log((1.0 + static_cast<double>(n_docs)) / (1.0 + static_cast<double>(f))) +
                           1.0);
    }
  }
  if (model.vocabulary_.empty()) {
    throw FitError("vocabulary is empty after applying min_df/max_df cutoffs");
  }

  std::map<std::string_view, std::size_t> vocab_index;
  for (std::size_t i = 0; i < model.vocabulary_.size(); ++i) vocab_index[model.vocabulary_[i]] = i;

  // Per-feature contributions are collected and summed in sorted order so the
  // ranking does not depend on document order.
  const auto V = model.vocabulary_.size();
  std::vector<std::vector<double>> contributions(V);
  for (std::size_t d = 0; d < n_docs; ++d) {
    std::vector<std::pair<std::size_t, double>> row;
    for (const auto& [tok, c] : counts[d]) {
      const auto it = vocab_index.find(tok);
      if (it == vocab_index.end()) continue;
      const double w = options.mode == Weighting::TF ? static_cast<double>(c)
                                                     : static_cast<double>(c) * model.idf_[it->second];
      row.emplace_back(it->second, w);
    }
    if (options.mode == Weighting::TFIDF) {
      double norm = 0.0;
      for (const auto& [i, w] : row) norm += w * w;
      norm = std::sqrt(norm);
      if (norm > 0.0) {
        for (auto& [i, w] : row) w /= norm;
      }
    }
    for (const auto& [i, w] : row) contributions[i].push_back(w);
  }
  std::vector<double> score(V, 0.0);
  for (std::size_t i = 0; i < V; ++i) {
    std::ranges::sort(contributions[i]);
    score[i] = std::accumulate(contributions[i].begin(), contributions[i].end(), 0.0);
  }

  std::vector<std::size_t> order(V);
  std::iota(order.begin(), order.end(), 0);
  std::ranges::stable_sort(order, [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  const auto keep = (V + 1) / 2;
  model.selected_.assign(V, false);
  for (std::size_t k = 0; k < keep; ++k) model.selected_[order[k]] = true;
  model.index_selection();
  return model;
}

void VectorizerModel::index_selection() {
  selected_tokens_.clear();
  selected_idf_.clear();
  feature_of_.clear();
  for (std::size_t i = 0; i < vocabulary_.size(); ++i) {
    if (!selected_[i]) continue;
    feature_of_.emplace(vocabulary_[i], static_cast<std::uint32_t>(selected_tokens_.size()));
    selected_tokens_.push_back(vocabulary_[i]);
    selected_idf_.push_back(idf_.empty() ? 1.0 : idf_[i]);
  }
}

FeatureVector VectorizerModel::transform(std::span<const std::string> tokens) const {
  std::map<std::uint32_t, double> counts;
  for (const auto& tok : tokens) {
    const auto it = feature_of_.find(tok);
    if (it != feature_of_.end()) counts[it->second] += 1.0;
  }
  FeatureVector v;
  v.entries.reserve(counts.size());
  for (const auto& [idx, c] : counts) {
    v.entries.push_back({idx, options_.mode == Weighting::TF ? c : c * selected_idf_[idx]});
  }
  if (options_.mode == Weighting::TFIDF) {
    const double norm = std::sqrt(v.squared_norm());
    if (norm > 0.0) {
      for (auto& e : v.entries) e.weight /= norm;
    }
  }
  return v;
}

nlohmann::json VectorizerModel::to_json() const {
  std::vector<std::size_t> selected_indices;
  for (std::size_t i = 0; i < selected_.size(); ++i) {
    if (selected_[i]) selected_indices.push_back(i);
  }
  return {{"mode", to_string(options_.mode)},
          {"min_df", options_.min_df},
          {"max_df", options_.max_df},
          {"vocabulary", vocabulary_},
          {"idf", encode_doubles(idf_)},
          {"selected", selected_indices}};
}

VectorizerModel VectorizerModel::from_json(const nlohmann::json& j) {
  try {
    VectorizerModel m;
    m.options_.mode = weighting_from_string(j.at("mode").get<std::string>());
    m.options_.min_df = j.at("min_df").get<std::size_t>();
    m.options_.max_df = j.at("max_df").get<double>();
    m.vocabulary_ = j.at("vocabulary").get<std::vector<std::string>>();
    m.idf_ = decode_doubles(j.at("idf").get<std::string>());
    if (m.idf_.size() != m.vocabulary_.size()) throw ParseError("idf length does not match vocabulary");
    m.selected_.assign(m.vocabulary_.size(), false);
    for (auto i : j.at("selected").get<std::vector<std::size_t>>()) {
      if (i >= m.selected_.size()) throw ParseError("selected index out of range");
      m.selected_[i] = true;
    }
    m.index_selection();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed vectorizer: ") + e.what());
  }
}

}  // namespace ttpmap
