#include "ttpmap/bundle.hpp"

#include <algorithm>

#include "ttpmap/error.hpp"
#include "ttpmap/util.hpp"

namespace ttpmap {

nlohmann::json TrainConfig::to_json() const {
  return {{"weighting", to_string(vectorizer.mode)},
          {"min_df", vectorizer.min_df},
          {"max_df", vectorizer.max_df},
          {"tactic_c", tactic_c},
          {"technique_c", technique_c},
          {"svm_tolerance", svm_tolerance},
          {"svm_max_epochs", svm_max_epochs},
          {"resampling", resampling.to_json()},
          {"min_reports", min_reports},
          {"folds", folds},
          {"seed", seed},
          {"auto_select", auto_select},
          {"postprocess", postprocess.to_json()}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  try {
    TrainConfig c;
    if (j.contains("weighting")) c.vectorizer.mode = weighting_from_string(j["weighting"].get<std::string>());
    c.vectorizer.min_df = j.value("min_df", c.vectorizer.min_df);
    c.vectorizer.max_df = j.value("max_df", c.vectorizer.max_df);
    c.tactic_c = j.value("tactic_c", c.tactic_c);
    c.technique_c = j.value("technique_c", c.technique_c);
    c.svm_tolerance = j.value("svm_tolerance", c.svm_tolerance);
    c.svm_max_epochs = j.value("svm_max_epochs", c.svm_max_epochs);
    if (j.contains("resampling")) c.resampling = ResamplingPolicy::from_json(j["resampling"]);
    c.min_reports = j.value("min_reports", c.min_reports);
    c.folds = j.value("folds", c.folds);
    c.seed = j.value("seed", c.seed);
    c.auto_select = j.value("auto_select", c.auto_select);
    if (j.contains("postprocess")) c.postprocess = PostprocessConfig::from_json(j["postprocess"]);
    if (j.contains("stopwords_file")) {
      c.stopwords = StopwordSet::from_file(j["stopwords_file"].get<std::string>()).words();
    }
    if (c.tactic_c <= 0.0 || c.technique_c <= 0.0) throw ConfigError("regularisation C must be positive");
    if (c.min_reports == 0) throw ConfigError("min_reports must be at least 1");
    if (c.folds < 2) throw ConfigError("folds must be at least 2");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed training config: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

namespace {

nlohmann::json models_to_json(const std::vector<LinearModel>& models) {
  auto arr = nlohmann::json::array();
  for (const auto& m : models) arr.push_back(m.to_json());
  return arr;
}

std::vector<LinearModel> models_from_json(const nlohmann::json& j) {
  std::vector<LinearModel> out;
  for (const auto& m : j) out.push_back(LinearModel::from_json(m));
  return out;
}

}  // namespace

void ModelBundle::prepare() {
  stopword_set = stopwords.empty() ? StopwordSet::english() : StopwordSet(stopwords);
  artifacts = PostprocessArtifacts{};
  artifacts.boosts = boosts;
  if (postprocess.strategy == Strategy::RareRules) artifacts.rules = build_rare_rules(stats, postprocess.rare);
  if (postprocess.strategy == Strategy::Steiner) artifacts.branching = build_branching(stats);
}

nlohmann::json ModelBundle::to_json() const {
  nlohmann::json j;
  j["format_version"] = kFormatVersion;
  j["taxonomy_version"] = taxonomy.version();
  j["trained_at"] = trained_at;
  j["trained_on"] = trained_on;
  j["taxonomy"] = taxonomy.to_json();
  j["association"] = stats.to_json();
  j["stopwords"] = stopwords;
  j["vectorizer"] = models.vectorizer.to_json();
  j["tactic_labels"] = models.tactic_labels;
  j["tactic_models"] = models_to_json(models.tactic_models);
  j["technique_models"] = models_to_json(models.technique_models);
  j["tactic_features"] = models.tactic_features;
  j["skipped_labels"] = models.skipped;
  j["postprocessing"] = postprocess.to_json();
  j["boosts"] = boosts.to_json();
  j["cv_scores"] = {{"tactics", cv_tactics.to_json()}, {"techniques", cv_techniques.to_json()}};
  j["warnings"] = warnings;
  return j;
}

ModelBundle ModelBundle::from_json(const nlohmann::json& j) {
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kFormatVersion) {
      throw ParseError("unsupported bundle format version " + std::to_string(version));
    }
    ModelBundle b;
    b.trained_at = j.value("trained_at", "");
    b.trained_on = j.value("trained_on", std::size_t{0});
    b.taxonomy = Taxonomy::from_json(j.at("taxonomy"));
    b.stats = AssociationStats::from_json(j.at("association"));
    b.stopwords = j.value("stopwords", std::vector<std::string>{});
    b.models.vectorizer = VectorizerModel::from_json(j.at("vectorizer"));
    b.models.tactic_labels = j.at("tactic_labels").get<std::vector<LabelId>>();
    b.models.tactic_models = models_from_json(j.at("tactic_models"));
    b.models.technique_models = models_from_json(j.at("technique_models"));
    b.models.tactic_features = j.value("tactic_features", false);
    b.models.skipped = j.value("skipped_labels", std::vector<LabelId>{});
    b.postprocess = PostprocessConfig::from_json(j.at("postprocessing"));
    b.boosts = BoostMatrix::from_json(j.at("boosts"));
    if (j.contains("cv_scores")) {
      b.cv_tactics = MetricsReport::from_json(j["cv_scores"].value("tactics", nlohmann::json::object()));
      b.cv_techniques = MetricsReport::from_json(j["cv_scores"].value("techniques", nlohmann::json::object()));
    }
    b.warnings = j.value("warnings", std::vector<std::string>{});

    const auto dim = b.models.vectorizer.dimension();
    const auto tech_dim = dim + (b.models.tactic_features ? b.models.tactic_labels.size() : 0);
    for (const auto& m : b.models.tactic_models) {
      if (!b.taxonomy.is_tactic(m.label_id)) throw ParseError("model for unknown tactic " + m.label_id);
      if (m.weights.size() != dim) throw ParseError("weight dimension mismatch for " + m.label_id);
    }
    for (const auto& m : b.models.technique_models) {
      if (!b.taxonomy.is_technique(m.label_id)) throw ParseError("model for unknown technique " + m.label_id);
      if (m.weights.size() != tech_dim) throw ParseError("weight dimension mismatch for " + m.label_id);
    }
    b.prepare();
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed model bundle: ") + e.what());
  }
}

void ModelBundle::save(const std::filesystem::path& path) const {
  write_file_atomic(path, to_json().dump() + "\n");
}

ModelBundle ModelBundle::load(const std::filesystem::path& path) {
  const auto text = read_file(path);
  try {
    return from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

PredictionSet predict_tokens(const TrainedModels& models, std::span<const std::string> tokens,
                             std::string doc_id) {
  PredictionSet out;
  out.doc_id = std::move(doc_id);
  const auto x = models.vectorizer.transform(tokens);
  for (const auto& m : models.tactic_models) out.tactics.push_back(make_prediction(m.label_id, m.decision(x)));

  if (models.tactic_features) {
    std::vector<double> conf(models.tactic_labels.size(), 0.0);
    for (std::size_t k = 0; k < models.tactic_labels.size(); ++k) {
      if (const auto* p = out.find(models.tactic_labels[k])) conf[k] = p->confidence;
    }
    const auto xa = augment_with_tactics(x, models.vectorizer.dimension(), conf, conf.size());
    for (const auto& m : models.technique_models) {
      out.techniques.push_back(make_prediction(m.label_id, m.decision(xa)));
    }
  } else {
    for (const auto& m : models.technique_models) {
      out.techniques.push_back(make_prediction(m.label_id, m.decision(x)));
    }
  }
  return out;
}

PredictionSet predict(const ModelBundle& bundle, const Document& doc) {
  const auto tokens = clean_text(doc.text, bundle.stopword_set);
  return predict_tokens(bundle.models, tokens, doc.doc_id);
}

PredictionSet classify(const ModelBundle& bundle, const Document& doc,
                       std::optional<Strategy> override_strategy) {
  const auto raw = predict(bundle, doc);
  if (!override_strategy || *override_strategy == bundle.postprocess.strategy) {
    return apply_strategy(raw, bundle.postprocess, bundle.taxonomy, bundle.stats, bundle.artifacts);
  }
  if (*override_strategy == Strategy::TacticsAsFeatures && !bundle.models.tactic_features) {
    throw ConfigError("this bundle was not trained with tactic features");
  }
  auto config = bundle.postprocess;
  config.strategy = *override_strategy;
  auto artifacts = bundle.artifacts;
  if (config.strategy == Strategy::RareRules) artifacts.rules = build_rare_rules(bundle.stats, config.rare);
  if (config.strategy == Strategy::Steiner) artifacts.branching = build_branching(bundle.stats);
  return apply_strategy(raw, config, bundle.taxonomy, bundle.stats, artifacts);
}

}  // namespace ttpmap
