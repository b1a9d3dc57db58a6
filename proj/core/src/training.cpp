#include "ttpmap/training.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "ttpmap/error.hpp"
#include "ttpmap/util.hpp"

namespace ttpmap {
namespace {

const StopwordSet& stopwords_for(const TrainConfig& config, StopwordSet& storage) {
  if (config.stopwords.empty()) return StopwordSet::english();
  storage = StopwordSet(config.stopwords);
  return storage;
}

std::vector<std::vector<std::string>> tokenize_all(std::span<const LabeledDocument> docs,
                                                   const StopwordSet& stopwords) {
  std::vector<std::vector<std::string>> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back(clean_text(d.document.text, stopwords));
  return out;
}

template <typename T>
std::vector<T> gather(std::span<const T> items, std::span<const std::size_t> indices) {
  std::vector<T> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(items[i]);
  return out;
}

LinearModel fit_label(const LabelId& label, const std::vector<FeatureVector>& x,
                      const std::vector<bool>& y_bits, std::size_t dim, const SvmOptions& svm,
                      bool resampling, std::size_t n_pos, std::size_t n_neg, std::uint64_t seed) {
  // std::vector<bool> has no contiguous storage to view as a span.
  const auto y_store = std::make_unique<bool[]>(y_bits.size());
  std::copy(y_bits.begin(), y_bits.end(), y_store.get());
  const std::span<const bool> y(y_store.get(), y_bits.size());
  if (!resampling) return train_label(label, x, y, dim, svm);

  const auto idx = resample(y, n_pos, n_neg, derive_seed(seed, "resample:" + label));
  std::vector<FeatureVector> xs;
  const auto ys = std::make_unique<bool[]>(idx.size());
  xs.reserve(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    xs.push_back(x[idx[k]]);
    ys[k] = y[idx[k]];
  }
  return train_label(label, xs, std::span<const bool>(ys.get(), idx.size()), dim, svm);
}

double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

// One trained fold: held-out document indices and their raw predictions.
struct FoldRun {
  std::vector<std::size_t> test;
  std::vector<PredictionSet> raw;
  BoostMatrix boosts;
};

struct FoldPlan {
  std::vector<std::size_t> fold_of;
  std::vector<FoldRun> runs;
};

FoldPlan run_folds(std::span<const LabeledDocument> docs,
                   std::span<const std::vector<std::string>> tokens, const Taxonomy& taxonomy,
                   const TrainableLabels& labels, const TrainConfig& config, bool tactic_features) {
  if (docs.size() < config.folds) {
    throw ConfigError("cross-validation needs at least " + std::to_string(config.folds) +
                      " documents, store has " + std::to_string(docs.size()));
  }
  FoldPlan plan;
  plan.fold_of = assign_folds(docs.size(), config.folds, config.seed);
  for (std::size_t f = 0; f < config.folds; ++f) {
    std::vector<std::size_t> train;
    FoldRun run;
    for (std::size_t i = 0; i < docs.size(); ++i) (plan.fold_of[i] == f ? run.test : train).push_back(i);
    const auto train_docs = gather(docs, train);
    const auto train_tokens = gather(tokens, train);
    const auto models = train_models(train_docs, train_tokens, labels, config, tactic_features);
    run.boosts = build_boost_matrix(train_docs, taxonomy);
    for (auto i : run.test) run.raw.push_back(predict_tokens(models, tokens[i], docs[i].document.doc_id));
    plan.runs.push_back(std::move(run));
  }
  return plan;
}

LabelSet restrict(const LabelSet& s, const std::vector<LabelId>& allowed) {
  LabelSet out;
  for (const auto& l : s) {
    if (std::ranges::binary_search(allowed, l)) out.insert(l);
  }
  return out;
}

CrossValidationResult evaluate_plan(const FoldPlan& plan, std::span<const LabeledDocument> docs,
                                    const Taxonomy& taxonomy, const AssociationStats& stats,
                                    const TrainableLabels& scored, const PostprocessConfig& config,
                                    const PostprocessArtifacts& shared) {
  CrossValidationResult result;
  result.fold_of = plan.fold_of;
  MetricCounts tactic_total;
  MetricCounts technique_total;
  for (const auto& run : plan.runs) {
    auto artifacts = shared;
    artifacts.boosts = run.boosts;
    std::vector<LabelSet> gold_ta, gold_te, pred_ta, pred_te;
    for (std::size_t k = 0; k < run.test.size(); ++k) {
      const auto& doc = docs[run.test[k]];
      const auto post = apply_strategy(run.raw[k], config, taxonomy, stats, artifacts);
      gold_ta.push_back(restrict(doc.tactic_labels, scored.tactics));
      gold_te.push_back(restrict(doc.technique_labels, scored.techniques));
      pred_ta.push_back(restrict(post.decided_tactics(), scored.tactics));
      pred_te.push_back(restrict(post.decided_techniques(), scored.techniques));
    }
    const auto ta = count_labels(gold_ta, pred_ta, scored.tactics);
    const auto te = count_labels(gold_te, pred_te, scored.techniques);
    result.fold_tactics.push_back(report_from_counts(ta));
    result.fold_techniques.push_back(report_from_counts(te));
    tactic_total += ta;
    technique_total += te;
  }
  result.tactics = report_from_counts(tactic_total);
  result.techniques = report_from_counts(technique_total);
  return result;
}

PostprocessArtifacts shared_artifacts(const AssociationStats& stats, const PostprocessConfig& config) {
  PostprocessArtifacts a;
  if (config.strategy == Strategy::RareRules) a.rules = build_rare_rules(stats, config.rare);
  if (config.strategy == Strategy::Steiner) a.branching = build_branching(stats);
  return a;
}

}  // namespace

// ---------------------------------------------------------------------------

TrainedModels train_models(std::span<const LabeledDocument> docs,
                           std::span<const std::vector<std::string>> tokens,
                           const TrainableLabels& labels, const TrainConfig& config,
                           bool tactic_features) {
  if (docs.size() != tokens.size()) throw ConfigError("document and token counts differ");
  TrainedModels out;
  out.vectorizer = VectorizerModel::fit(tokens, config.vectorizer);
  out.tactic_labels = labels.tactics;
  out.tactic_features = tactic_features;

  const auto dim = out.vectorizer.dimension();
  std::vector<FeatureVector> x;
  x.reserve(docs.size());
  for (const auto& t : tokens) x.push_back(out.vectorizer.transform(t));

  const auto& rs = config.resampling;
  for (const auto& label : labels.tactics) {
    std::vector<bool> y;
    for (const auto& d : docs) y.push_back(d.tactic_labels.contains(label));
    try {
      out.tactic_models.push_back(fit_label(label, x, y, dim, config.tactic_svm(), rs.enabled,
                                            rs.tactic_pos, rs.tactic_neg, config.seed));
    } catch (const DegenerateLabelError&) {
      out.skipped.push_back(label);
    }
  }

  std::vector<FeatureVector> xt;
  std::size_t tech_dim = dim;
  if (tactic_features) {
    tech_dim = dim + labels.tactics.size();
    xt.reserve(docs.size());
    for (std::size_t i = 0; i < docs.size(); ++i) {
      std::vector<double> onehot;
      for (const auto& ta : labels.tactics) onehot.push_back(docs[i].tactic_labels.contains(ta) ? 1.0 : 0.0);
      xt.push_back(augment_with_tactics(x[i], dim, onehot, onehot.size()));
    }
  }
  const auto& tech_x = tactic_features ? xt : x;
  for (const auto& label : labels.techniques) {
    std::vector<bool> y;
    for (const auto& d : docs) y.push_back(d.technique_labels.contains(label));
    try {
      out.technique_models.push_back(fit_label(label, tech_x, y, tech_dim, config.technique_svm(),
                                               rs.enabled, rs.technique_pos, rs.technique_neg,
                                               config.seed));
    } catch (const DegenerateLabelError&) {
      out.skipped.push_back(label);
    }
  }
  if (out.tactic_models.empty() && out.technique_models.empty()) {
    throw Error("every label is degenerate (single-class) in the training data");
  }
  return out;
}

ComparisonRow CrossValidationResult::to_row(std::string strategy) const {
  ComparisonRow row;
  row.strategy = std::move(strategy);
  row.tactics = tactics;
  row.techniques = techniques;
  auto collect = [](const std::vector<MetricsReport>& v, double MetricsReport::*field) {
    std::vector<double> out;
    for (const auto& r : v) out.push_back(r.*field);
    return sample_sd(out);
  };
  row.tactics_micro_f05_sd = collect(fold_tactics, &MetricsReport::micro_f05);
  row.tactics_macro_f05_sd = collect(fold_tactics, &MetricsReport::macro_f05);
  row.techniques_micro_f05_sd = collect(fold_techniques, &MetricsReport::micro_f05);
  row.techniques_macro_f05_sd = collect(fold_techniques, &MetricsReport::macro_f05);
  return row;
}

TrainableLabels scored_labels(std::span<const LabeledDocument> docs, const Taxonomy& taxonomy,
                              std::size_t min_reports) {
  auto labels = filter_trainable_labels(docs, taxonomy, min_reports);
  LabelSet present;
  for (const auto& d : docs) present.insert(d.tactic_labels.begin(), d.tactic_labels.end());
  std::erase_if(labels.tactics, [&](const LabelId& t) { return !present.contains(t); });
  return labels;
}

CrossValidationResult cross_validate(std::span<const LabeledDocument> docs, const Taxonomy& taxonomy,
                                     const AssociationStats& stats, const TrainConfig& config,
                                     Strategy strategy) {
  StopwordSet storage;
  const auto tokens = tokenize_all(docs, stopwords_for(config, storage));
  const auto labels = filter_trainable_labels(docs, taxonomy, config.min_reports);
  const auto scored = scored_labels(docs, taxonomy, config.min_reports);
  const auto plan = run_folds(docs, tokens, taxonomy, labels, config,
                              strategy == Strategy::TacticsAsFeatures);
  auto pp = config.postprocess;
  pp.strategy = strategy;
  return evaluate_plan(plan, docs, taxonomy, stats, scored, pp, shared_artifacts(stats, pp));
}

CrossValidationResult cross_validate_baseline(std::span<const LabeledDocument> docs,
                                              const Taxonomy& taxonomy, const TrainConfig& config) {
  if (docs.size() < config.folds) {
    throw ConfigError("cross-validation needs at least " + std::to_string(config.folds) + " documents");
  }
  const auto scored = scored_labels(docs, taxonomy, config.min_reports);
  CrossValidationResult result;
  result.fold_of = assign_folds(docs.size(), config.folds, config.seed);
  MetricCounts ta_total;
  MetricCounts te_total;
  for (std::size_t f = 0; f < config.folds; ++f) {
    std::vector<LabelSet> train_ta, train_te, gold_ta, gold_te;
    for (std::size_t i = 0; i < docs.size(); ++i) {
      const auto ta = restrict(docs[i].tactic_labels, scored.tactics);
      const auto te = restrict(docs[i].technique_labels, scored.techniques);
      if (result.fold_of[i] == f) {
        gold_ta.push_back(ta);
        gold_te.push_back(te);
      } else {
        train_ta.push_back(ta);
        train_te.push_back(te);
      }
    }
    const auto ta = count_labels(gold_ta, majority_baseline(train_ta, gold_ta.size()), scored.tactics);
    const auto te = count_labels(gold_te, majority_baseline(train_te, gold_te.size()), scored.techniques);
    result.fold_tactics.push_back(report_from_counts(ta));
    result.fold_techniques.push_back(report_from_counts(te));
    ta_total += ta;
    te_total += te;
  }
  result.tactics = report_from_counts(ta_total);
  result.techniques = report_from_counts(te_total);
  return result;
}

std::vector<ComparisonRow> compare_strategies(std::span<const LabeledDocument> docs,
                                              const Taxonomy& taxonomy, const AssociationStats& stats,
                                              const TrainConfig& config,
                                              std::span<const Strategy> strategies) {
  StopwordSet storage;
  const auto tokens = tokenize_all(docs, stopwords_for(config, storage));
  const auto labels = filter_trainable_labels(docs, taxonomy, config.min_reports);
  const auto scored = scored_labels(docs, taxonomy, config.min_reports);
  const auto plan = run_folds(docs, tokens, taxonomy, labels, config, false);

  std::vector<ComparisonRow> rows;
  auto pp = config.postprocess;
  pp.strategy = Strategy::None;
  rows.push_back(evaluate_plan(plan, docs, taxonomy, stats, scored, pp, {}).to_row("independent"));

  for (const auto s : strategies) {
    if (s == Strategy::None) continue;
    pp.strategy = s;
    if (s == Strategy::TacticsAsFeatures) {
      const auto tf_plan = run_folds(docs, tokens, taxonomy, labels, config, true);
      rows.push_back(evaluate_plan(tf_plan, docs, taxonomy, stats, scored, pp, {}).to_row(to_string(s)));
    } else {
      rows.push_back(evaluate_plan(plan, docs, taxonomy, stats, scored, pp, shared_artifacts(stats, pp))
                         .to_row(to_string(s)));
    }
  }
  return rows;
}

AutoSelection auto_select(std::span<const LabeledDocument> docs, const Taxonomy& taxonomy,
                          const AssociationStats& stats, const TrainConfig& config,
                          std::span<const Strategy> candidates) {
  static constexpr Strategy kDefaults[] = {Strategy::HangingNode, Strategy::ConfidencePropagation};
  if (candidates.empty()) candidates = kDefaults;

  AutoSelection sel;
  if (docs.size() < config.folds) {
    sel.fallback = true;
    sel.warning = "store has " + std::to_string(docs.size()) + " documents, fewer than " +
                  std::to_string(config.folds) + " folds; using hanging-node without cross-validation";
    return sel;
  }

  StopwordSet storage;
  const auto tokens = tokenize_all(docs, stopwords_for(config, storage));
  const auto labels = filter_trainable_labels(docs, taxonomy, config.min_reports);
  const auto scored = scored_labels(docs, taxonomy, config.min_reports);
  FoldPlan plan;
  try {
    plan = run_folds(docs, tokens, taxonomy, labels, config, false);
  } catch (const Error& e) {
    sel.fallback = true;
    sel.warning = std::string("cross-validation failed (") + e.what() + "); using hanging-node";
    return sel;
  }

  bool have = false;
  for (const auto s : candidates) {
    auto pp = config.postprocess;
    pp.strategy = s;
    auto cv = s == Strategy::TacticsAsFeatures
                  ? evaluate_plan(run_folds(docs, tokens, taxonomy, labels, config, true), docs, taxonomy,
                                  stats, scored, pp, {})
                  : evaluate_plan(plan, docs, taxonomy, stats, scored, pp, shared_artifacts(stats, pp));
    const double f = cv.techniques.macro_f05;
    const bool better = !have || f > sel.cv.techniques.macro_f05 ||
                        (f == sel.cv.techniques.macro_f05 && s == Strategy::HangingNode);
    if (better) {
      sel.strategy = s;
      sel.cv = std::move(cv);
      have = true;
    }
  }
  return sel;
}

ModelBundle train_bundle(std::span<const LabeledDocument> docs, const Taxonomy& taxonomy,
                         const AssociationStats& stats, const TrainConfig& config) {
  if (docs.empty()) throw Error("training store is empty");
  for (const auto& d : docs) validate_labels(d, taxonomy);
  const auto labels = filter_trainable_labels(docs, taxonomy, config.min_reports);
  if (labels.techniques.empty()) {
    throw Error("no technique has at least " + std::to_string(config.min_reports) +
                " positive reports; refusing to train");
  }

  ModelBundle bundle;
  bundle.postprocess = config.postprocess;
  if (config.auto_select) {
    auto sel = auto_select(docs, taxonomy, stats, config);
    bundle.postprocess.strategy = sel.strategy;
    bundle.cv_tactics = sel.cv.tactics;
    bundle.cv_techniques = sel.cv.techniques;
    if (!sel.warning.empty()) bundle.warnings.push_back(sel.warning);
  } else if (docs.size() >= config.folds) {
    const auto cv = cross_validate(docs, taxonomy, stats, config, config.postprocess.strategy);
    bundle.cv_tactics = cv.tactics;
    bundle.cv_techniques = cv.techniques;
  } else {
    bundle.warnings.push_back("store smaller than the fold count; cross-validation skipped");
  }

  StopwordSet storage;
  const auto& sw = stopwords_for(config, storage);
  const auto tokens = tokenize_all(docs, sw);
  bundle.models = train_models(docs, tokens, labels, config,
                               bundle.postprocess.strategy == Strategy::TacticsAsFeatures);
  for (const auto& s : bundle.models.skipped) bundle.warnings.push_back("label " + s + " skipped: single class");
  bundle.taxonomy = taxonomy;
  bundle.stats = stats;
  bundle.stopwords = sw.words();
  bundle.boosts = build_boost_matrix(docs, taxonomy);
  bundle.trained_at = utc_timestamp_now();
  bundle.trained_on = docs.size();
  bundle.prepare();
  return bundle;
}

}  // namespace ttpmap
