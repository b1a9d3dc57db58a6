#include "ttpmap/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "ttpmap/error.hpp"
#include "ttpmap/util.hpp"

namespace ttpmap {

nlohmann::json LinearModel::to_json() const {
  return {{"label_id", label_id},
          {"weights", encode_doubles(weights)},
          {"bias", bias},
          {"trained_on", trained_on}};
}

LinearModel LinearModel::from_json(const nlohmann::json& j) {
  try {
    LinearModel m;
    m.label_id = j.at("label_id").get<std::string>();
    m.weights = decode_doubles(j.at("weights").get<std::string>());
    m.bias = j.at("bias").get<double>();
    m.trained_on = j.value("trained_on", std::size_t{0});
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed linear model: ") + e.what());
  }
}

LinearModel train_label(const LabelId& label, std::span<const FeatureVector> features,
                        std::span<const bool> targets, std::size_t dimension,
                        const SvmOptions& options) {
  if (features.size() != targets.size()) {
    throw ConfigError("feature and target counts differ for label " + label);
  }
  if (options.c <= 0.0) throw ConfigError("regularisation parameter C must be positive");
  const auto n = features.size();
  const auto positives = static_cast<std::size_t>(std::ranges::count(targets, true));
  if (positives == 0 || positives == n) {
    throw DegenerateLabelError("label " + label + " has a single class in its training data");
  }

  LinearModel model{label, std::vector<double>(dimension, 0.0), 0.0, n};
  auto& w = model.weights;
  double& b = model.bias;
  const double c = options.c;

  std::vector<double> alpha(n, 0.0);
  std::vector<double> diag(n);
  for (std::size_t i = 0; i < n; ++i) {
    double q = 1.0;  // bias feature
    for (const auto& e : features[i].entries) {
      if (e.index < dimension) q += e.weight * e.weight;
    }
    diag[i] = q;
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(derive_seed(options.seed, label));

  for (std::size_t epoch = 0; epoch < options.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double max_pg = -std::numeric_limits<double>::infinity();
    double min_pg = std::numeric_limits<double>::infinity();
    for (const auto i : order) {
      const double y = targets[i] ? 1.0 : -1.0;
      const double g = y * (model.decision(features[i])) - 1.0;
      double pg = g;
      if (alpha[i] <= 0.0) {
        pg = std::min(g, 0.0);
      } else if (alpha[i] >= c) {
        pg = std::max(g, 0.0);
      }
      max_pg = std::max(max_pg, pg);
      min_pg = std::min(min_pg, pg);
      if (std::abs(pg) <= 1e-15) continue;
      const double old = alpha[i];
      alpha[i] = std::clamp(old - g / diag[i], 0.0, c);
      const double delta = (alpha[i] - old) * y;
      if (delta == 0.0) continue;
      for (const auto& e : features[i].entries) {
        if (e.index < dimension) w[e.index] += delta * e.weight;
      }
      b += delta;
    }
    if (max_pg - min_pg <= options.tolerance) break;
  }
  return model;
}

double hinge_objective(const LinearModel& model, std::span<const FeatureVector> features,
                       std::span<const bool> targets, double c) {
  double reg = model.bias * model.bias;
  for (double v : model.weights) reg += v * v;
  double loss = 0.0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const double y = targets[i] ? 1.0 : -1.0;
    loss += std::max(0.0, 1.0 - y * model.decision(features[i]));
  }
  return 0.5 * reg + c * loss;
}

nlohmann::json ResamplingPolicy::to_json() const {
  return {{"enabled", enabled},
          {"tactic_pos", tactic_pos},
          {"tactic_neg", tactic_neg},
          {"technique_pos", technique_pos},
          {"technique_neg", technique_neg}};
}

ResamplingPolicy ResamplingPolicy::from_json(const nlohmann::json& j) {
  ResamplingPolicy p;
  p.enabled = j.value("enabled", p.enabled);
  p.tactic_pos = j.value("tactic_pos", p.tactic_pos);
  p.tactic_neg = j.value("tactic_neg", p.tactic_neg);
  p.technique_pos = j.value("technique_pos", p.technique_pos);
  p.technique_neg = j.value("technique_neg", p.technique_neg);
  if (p.enabled && (p.tactic_pos == 0 || p.tactic_neg == 0 || p.technique_pos == 0 ||
                    p.technique_neg == 0)) {
    throw ConfigError("resampling counts must be positive");
  }
  return p;
}

std::vector<std::size_t> resample(std::span<const bool> targets, std::size_t n_pos,
                                  std::size_t n_neg, std::uint64_t seed) {
  if (n_pos == 0 || n_neg == 0) throw ConfigError("resampling counts must be positive");
  std::vector<std::size_t> pos;
  std::vector<std::size_t> neg;
  for (std::size_t i = 0; i < targets.size(); ++i) (targets[i] ? pos : neg).push_back(i);
  if (pos.empty()) throw DegenerateLabelError("cannot resample without positive examples");
  if (neg.empty()) throw DegenerateLabelError("cannot resample without negative examples");

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> out;
  out.reserve(n_pos + n_neg);
  std::uniform_int_distribution<std::size_t> pick_pos(0, pos.size() - 1);
  for (std::size_t k = 0; k < n_pos; ++k) out.push_back(pos[pick_pos(rng)]);
  std::uniform_int_distribution<std::size_t> pick_neg(0, neg.size() - 1);
  for (std::size_t k = 0; k < n_neg; ++k) out.push_back(neg[pick_neg(rng)]);
  return out;
}

double scale(double raw_score) { return std::clamp((raw_score + 1.0) / 2.0, 0.0, 1.0); }

Prediction make_prediction(const LabelId& label, double raw_score) {
  const double confidence = scale(raw_score);
  return {label, raw_score, confidence, confidence >= kDecisionThreshold};
}

Prediction* PredictionSet::find(const LabelId& id) {
  for (auto* list : {&tactics, &techniques}) {
    for (auto& p : *list) {
      if (p.label_id == id) return &p;
    }
  }
  return nullptr;
}

const Prediction* PredictionSet::find(const LabelId& id) const {
  return const_cast<PredictionSet*>(this)->find(id);
}

LabelSet PredictionSet::decided_tactics() const {
  LabelSet out;
  for (const auto& p : tactics) {
    if (p.decided) out.insert(p.label_id);
  }
  return out;
}

LabelSet PredictionSet::decided_techniques() const {
  LabelSet out;
  for (const auto& p : techniques) {
    if (p.decided) out.insert(p.label_id);
  }
  return out;
}

nlohmann::json PredictionSet::to_json() const {
  auto list = [](const std::vector<Prediction>& ps) {
    auto arr = nlohmann::json::array();
    for (const auto& p : ps) {
      arr.push_back({{"label_id", p.label_id},
                     {"raw_score", p.raw_score},
                     {"confidence", p.confidence},
                     {"decided", p.decided}});
    }
    return arr;
  };
  return {{"doc_id", doc_id}, {"tactics", list(tactics)}, {"techniques", list(techniques)}};
}

FeatureVector augment_with_tactics(const FeatureVector& text, std::size_t text_dimension,
                                   std::span<const double> tactic_confidences,
                                   std::size_t expected_tactics) {
  if (tactic_confidences.size() != expected_tactics) {
    throw ConfigError("expected " + std::to_string(expected_tactics) + " tactic confidences, got " +
                      std::to_string(tactic_confidences.size()));
  }
  FeatureVector out;
  out.entries.reserve(text.entries.size() + expected_tactics);
  for (const auto& e : text.entries) {
    if (e.index >= text_dimension) throw ConfigError("text feature index out of range");
    out.entries.push_back(e);
  }
  for (std::size_t k = 0; k < expected_tactics; ++k) {
    out.entries.push_back({static_cast<std::uint32_t>(text_dimension + k), tactic_confidences[k]});
  }
  return out;
}

}  // namespace ttpmap
