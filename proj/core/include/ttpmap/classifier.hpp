#pragma once

#include <cstddef>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ttpmap/attack_kb.hpp"
#include "ttpmap/features.hpp"

namespace ttpmap {

/// f(x) = w . x + b for one label.
struct LinearModel {
  LabelId label_id;
  std::vector<double> weights;
  double bias = 0.0;
  std::size_t trained_on = 0;

  double decision(const FeatureVector& x) const { return x.dot(weights) + bias; }

  nlohmann::json to_json() const;
  static LinearModel from_json(const nlohmann::json& j);
  bool operator==(const LinearModel&) const = default;
};

struct SvmOptions {
  double c = 1.0;              // inverse regularisation strength
  double tolerance = 1e-6;     // projected-gradient spread at which to stop
  std::size_t max_epochs = 1000;
  std::uint64_t seed = 42;
};

/// Trains an L2-regularised hinge-loss linear classifier by dual coordinate
/// descent:
///
///   min_w,b  0.5 * (|w|^2 + b^2) + C * sum_i max(0, 1 - y_i (w . x_i + b))
///
/// The bias is an extra constant feature of value 1 and is regularised with the
/// weights. `dimension` is the length of the weight vector; feature indices at or
/// beyond it are ignored. Throws DegenerateLabelError when `targets` has only
/// one class.
LinearModel train_label(const LabelId& label, std::span<const FeatureVector> features,
                        std::span<const bool> targets, std::size_t dimension,
                        const SvmOptions& options = {});

/// Primal objective of `model` on the data, as minimised by train_label.
double hinge_objective(const LinearModel& model, std::span<const FeatureVector> features,
                       std::span<const bool> targets, double c);

/// Per-label-family resampling targets for class rebalancing.
struct ResamplingPolicy {
  bool enabled = false;
  std::size_t tactic_pos = 400;
  std::size_t tactic_neg = 400;
  std::size_t technique_pos = 125;
  std::size_t technique_neg = 500;

  nlohmann::json to_json() const;
  static ResamplingPolicy from_json(const nlohmann::json& j);
};

/// Draws `n_pos` positive and `n_neg` negative row indices with replacement,
/// positives first. Throws DegenerateLabelError when either class is absent and
/// ConfigError when a requested count is zero.
std::vector<std::size_t> resample(std::span<const bool> targets, std::size_t n_pos,
                                  std::size_t n_neg, std::uint64_t seed);

/// Min-max scaling of a decision score with min -1 and max 1, clamped to [0, 1].
double scale(double raw_score);

inline constexpr double kDecisionThreshold = 0.5;

struct Prediction {
  LabelId label_id;
  double raw_score = 0.0;
  double confidence = 0.0;
  bool decided = false;

  bool operator==(const Prediction&) const = default;
};

/// A prediction for a raw decision score: confidence = scale(raw),
/// decided = confidence >= 0.5.
Prediction make_prediction(const LabelId& label, double raw_score);

struct PredictionSet {
  std::string doc_id;
  std::vector<Prediction> tactics;
  std::vector<Prediction> techniques;

  Prediction* find(const LabelId& id);
  const Prediction* find(const LabelId& id) const;
  LabelSet decided_tactics() const;
  LabelSet decided_techniques() const;

  nlohmann::json to_json() const;
  bool operator==(const PredictionSet&) const = default;
};

/// Appends tactic confidences after the text features: tactic k becomes feature
/// `text_dimension + k`. Throws ConfigError when `tactic_confidences` does not
/// hold `expected_tactics` values or a text index is out of range.
FeatureVector augment_with_tactics(const FeatureVector& text, std::size_t text_dimension,
                                   std::span<const double> tactic_confidences,
                                   std::size_t expected_tactics);

}  // namespace ttpmap
