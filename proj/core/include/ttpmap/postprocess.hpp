#pragma once

#include <cstddef>
#include <map>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ttpmap/attack_kb.hpp"
#include "ttpmap/classifier.hpp"
#include "ttpmap/ingest.hpp"

namespace ttpmap {

enum class Strategy {
  None,
  HangingNode,
  ConfidencePropagation,
  RareRules,
  Steiner,
  Knapsack,
  DirectMapping,
  TacticsAsFeatures,
};

/// Command-line spelling, e.g. "hanging-node".
std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& name);
std::vector<Strategy> all_strategies();

/// Thresholds of the hanging-node repair. Must satisfy b < d < th < a < c.
struct HangingNodeConfig {
  double th = 0.5;
  double a = 0.55;
  double b = 0.05;
  double c = 0.95;
  double d = 0.30;

  void validate() const;
};

struct RareRulesConfig {
  double variance_cutoff = 0.05;
};

struct SteinerConfig {
  std::size_t k = 15;
};

struct KnapsackConfig {
  std::size_t capacity = 3;
  double penalty = 0.1;
};

struct PostprocessConfig {
  Strategy strategy = Strategy::HangingNode;
  HangingNodeConfig hanging;
  RareRulesConfig rare;
  SteinerConfig steiner;
  KnapsackConfig knapsack;

  nlohmann::json to_json() const;
  static PostprocessConfig from_json(const nlohmann::json& j);
};

/// boost(technique, tactic) for member pairs only.
struct BoostMatrix {
  std::map<std::pair<LabelId, LabelId>, double> factors;

  double get(const LabelId& technique, const LabelId& tactic) const;
  nlohmann::json to_json() const;
  static BoostMatrix from_json(const nlohmann::json& j);
  bool operator==(const BoostMatrix&) const = default;
};

/// boost(t, tau) = #docs labelled t and tau / #docs labelled tau, for every
/// technique t and member tactic tau with at least one such document.
BoostMatrix build_boost_matrix(std::span<const LabeledDocument> docs, const Taxonomy& taxonomy);

struct RuleSet {
  std::vector<std::pair<LabelId, LabelId>> pairs;  // (smaller id, larger id)
  double threshold = 0.0;
};

struct BranchEdge {
  LabelId source;
  LabelId target;
  double weight = 0.0;

  bool operator==(const BranchEdge&) const = default;
};

/// Forest of technique -> technique edges (in-degree <= 1, acyclic).
struct Branching {
  std::vector<BranchEdge> edges;
};

/// Per-training-set data the strategies need, built once and reused per document.
struct PostprocessArtifacts {
  BoostMatrix boosts;
  RuleSet rules;
  Branching branching;
};

PostprocessArtifacts build_artifacts(std::span<const LabeledDocument> docs, const Taxonomy& taxonomy,
                                     const AssociationStats& stats, const PostprocessConfig& config);

// --- tactic/technique relationships ---------------------------------------

/// Decided tactics become exactly the member tactics of decided techniques
/// (restricted to tactics present in `pred`). Techniques are untouched.
PredictionSet direct_mapping(const PredictionSet& pred, const Taxonomy& taxonomy);

/// conf'(t) = clamp(conf(t) + sum_tau boost(t, tau) * conf(tau), 0, 1); technique
/// decisions are recomputed at 0.5, tactics are untouched.
PredictionSet confidence_propagation(const PredictionSet& pred, const BoostMatrix& boosts);

/// For each member pair (technique, tactic), judged on the incoming confidences:
/// conf(te) > a and b < conf(ta) < th adds the tactic; th < conf(te) < c and
/// conf(ta) < d removes the technique. Confidences are never modified.
PredictionSet hanging_node(const PredictionSet& pred, const HangingNodeConfig& config,
                           const Taxonomy& taxonomy);

// --- technique/technique relationships ------------------------------------

/// 0.5 * (joint / support(i) + joint / support(j)); 0 if either support is 0.
double kulczynski(const AssociationStats& stats, const LabelId& i, const LabelId& j);

/// Threshold selection over the sorted curve of non-zero Kulczynski values:
/// low variance uses curve minimum + median of neighbour differences, high
/// variance uses the mean of the values strictly below the curve mean. Fewer
/// than two non-zero pairs give an empty rule set.
RuleSet build_rare_rules(const AssociationStats& stats, const RareRulesConfig& config = {});

/// For each rule with exactly one decided side, decides the other side with
/// confidence max(own, partner). Never removes a label.
PredictionSet apply_rules(const PredictionSet& pred, const RuleSet& rules);

struct WeightedEdge {
  std::size_t from;
  std::size_t to;
  double weight;
};

/// Maximum-weight branching (Edmonds). Returns indices into `edges`. Edges with
/// non-positive weight and self-loops are never selected.
std::vector<std::size_t> maximum_branching(std::size_t node_count, std::span<const WeightedEdge> edges);

/// One candidate edge per technique pair with joint > 0, pointing i -> j when
/// p(i|j) <= p(j|i) (ties: smaller id is the source), weighted by p(target|source);
/// reduced to a maximum-weight branching.
Branching build_branching(const AssociationStats& stats);

/// Adds the K branching descendants of decided techniques with the heaviest
/// entering edges. Added labels get confidence max(current, edge weight).
PredictionSet steiner_extend(const PredictionSet& pred, const Branching& branching,
                             const SteinerConfig& config);

struct KnapsackItem {
  LabelId label;
  double value;
};

/// Undecided techniques with joint > 0 to a decided technique, valued
/// sum_j ln(1 + p(candidate | j)) - penalty over decided j. Sorted by label.
std::vector<KnapsackItem> knapsack_candidates(const PredictionSet& pred, const AssociationStats& stats,
                                              const KnapsackConfig& config);

/// Exact 0-1 knapsack by dynamic programming. Returns chosen item indices in
/// ascending order; zero- and negative-value items are never chosen.
std::vector<std::size_t> solve_knapsack(std::span<const double> values,
                                        std::span<const std::size_t> weights, std::size_t capacity);

/// Decides the knapsack-optimal subset of knapsack_candidates (unit weights).
PredictionSet knapsack_extend(const PredictionSet& pred, const AssociationStats& stats,
                              const KnapsackConfig& config);

/// Applies `config.strategy`. None and TacticsAsFeatures return `pred` as is
/// (the latter acts at training time).
PredictionSet apply_strategy(const PredictionSet& pred, const PostprocessConfig& config,
                             const Taxonomy& taxonomy, const AssociationStats& stats,
                             const PostprocessArtifacts& artifacts);

}  // namespace ttpmap
