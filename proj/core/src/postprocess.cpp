#include "ttpmap/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ttpmap/error.hpp"

namespace ttpmap {
namespace {

const std::vector<std::pair<Strategy, const char*>> kStrategyNames = {
    {Strategy::None, "none"},
    {Strategy::HangingNode, "hanging-node"},
    {Strategy::ConfidencePropagation, "confidence-propagation"},
    {Strategy::RareRules, "rare-rules"},
    {Strategy::Steiner, "steiner"},
    {Strategy::Knapsack, "knapsack"},
    {Strategy::DirectMapping, "direct-mapping"},
    {Strategy::TacticsAsFeatures, "tactics-as-features"},
};

}  // namespace

std::string to_string(Strategy s) {
  for (const auto& [value, name] : kStrategyNames) {
    if (value == s) return name;
  }
  return "unknown";
}

Strategy strategy_from_string(const std::string& name) {
  for (const auto& [value, n] : kStrategyNames) {
    if (name == n) return value;
  }
  throw ConfigError("unknown post-processing strategy '" + name + "'");
}

std::vector<Strategy> all_strategies() {
  std::vector<Strategy> out;
  for (const auto& [value, name] : kStrategyNames) out.push_back(value);
  return out;
}

void HangingNodeConfig::validate() const {
  if (!(b < d && d < th && th < a && a < c)) {
    throw ConfigError("hanging-node thresholds must satisfy b < d < th < a < c");
  }
}

nlohmann::json PostprocessConfig::to_json() const {
  return {{"strategy", to_string(strategy)},
          {"hanging_node", {{"th", hanging.th}, {"a", hanging.a}, {"b", hanging.b}, {"c", hanging.c}, {"d", hanging.d}}},
          {"rare_rules", {{"variance_cutoff", rare.variance_cutoff}}},
          {"steiner", {{"k", steiner.k}}},
          {"knapsack", {{"capacity", knapsack.capacity}, {"penalty", knapsack.penalty}}}};
}

PostprocessConfig PostprocessConfig::from_json(const nlohmann::json& j) {
  try {
    PostprocessConfig c;
    if (j.contains("strategy")) c.strategy = strategy_from_string(j["strategy"].get<std::string>());
    if (j.contains("hanging_node")) {
      const auto& h = j["hanging_node"];
      c.hanging.th = h.value("th", c.hanging.th);
      c.hanging.a = h.value("a", c.hanging.a);
      c.hanging.b = h.value("b", c.hanging.b);
      c.hanging.c = h.value("c", c.hanging.c);
      c.hanging.d = h.value("d", c.hanging.d);
    }
    if (j.contains("rare_rules")) {
      c.rare.variance_cutoff = j["rare_rules"].value("variance_cutoff", c.rare.variance_cutoff);
    }
    if (j.contains("steiner")) c.steiner.k = j["steiner"].value("k", c.steiner.k);
    if (j.contains("knapsack")) {
      c.knapsack.capacity = j["knapsack"].value("capacity", c.knapsack.capacity);
      c.knapsack.penalty = j["knapsack"].value("penalty", c.knapsack.penalty);
    }
    c.hanging.validate();
    if (c.steiner.k == 0) throw ConfigError("steiner k must be at least 1");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed post-processing config: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

double BoostMatrix::get(const LabelId& technique, const LabelId& tactic) const {
  const auto it = factors.find({technique, tactic});
  return it == factors.end() ? 0.0 : it->second;
}

nlohmann::json BoostMatrix::to_json() const {
  auto arr = nlohmann::json::array();
  for (const auto& [key, f] : factors) arr.push_back({key.first, key.second, f});
  return arr;
}

BoostMatrix BoostMatrix::from_json(const nlohmann::json& j) {
  try {
    BoostMatrix m;
    for (const auto& e : j) m.factors[{e.at(0).get<LabelId>(), e.at(1).get<LabelId>()}] = e.at(2).get<double>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed boost matrix: ") + e.what());
  }
}

BoostMatrix build_boost_matrix(std::span<const LabeledDocument> docs, const Taxonomy& taxonomy) {
  std::map<LabelId, std::size_t> tactic_docs;
  std::map<std::pair<LabelId, LabelId>, std::size_t> together;
  for (const auto& d : docs) {
    for (const auto& ta : d.tactic_labels) ++tactic_docs[ta];
    for (const auto& te : d.technique_labels) {
      for (const auto& ta : taxonomy.tactics_of(te)) {
        if (d.tactic_labels.contains(ta)) ++together[{te, ta}];
      }
    }
  }
  BoostMatrix m;
  for (const auto& [key, count] : together) {
    m.factors[key] = static_cast<double>(count) / static_cast<double>(tactic_docs[key.second]);
  }
  return m;
}

PostprocessArtifacts build_artifacts(std::span<const LabeledDocument> docs, const Taxonomy& taxonomy,
                                     const AssociationStats& stats, const PostprocessConfig& config) {
  PostprocessArtifacts a;
  a.boosts = build_boost_matrix(docs, taxonomy);
  if (config.strategy == Strategy::RareRules) a.rules = build_rare_rules(stats, config.rare);
  if (config.strategy == Strategy::Steiner) a.branching = build_branching(stats);
  return a;
}

// ---------------------------------------------------------------------------

PredictionSet direct_mapping(const PredictionSet& pred, const Taxonomy& taxonomy) {
  PredictionSet out = pred;
  const auto implied = taxonomy.implied_tactics(pred.decided_techniques());
  for (auto& p : out.tactics) p.decided = implied.contains(p.label_id);
  return out;
}

PredictionSet confidence_propagation(const PredictionSet& pred, const BoostMatrix& boosts) {
  std::map<LabelId, double> tactic_conf;
  for (const auto& p : pred.tactics) tactic_conf[p.label_id] = p.confidence;

  std::map<LabelId, std::vector<std::pair<LabelId, double>>> by_technique;
  for (const auto& [key, f] : boosts.factors) by_technique[key.first].emplace_back(key.second, f);

  PredictionSet out = pred;
  for (auto& p : out.techniques) {
    const auto it = by_technique.find(p.label_id);
    if (it == by_technique.end()) continue;
    double boost = 0.0;
    for (const auto& [tactic, f] : it->second) {
      const auto c = tactic_conf.find(tactic);
      if (c != tactic_conf.end()) boost += f * c->second;
    }
    p.confidence = std::clamp(p.confidence + boost, 0.0, 1.0);
    p.decided = p.confidence >= kDecisionThreshold;
  }
  return out;
}

PredictionSet hanging_node(const PredictionSet& pred, const HangingNodeConfig& cfg,
                           const Taxonomy& taxonomy) {
  cfg.validate();
  std::map<LabelId, std::size_t> tactic_pos;
  for (std::size_t k = 0; k < pred.tactics.size(); ++k) tactic_pos[pred.tactics[k].label_id] = k;

  PredictionSet out = pred;
  for (std::size_t x = 0; x < pred.techniques.size(); ++x) {
    const double te = pred.techniques[x].confidence;
    for (const auto& ta_id : taxonomy.tactics_of(pred.techniques[x].label_id)) {
      const auto it = tactic_pos.find(ta_id);
      if (it == tactic_pos.end()) continue;
      const double ta = pred.tactics[it->second].confidence;
      if (te > cfg.a && cfg.b < ta && ta < cfg.th) out.tactics[it->second].decided = true;
      if (cfg.th < te && te < cfg.c && ta < cfg.d) out.techniques[x].decided = false;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

double kulczynski(const AssociationStats& stats, const LabelId& i, const LabelId& j) {
  const auto si = stats.support_of(i);
  const auto sj = stats.support_of(j);
  if (si == 0 || sj == 0) return 0.0;
  const auto joint = static_cast<double>(stats.joint(i, j));
  return 0.5 * (joint / static_cast<double>(si) + joint / static_cast<double>(sj));
}

RuleSet build_rare_rules(const AssociationStats& stats, const RareRulesConfig& config) {
  std::vector<std::pair<std::pair<LabelId, LabelId>, double>> measured;
  for (const auto& [key, joint] : stats.joint_counts) {
    const double k = kulczynski(stats, key.first, key.second);
    if (k > 0.0) measured.emplace_back(key, k);
  }
  RuleSet rules;
  if (measured.size() < 2) return rules;

  std::vector<double> curve;
  curve.reserve(measured.size());
  for (const auto& m : measured) curve.push_back(m.second);
  std::ranges::sort(curve);

  const double n = static_cast<double>(curve.size());
  const double mean = std::accumulate(curve.begin(), curve.end(), 0.0) / n;
  double variance = 0.0;
  for (double v : curve) variance += (v - mean) * (v - mean);
  variance /= n;

  if (variance < config.variance_cutoff) {
    std::vector<double> diffs;
    for (std::size_t i = 1; i < curve.size(); ++i) diffs.push_back(curve[i] - curve[i - 1]);
    std::ranges::sort(diffs);
    const auto mid = diffs.size() / 2;
    const double median = diffs.size() % 2 == 1 ? diffs[mid] : 0.5 * (diffs[mid - 1] + diffs[mid]);
    rules.threshold = curve.front() + median;
  } else {
    double sum = 0.0;
    std::size_t count = 0;
    for (double v : curve) {
      if (v < mean) {
        sum += v;
        ++count;
      }
    }
    rules.threshold = count > 0 ? sum / static_cast<double>(count) : mean;
  }

  for (const auto& [key, k] : measured) {
    if (k >= rules.threshold) rules.pairs.push_back(key);
  }
  return rules;
}

PredictionSet apply_rules(const PredictionSet& pred, const RuleSet& rules) {
  PredictionSet out = pred;
  for (const auto& [i, j] : rules.pairs) {
    const auto* pi = pred.find(i);
    const auto* pj = pred.find(j);
    if (!pi || !pj || pi->decided == pj->decided) continue;
    const auto* from = pi->decided ? pi : pj;
    auto* to = out.find(pi->decided ? j : i);
    to->decided = true;
    to->confidence = std::max(to->confidence, from->confidence);
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<KnapsackItem> knapsack_candidates(const PredictionSet& pred, const AssociationStats& stats,
                                              const KnapsackConfig& config) {
  std::vector<LabelId> decided;
  for (const auto& p : pred.techniques) {
    if (p.decided && stats.knows(p.label_id)) decided.push_back(p.label_id);
  }
  std::vector<KnapsackItem> items;
  if (decided.empty()) return items;
  for (const auto& p : pred.techniques) {
    if (p.decided || !stats.knows(p.label_id)) continue;
    bool linked = false;
    double value = 0.0;
    for (const auto& j : decided) {
      if (stats.joint(p.label_id, j) > 0) linked = true;
      value += std::log1p(conditional_probability(stats, p.label_id, j));
    }
    if (linked) items.push_back({p.label_id, value - config.penalty});
  }
  std::ranges::sort(items, {}, &KnapsackItem::label);
  return items;
}

std::vector<std::size_t> solve_knapsack(std::span<const double> values,
                                        std::span<const std::size_t> weights, std::size_t capacity) {
  if (values.size() != weights.size()) throw ConfigError("knapsack values and weights differ in length");
  const auto n = values.size();
  // best[i][c]: best value using items < i within capacity c.
  std::vector<std::vector<double>> best(n + 1, std::vector<double>(capacity + 1, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c <= capacity; ++c) {
      best[i + 1][c] = best[i][c];
      if (values[i] > 0.0 && weights[i] <= c) {
        const double with = best[i][c - weights[i]] + values[i];
        if (with > best[i + 1][c]) best[i + 1][c] = with;
      }
    }
  }
  std::vector<std::size_t> chosen;
  std::size_t c = capacity;
  for (std::size_t i = n; i-- > 0;) {
    if (best[i + 1][c] != best[i][c]) {
      chosen.push_back(i);
      c -= weights[i];
    }
  }
  std::ranges::reverse(chosen);
  return chosen;
}

PredictionSet knapsack_extend(const PredictionSet& pred, const AssociationStats& stats,
                              const KnapsackConfig& config) {
  const auto items = knapsack_candidates(pred, stats, config);
  if (items.empty() || config.capacity == 0) return pred;
  std::vector<double> values;
  for (const auto& it : items) values.push_back(it.value);
  const std::vector<std::size_t> weights(items.size(), 1);
  PredictionSet out = pred;
  for (const auto idx : solve_knapsack(values, weights, config.capacity)) {
    out.find(items[idx].label)->decided = true;
  }
  return out;
}

// ---------------------------------------------------------------------------

PredictionSet apply_strategy(const PredictionSet& pred, const PostprocessConfig& config,
                             const Taxonomy& taxonomy, const AssociationStats& stats,
                             const PostprocessArtifacts& artifacts) {
  switch (config.strategy) {
    case Strategy::None:
    case Strategy::TacticsAsFeatures:
      return pred;
    case Strategy::HangingNode:
      return hanging_node(pred, config.hanging, taxonomy);
    case Strategy::ConfidencePropagation:
      return confidence_propagation(pred, artifacts.boosts);
    case Strategy::RareRules:
      return apply_rules(pred, artifacts.rules);
    case Strategy::Steiner:
      return steiner_extend(pred, artifacts.branching, config.steiner);
    case Strategy::Knapsack:
      return knapsack_extend(pred, stats, config.knapsack);
    case Strategy::DirectMapping:
      return direct_mapping(pred, taxonomy);
  }
  return pred;
}

}  // namespace ttpmap
