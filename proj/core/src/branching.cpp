#include <algorithm>
#include <limits>
#include <map>

#include "ttpmap/postprocess.hpp"

namespace ttpmap {
namespace {

constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

struct ArcEdge {
  std::size_t u;
  std::size_t v;
  double w;
  std::size_t id;
};

// Chu-Liu/Edmonds maximum spanning arborescence rooted at `root`. Every
// non-root node must have at least one entering edge. Returns the `id` of each
// chosen edge.
std::vector<std::size_t> max_arborescence(std::size_t n, std::size_t root,
                                          const std::vector<ArcEdge>& edges) {
  std::vector<std::size_t> best(n, kNone);
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const auto& e = edges[k];
    if (e.u == e.v || e.v == root) continue;
    if (best[e.v] == kNone || e.w > edges[best[e.v]].w) best[e.v] = k;
  }

  std::vector<std::size_t> comp(n, kNone);
  std::vector<std::size_t> visit(n, kNone);
  std::vector<bool> in_cycle(n, false);
  std::size_t n_comp = 0;
  for (std::size_t v = 0; v < n; ++v) {
    std::size_t x = v;
    while (x != root && visit[x] == kNone && comp[x] == kNone) {
      visit[x] = v;
      x = edges[best[x]].u;
    }
    if (x != root && visit[x] == v && comp[x] == kNone) {
      std::size_t y = x;
      do {
        comp[y] = n_comp;
        in_cycle[y] = true;
        y = edges[best[y]].u;
      } while (y != x);
      ++n_comp;
    }
  }

  if (n_comp == 0) {
    std::vector<std::size_t> out;
    for (std::size_t v = 0; v < n; ++v) {
      if (v != root) out.push_back(edges[best[v]].id);
    }
    return out;
  }

  const std::size_t n_cycles = n_comp;
  for (std::size_t v = 0; v < n; ++v) {
    if (comp[v] == kNone) comp[v] = n_comp++;
  }

  std::vector<ArcEdge> contracted;
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const auto& e = edges[k];
    const auto cu = comp[e.u];
    const auto cv = comp[e.v];
    if (cu == cv) continue;
    const double w = in_cycle[e.v] ? e.w - edges[best[e.v]].w : e.w;
    contracted.push_back({cu, cv, w, k});
  }

  const auto sub = max_arborescence(n_comp, comp[root], contracted);

  std::vector<std::size_t> entry(n_cycles, kNone);  // node where each cycle is entered
  std::vector<std::size_t> chosen;
  for (const auto k : sub) {
    chosen.push_back(k);
    if (in_cycle[edges[k].v]) entry[comp[edges[k].v]] = edges[k].v;
  }
  for (std::size_t v = 0; v < n; ++v) {
    if (in_cycle[v] && entry[comp[v]] != v) chosen.push_back(best[v]);
  }

  std::vector<std::size_t> out;
  out.reserve(chosen.size());
  for (const auto k : chosen) out.push_back(edges[k].id);
  return out;
}

}  // namespace

std::vector<std::size_t> maximum_branching(std::size_t node_count, std::span<const WeightedEdge> edges) {
  // A virtual root with zero-weight edges to every node turns the branching
  // problem into a spanning-arborescence problem.
  std::vector<ArcEdge> arcs;
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const auto& e = edges[k];
    if (e.from == e.to || e.weight <= 0.0 || e.from >= node_count || e.to >= node_count) continue;
    arcs.push_back({e.from, e.to, e.weight, k});
  }
  for (std::size_t v = 0; v < node_count; ++v) arcs.push_back({node_count, v, 0.0, kNone});

  std::vector<std::size_t> out;
  for (const auto id : max_arborescence(node_count + 1, node_count, arcs)) {
    if (id != kNone) out.push_back(id);
  }
  std::ranges::sort(out);
  return out;
}

Branching build_branching(const AssociationStats& stats) {
  std::vector<LabelId> nodes;
  std::map<LabelId, std::size_t> index;
  auto node = [&](const LabelId& id) {
    const auto [it, inserted] = index.emplace(id, nodes.size());
    if (inserted) nodes.push_back(id);
    return it->second;
  };

  std::vector<WeightedEdge> candidates;
  for (const auto& [key, joint] : stats.joint_counts) {
    if (joint == 0) continue;
    const auto& [a, b] = key;  // a < b
    const double p_a_given_b = conditional_probability(stats, a, b);
    const double p_b_given_a = conditional_probability(stats, b, a);
    if (p_a_given_b <= p_b_given_a) {
      candidates.push_back({node(a), node(b), p_b_given_a});
    } else {
      candidates.push_back({node(b), node(a), p_a_given_b});
    }
  }

  Branching out;
  for (const auto k : maximum_branching(nodes.size(), candidates)) {
    const auto& e = candidates[k];
    out.edges.push_back({nodes[e.from], nodes[e.to], e.weight});
  }
  return out;
}

PredictionSet steiner_extend(const PredictionSet& pred, const Branching& branching,
                             const SteinerConfig& config) {
  std::map<LabelId, std::vector<const BranchEdge*>> children;
  for (const auto& e : branching.edges) children[e.source].push_back(&e);

  const auto decided = pred.decided_techniques();
  std::map<LabelId, double> reached;  // descendant -> entering-edge weight
  std::vector<LabelId> stack(decided.begin(), decided.end());
  std::set<LabelId> visited(decided.begin(), decided.end());
  while (!stack.empty()) {
    const auto cur = stack.back();
    stack.pop_back();
    const auto it = children.find(cur);
    if (it == children.end()) continue;
    for (const auto* e : it->second) {
      if (!visited.insert(e->target).second) continue;
      stack.push_back(e->target);
      if (!decided.contains(e->target)) reached[e->target] = e->weight;
    }
  }

  std::vector<std::pair<LabelId, double>> ranked;
  for (const auto& [id, w] : reached) {
    if (pred.find(id) != nullptr) ranked.emplace_back(id, w);
  }
  std::ranges::stable_sort(ranked, [](const auto& x, const auto& y) { return x.second > y.second; });
  if (ranked.size() > config.k) ranked.resize(config.k);

  PredictionSet out = pred;
  for (const auto& [id, w] : ranked) {
    auto* p = out.find(id);
    p->decided = true;
    p->confidence = std::max(p->confidence, w);
  }
  return out;
}

}  // namespace ttpmap
