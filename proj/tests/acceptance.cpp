// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Tolerances and sizes are pinned here; see README for what each line checks.

#include <httplib.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <future>
#include <random>
#include <sstream>
#include <string>
#include <thread>

#include "oracles.hpp"
#include "test_support.hpp"
#include "ttpmap/error.hpp"
#include "ttpmap/evaluate.hpp"
#include "ttpmap/postprocess.hpp"
#include "ttpmap/stix_export.hpp"
#include "ttpmap/training.hpp"
#include "ttpmap/util.hpp"
#include "ttpmap_app/service.hpp"

using namespace ttpmap;
using nlohmann::json;

namespace {

constexpr double kMetricTol = 1e-12;
constexpr double kMetricsSeconds = 5.0;
constexpr double kSyntheticSeconds = 60.0;
constexpr double kTacticTarget = 0.90;
constexpr double kTechniqueTarget = 0.80;

struct Outcome {
  bool pass;
  std::string detail;
};

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Prediction conf(const LabelId& id, double c) { return {id, 2 * c - 1, c, c >= kDecisionThreshold}; }

LabelSet random_subset(std::mt19937& rng, const std::vector<LabelId>& labels, double p) {
  std::bernoulli_distribution keep(p);
  LabelSet out;
  for (const auto& l : labels) {
    if (keep(rng)) out.insert(l);
  }
  return out;
}

double max_gap(const MetricsReport& a, const MetricsReport& b) {
  return std::max({std::abs(a.micro_precision - b.micro_precision), std::abs(a.micro_recall - b.micro_recall),
                   std::abs(a.micro_f05 - b.micro_f05), std::abs(a.macro_precision - b.macro_precision),
                   std::abs(a.macro_recall - b.macro_recall), std::abs(a.macro_f05 - b.macro_f05)});
}

// ---------------------------------------------------------------------------

Outcome metrics_oracle() {
  std::vector<LabelId> labels;
  for (int i = 0; i < 20; ++i) labels.push_back(fx::word("lab", i));
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> density(0.0, 0.5);
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (int instance = 0; instance < 1000; ++instance) {
    const std::size_t docs = 1 + rng() % 40;
    std::vector<LabelSet> gold, pred;
    for (std::size_t d = 0; d < docs; ++d) {
      gold.push_back(random_subset(rng, labels, density(rng)));
      pred.push_back(random_subset(rng, labels, density(rng)));
    }
    worst = std::max(worst, max_gap(score(gold, pred, labels), oracle::score(gold, pred, labels)));
  }
  const double secs = seconds_since(t0);
  return {worst <= kMetricTol && secs < kMetricsSeconds,
          fmt("1000 instances x 20 labels, max |diff| %.3g (tol %.0e), %.2f s (limit %.0f s)", worst, kMetricTol, secs,
              kMetricsSeconds)};
}

Outcome f_beta_spots() {
  const double one = f_beta(1.0, 1.0);
  const double spot = f_beta(2.0 / 3.0, 0.5);
  return {one == 1.0 && std::abs(spot - 0.625) <= kMetricTol,
          fmt("f(1,1) = %.17g (exact 1), f(2/3,1/2) = %.17g (0.625 +- %.0e)", one, spot, kMetricTol)};
}

Outcome direct_mapping_perfect() {
  bool ok = true;
  int datasets = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    fx::SyntheticOptions o;
    o.seed = seed;
    o.docs = 100;
    auto corpus = fx::make_corpus_over(fx::make_taxonomy(4 + seed % 4, 12 + seed % 9, 1 + seed % 3), o);
    std::vector<LabelSet> gold, pred;
    LabelSet present;
    for (const auto& d : corpus.docs) {
      PredictionSet p;
      for (const auto& t : corpus.taxonomy.tactics()) p.tactics.push_back(conf(t.id, 0.0));
      for (const auto& t : corpus.taxonomy.techniques()) {
        p.techniques.push_back(conf(t.id, d.technique_labels.contains(t.id) ? 1.0 : 0.0));
      }
      gold.push_back(d.tactic_labels);
      pred.push_back(direct_mapping(p, corpus.taxonomy).decided_tactics());
      present.insert(d.tactic_labels.begin(), d.tactic_labels.end());
    }
    const std::vector<LabelId> labels(present.begin(), present.end());
    const auto r = score(gold, pred, labels);
    ok = ok && r.micro_precision == 1.0 && r.micro_recall == 1.0 && r.micro_f05 == 1.0 &&
         r.macro_precision == 1.0 && r.macro_recall == 1.0 && r.macro_f05 == 1.0;
    ++datasets;
  }
  return {ok, fmt("%d synthetic datasets, all six tactic metrics exactly 1", datasets)};
}

Outcome hanging_node_oracle() {
  const auto tax = fx::make_taxonomy(3, 6, 2);
  const HangingNodeConfig cfg;
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int mismatches = 0;
  for (int i = 0; i < 10000; ++i) {
    PredictionSet p;
    for (const auto& t : tax.tactics()) p.tactics.push_back(conf(t.id, u(rng)));
    for (const auto& t : tax.techniques()) p.techniques.push_back(conf(t.id, u(rng)));
    const auto out = hanging_node(p, cfg, tax);
    const auto [ta, te] = oracle::hanging_node(p, tax, cfg.th, cfg.a, cfg.b, cfg.c, cfg.d);
    if (out.decided_tactics() != ta || out.decided_techniques() != te) ++mismatches;
  }
  return {mismatches == 0, fmt("10000 assignments over 3 tactics / 6 techniques, %d mismatches", mismatches)};
}

Outcome edmonds_oracle() {
  std::mt19937 rng(5);
  int stats_bad = 0;
  for (int sample = 0; sample < 200; ++sample) {
    const auto s = fx::random_stats(rng, 2 + rng() % 4, 1 + rng() % 6);
    if (!(oracle::branching_weight(build_branching(s), s) == oracle::brute_force_stats_branching(s))) ++stats_bad;
  }
  std::uniform_real_distribution<double> w(0.01, 1.0);
  int graph_bad = 0;
  for (int sample = 0; sample < 200; ++sample) {
    const std::size_t n = 1 + rng() % 5;
    std::vector<WeightedEdge> edges;
    std::vector<oracle::Edge> copy;
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = 0; b < n; ++b) {
        if (a == b || rng() % 3 == 0) continue;
        const double x = w(rng);
        edges.push_back({a, b, x});
        copy.push_back({a, b, x});
      }
    }
    std::vector<double> chosen;
    for (auto k : maximum_branching(n, edges)) chosen.push_back(edges[k].weight);
    if (oracle::sorted_sum(chosen) != oracle::brute_force_branching(n, copy)) ++graph_bad;
  }
  return {stats_bad == 0 && graph_bad == 0,
          fmt("200 association graphs (exact rationals) + 200 weighted digraphs, <= 5 nodes: %d + %d mismatches",
              stats_bad, graph_bad)};
}

Outcome knapsack_oracle() {
  std::mt19937 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int bad = 0, largest = 0;
  for (int sample = 0; sample < 200; ++sample) {
    const std::size_t n = 2 + rng() % 12;  // at most 12 undecided candidates
    const auto stats = fx::random_stats(rng, n, 3 + rng() % 8);
    PredictionSet p;
    p.techniques.push_back(conf("T1001", 0.6 + 0.4 * u(rng)));
    for (std::size_t i = 1; i < n; ++i) {
      p.techniques.push_back(conf("T" + std::to_string(1001 + i), u(rng) < 0.2 ? 0.5 + 0.5 * u(rng) : 0.5 * u(rng)));
    }
    const KnapsackConfig cfg{rng() % 6, 0.05 + 0.3 * u(rng)};
    const auto items = knapsack_candidates(p, stats, cfg);
    largest = std::max<int>(largest, static_cast<int>(items.size()));
    const auto out = knapsack_extend(p, stats, cfg);
    const auto before = p.decided_techniques();
    const auto after = out.decided_techniques();
    double value = 0.0;
    std::vector<double> values;
    for (const auto& it : items) {
      values.push_back(it.value);
      if (after.contains(it.label)) value += it.value;
    }
    std::size_t added = 0;
    for (const auto& t : after) added += before.contains(t) ? 0 : 1;
    if (value != oracle::exhaustive_knapsack(values, cfg.capacity) || added > cfg.capacity) ++bad;
  }
  return {bad == 0, fmt("200 instances, up to %d candidates, %d mismatches", largest, bad)};
}

Outcome synthetic_end_to_end() {
  const auto t0 = Clock::now();
  const auto corpus = fx::make_synthetic_corpus();  // 200 docs, 5 tactics, 20 techniques, 3 keys, seed 42
  TrainConfig cfg;
  cfg.folds = 5;
  cfg.seed = 42;
  const auto sel = auto_select(corpus.docs, corpus.taxonomy, fx::stats_from_docs(corpus.docs, corpus.taxonomy), cfg);
  const double secs = seconds_since(t0);
  const double ta = sel.cv.tactics.macro_f05;
  const double te = sel.cv.techniques.macro_f05;
  return {ta >= kTacticTarget && te >= kTechniqueTarget && secs < kSyntheticSeconds,
          fmt("5-fold CV (%s): tactics macro F0.5 %.4f (>= %.2f), techniques %.4f (>= %.2f), %.1f s (limit %.0f s)",
              to_string(sel.strategy).c_str(), ta, kTacticTarget, te, kTechniqueTarget, secs, kSyntheticSeconds)};
}

Outcome majority_baseline_analytic() {
  // Skewed prevalence: technique k appears with probability 0.7 * 0.6^k.
  const auto tax = fx::make_taxonomy(3, 8);
  std::mt19937 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<LabeledDocument> docs;
  for (int d = 0; d < 437; ++d) {
    LabeledDocument doc;
    double p = 0.7;
    for (const auto& t : tax.techniques()) {
      if (u(rng) < p) doc.technique_labels.insert(t.id);
      p *= 0.6;
    }
    doc.tactic_labels = tax.implied_tactics(doc.technique_labels);
    doc.document = {fx::word("doc", d), "synthetic", "text"};
    docs.push_back(doc);
  }
  TrainConfig cfg;
  const auto cv = cross_validate_baseline(docs, tax, cfg);

  // Analytic: per fold, the most frequent training technique (ties: smallest
  // id) is predicted for every test document; precision = hits / predictions.
  std::size_t hits = 0, predictions = 0;
  for (std::size_t f = 0; f < cfg.folds; ++f) {
    std::map<LabelId, std::size_t> freq;
    for (std::size_t i = 0; i < docs.size(); ++i) {
      if (cv.fold_of[i] == f) continue;
      for (const auto& t : docs[i].technique_labels) ++freq[t];
    }
    LabelId best;
    std::size_t best_n = 0;
    for (const auto& [id, n] : freq) {
      if (n > best_n) best = id, best_n = n;
    }
    for (std::size_t i = 0; i < docs.size(); ++i) {
      if (cv.fold_of[i] != f) continue;
      ++predictions;
      hits += docs[i].technique_labels.contains(best) ? 1 : 0;
    }
  }
  const double expected = static_cast<double>(hits) / static_cast<double>(predictions);
  const double got = cv.techniques.micro_precision;
  return {std::abs(got - expected) <= kMetricTol,
          fmt("437 skewed docs, 5 folds: micro precision %.15f vs %zu/%zu = %.15f (tol %.0e)", got, hits, predictions,
              expected, kMetricTol)};
}

Outcome stix_round_trip() {
  const auto tax = load_taxonomy((fx::data_dir() / "attack_fixture.json").string());
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int bad_refs = 0, unstable = 0;
  for (int sample = 0; sample < 100; ++sample) {
    PredictionSet p;
    p.doc_id = fx::word("doc", sample);
    std::set<std::string> expected;
    for (const auto& t : tax.tactics()) {
      p.tactics.push_back(conf(t.id, u(rng)));
      if (p.tactics.back().decided) expected.insert(t.stix_id);
    }
    for (const auto& t : tax.techniques()) {
      p.techniques.push_back(conf(t.id, u(rng)));
      if (p.techniques.back().decided) expected.insert(t.stix_id);
    }
    const Document doc{p.doc_id, "acceptance", "Report body " + std::to_string(sample)};
    const auto first = export_stix(p, doc, tax, "Report " + std::to_string(sample), "2024-03-01T00:00:00.000Z");
    const auto second = export_stix(p, doc, tax, "Report " + std::to_string(sample), "2024-03-01T00:00:00.000Z");
    const auto refs = parse_object_refs(json::parse(first.dump()));
    if (std::set<std::string>(refs.begin(), refs.end()) != expected || refs.size() != expected.size()) ++bad_refs;
    if (first.dump() != second.dump()) ++unstable;
  }
  return {bad_refs == 0 && unstable == 0,
          fmt("100 exports: %d object_refs mismatches, %d byte differences on re-export", bad_refs, unstable)};
}

// Service mounted on an ephemeral loopback port.
class LiveServer {
 public:
  explicit LiveServer(app::Service& service) {
    service.mount(server_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~LiveServer() {
    server_.stop();
    thread_.join();
  }
  httplib::Client client() const { return httplib::Client("127.0.0.1", port_); }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

Outcome service_contract() {
  fx::SyntheticOptions o;
  o.docs = 100;
  const auto corpus = fx::make_corpus_over(load_taxonomy((fx::data_dir() / "attack_fixture.json").string()), o);
  TrainConfig cfg;
  cfg.auto_select = false;
  cfg.folds = 3;
  const auto bundle = train_bundle(corpus.docs, corpus.taxonomy, fx::stats_from_docs(corpus.docs, corpus.taxonomy), cfg);

  fx::TempDir dir;
  std::promise<void> gate;
  std::shared_future<void> opened = gate.get_future().share();
  app::ServiceOptions opts;
  opts.store_path = dir / "store.jsonl";
  opts.trainer = [&bundle, opened](auto, auto&, auto&, auto&) {
    opened.wait();
    return bundle;
  };
  app::Service service(bundle, opts);
  LiveServer live(service);
  std::vector<std::string> failures;
  auto check = [&](bool cond, const std::string& what) {
    if (!cond) failures.push_back(what);
  };

  auto res = live.client().Post("/api/predict", json{{"text", corpus.docs[0].document.text}}.dump(), "application/json");
  bool schema = res && res->status == 200;
  if (schema) {
    const auto j = json::parse(res->body);
    schema = j.contains("model_version") && j["tactics"].is_array() && j["techniques"].is_array();
    for (const auto* scope : {"tactics", "techniques"}) {
      for (const auto& p : j[scope]) {
        schema = schema && p["label_id"].is_string() && p["name"].is_string() && p["decided"].is_boolean() &&
                 p["confidence"].get<double>() >= 0.0 && p["confidence"].get<double>() <= 1.0;
      }
    }
  }
  check(schema, "predict 200 + schema");
  check(live.client().Post("/api/predict", "{oops", "application/json")->status == 400, "predict bad JSON 400");

  res = live.client().Post("/api/feedback", R"({"text": "report", "techniques": ["T9999"]})", "application/json");
  check(res && res->status == 422, "feedback unknown label 422");
  res = live.client().Post("/api/feedback", R"({"text": "phishing attachment", "techniques": ["T1566"]})",
                           "application/json");
  check(res && res->status == 201, "feedback 201");
  check(TrainingStore::read(dir / "store.jsonl").size() == 1, "feedback durable on disk at 201");
  res = live.client().Post("/api/feedback", R"({"text": "phishing attachment", "techniques": ["T1566"]})",
                           "application/json");
  check(res && res->status == 409, "duplicate feedback 409");

  auto a = std::async(std::launch::async, [&] { return live.client().Post("/api/retrain")->status; });
  auto b = std::async(std::launch::async, [&] { return live.client().Post("/api/retrain")->status; });
  std::vector<int> statuses{a.get(), b.get()};
  std::sort(statuses.begin(), statuses.end());
  check(statuses == std::vector<int>{202, 409}, "concurrent retrain 202 + 409");
  gate.set_value();
  service.wait_for_retrain();
  check(live.client().Post("/api/retrain")->status == 202, "retrain after completion 202");
  service.wait_for_retrain();

  std::string detail = "predict, feedback (422/201/409, durable), single-flight retrain";
  for (const auto& f : failures) detail += "; failed: " + f;
  return {failures.empty(), detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"metrics oracle", metrics_oracle},
      {"f-beta spot values", f_beta_spots},
      {"direct-mapping perfection", direct_mapping_perfect},
      {"hanging-node oracle", hanging_node_oracle},
      {"branching oracle", edmonds_oracle},
      {"knapsack oracle", knapsack_oracle},
      {"synthetic end-to-end", synthetic_end_to_end},
      {"majority baseline analytic", majority_baseline_analytic},
      {"stix round-trip", stix_round_trip},
      {"service contract", service_contract},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::printf("%s %2zu %-28s %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
