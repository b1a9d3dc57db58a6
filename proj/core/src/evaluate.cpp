#include "ttpmap/evaluate.hpp"

#include <algorithm>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "ttpmap/error.hpp"

namespace ttpmap {
namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

MetricCounts& MetricCounts::operator+=(const MetricCounts& other) {
  if (labels.empty() && counts.empty()) {
    *this = other;
    return *this;
  }
  if (labels != other.labels) throw ConfigError("cannot add counts over different label lists");
  for (std::size_t i = 0; i < counts.size(); ++i) {
    counts[i].tp += other.counts[i].tp;
    counts[i].fp += other.counts[i].fp;
    counts[i].fn += other.counts[i].fn;
  }
  return *this;
}

nlohmann::json MetricsReport::to_json() const {
  return {{"micro_precision", micro_precision}, {"micro_recall", micro_recall},
          {"micro_f05", micro_f05},             {"macro_precision", macro_precision},
          {"macro_recall", macro_recall},       {"macro_f05", macro_f05}};
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.micro_precision = j.value("micro_precision", 0.0);
  r.micro_recall = j.value("micro_recall", 0.0);
  r.micro_f05 = j.value("micro_f05", 0.0);
  r.macro_precision = j.value("macro_precision", 0.0);
  r.macro_recall = j.value("macro_recall", 0.0);
  r.macro_f05 = j.value("macro_f05", 0.0);
  return r;
}

double f_beta(double precision, double recall, double beta) {
  const double b2 = beta * beta;
  const double den = b2 * precision + recall;
  if (den == 0.0) return 0.0;
  return (1.0 + b2) * precision * recall / den;
}

MetricCounts count_labels(std::span<const LabelSet> gold, std::span<const LabelSet> pred,
                          std::span<const LabelId> labels) {
  if (gold.size() != pred.size()) throw ConfigError("gold and predicted document counts differ");
  MetricCounts out;
  out.labels.assign(labels.begin(), labels.end());
  out.counts.assign(labels.size(), {});
  std::map<LabelId, std::size_t> index;
  for (std::size_t i = 0; i < labels.size(); ++i) index.emplace(labels[i], i);

  for (std::size_t d = 0; d < gold.size(); ++d) {
    for (const auto& p : pred[d]) {
      const auto it = index.find(p);
      if (it == index.end()) throw ConfigError("predicted label " + p + " is not in the label list");
      if (gold[d].contains(p)) {
        ++out.counts[it->second].tp;
      } else {
        ++out.counts[it->second].fp;
      }
    }
    for (const auto& g : gold[d]) {
      const auto it = index.find(g);
      if (it != index.end() && !pred[d].contains(g)) ++out.counts[it->second].fn;
    }
  }
  return out;
}

MetricsReport report_from_counts(const MetricCounts& counts) {
  MetricsReport r;
  LabelCounts total;
  double sum_p = 0.0;
  double sum_r = 0.0;
  double sum_f = 0.0;
  for (const auto& c : counts.counts) {
    total.tp += c.tp;
    total.fp += c.fp;
    total.fn += c.fn;
    const double p = ratio(c.tp, c.tp + c.fp);
    const double rc = ratio(c.tp, c.tp + c.fn);
    sum_p += p;
    sum_r += rc;
    sum_f += f_beta(p, rc);
  }
  r.micro_precision = ratio(total.tp, total.tp + total.fp);
  r.micro_recall = ratio(total.tp, total.tp + total.fn);
  r.micro_f05 = f_beta(r.micro_precision, r.micro_recall);
  if (!counts.counts.empty()) {
    const double n = static_cast<double>(counts.counts.size());
    r.macro_precision = sum_p / n;
    r.macro_recall = sum_r / n;
    r.macro_f05 = sum_f / n;
  }
  return r;
}

MetricsReport score(std::span<const LabelSet> gold, std::span<const LabelSet> pred,
                    std::span<const LabelId> labels) {
  return report_from_counts(count_labels(gold, pred, labels));
}

std::vector<LabelSet> majority_baseline(std::span<const LabelSet> train, std::size_t test_size) {
  std::map<LabelId, std::size_t> freq;
  for (const auto& s : train) {
    for (const auto& l : s) ++freq[l];
  }
  LabelSet guess;
  if (!freq.empty()) {
    // std::map iterates in id order, so the first maximum is the smallest id.
    const auto best = std::ranges::max_element(
        freq, [](const auto& a, const auto& b) { return a.second < b.second; });
    guess.insert(best->first);
  }
  return std::vector<LabelSet>(test_size, guess);
}

std::vector<std::size_t> assign_folds(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k == 0) throw ConfigError("fold count must be positive");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> fold(n);
  for (std::size_t pos = 0; pos < n; ++pos) fold[order[pos]] = pos % k;
  return fold;
}

void write_csv(std::ostream& out, std::span<const ComparisonRow> rows) {
  out << "strategy,scope,micro_p,micro_r,micro_f05,macro_p,macro_r,macro_f05,micro_f05_sd,macro_f05_sd\n";
  auto line = [&](const std::string& strategy, const char* scope, const MetricsReport& m,
                  double micro_sd, double macro_sd) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(6) << strategy << ',' << scope << ',' << m.micro_precision
      << ',' << m.micro_recall << ',' << m.micro_f05 << ',' << m.macro_precision << ','
      << m.macro_recall << ',' << m.macro_f05 << ',' << micro_sd << ',' << macro_sd << '\n';
    out << s.str();
  };
  for (const auto& r : rows) {
    line(r.strategy, "tactics", r.tactics, r.tactics_micro_f05_sd, r.tactics_macro_f05_sd);
    line(r.strategy, "techniques", r.techniques, r.techniques_micro_f05_sd, r.techniques_macro_f05_sd);
  }
}

void write_table(std::ostream& out, std::span<const ComparisonRow> rows) {
  std::size_t width = 8;
  for (const auto& r : rows) width = std::max(width, r.strategy.size());
  auto pct = [](double v) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(2) << 100.0 * v << '%';
    return s.str();
  };
  auto sd = [](double mean, double dev) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(2) << 100.0 * mean << "% +-" << 100.0 * dev;
    return s.str();
  };
  out << std::left << std::setw(static_cast<int>(width)) << "strategy" << "  " << std::setw(10) << "scope"
      << std::right << std::setw(9) << "micro_p" << std::setw(9) << "micro_r" << std::setw(18)
      << "micro_f05" << std::setw(9) << "macro_p" << std::setw(9) << "macro_r" << std::setw(18)
      << "macro_f05" << '\n';
  auto line = [&](const std::string& name, const char* scope, const MetricsReport& m, double micro_sd,
                  double macro_sd) {
    out << std::left << std::setw(static_cast<int>(width)) << name << "  " << std::setw(10) << scope
        << std::right << std::setw(9) << pct(m.micro_precision) << std::setw(9) << pct(m.micro_recall)
        << std::setw(18) << sd(m.micro_f05, micro_sd) << std::setw(9) << pct(m.macro_precision)
        << std::setw(9) << pct(m.macro_recall) << std::setw(18) << sd(m.macro_f05, macro_sd) << '\n';
  };
  for (const auto& r : rows) {
    line(r.strategy, "tactics", r.tactics, r.tactics_micro_f05_sd, r.tactics_macro_f05_sd);
    line(r.strategy, "techniques", r.techniques, r.techniques_micro_f05_sd, r.techniques_macro_f05_sd);
  }
}

}  // namespace ttpmap
