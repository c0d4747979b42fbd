#pragma once

// Metric-alignment accuracies against binary labels, corpus-level pipeline
// reports with paired bootstrap significance.

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "lfrerank/core.hpp"
#include "lfrerank/error.hpp"
#include "lfrerank/random.hpp"
#include "lfrerank/selection.hpp"

namespace lfrerank {

struct ScoredLabels {
  std::vector<double> scores;
  std::vector<int> labels;
};

struct AccuracyResult {
  double value = 0.0;
  std::size_t sets_used = 0;
  std::size_t sets_excluded = 0;
  double numerator = 0.0;    // hits, or correctly ordered pairs (ties count 0.5)
  double denominator = 0.0;  // sets used, or cross-class pairs
};

namespace detail {

// Single-class sets carry no alignment signal and are skipped.
inline bool single_class(const ScoredLabels& s) {
  if (s.scores.size() != s.labels.size()) throw DataError("scores and labels differ in length");
  if (s.labels.empty()) throw DataError("empty labeled set");
  for (int l : s.labels)
    if (l != 0 && l != 1) throw DataError("labels must be 0 or 1");
  const auto ones = std::count(s.labels.begin(), s.labels.end(), 1);
  return ones == 0 || ones == static_cast<long>(s.labels.size());
}

}  // namespace detail

// Fraction of mixed-label sets whose top-scored candidate is correct. When
// several candidates tie for the top score, the set counts as a hit only if
// all of them are correct.
inline AccuracyResult top1_accuracy(std::span<const ScoredLabels> sets) {
  AccuracyResult r;
  for (const auto& s : sets) {
    if (detail::single_class(s)) {
      ++r.sets_excluded;
      continue;
    }
    ++r.sets_used;
    const double top = *std::max_element(s.scores.begin(), s.scores.end());
    bool hit = true;
    for (std::size_t i = 0; i < s.scores.size(); ++i)
      if (s.scores[i] == top && s.labels[i] != 1) hit = false;
    r.numerator += hit ? 1.0 : 0.0;
  }
  if (r.sets_used == 0) throw DataError("top1_accuracy: every set is single-class");
  r.denominator = static_cast<double>(r.sets_used);
  r.value = r.numerator / r.denominator;
  return r;
}

enum class RankingPooling {
  pooled,   // all cross-class pairs of all sets weigh equally
  per_set,  // mean of per-set pair fractions
};

// Probability that a correct candidate outscores an incorrect one; tied
// scores count one half.
inline AccuracyResult ranking_accuracy(std::span<const ScoredLabels> sets,
                                       RankingPooling pooling = RankingPooling::pooled) {
  AccuracyResult r;
  double per_set_total = 0.0;
  for (const auto& s : sets) {
    if (detail::single_class(s)) {
      ++r.sets_excluded;
      continue;
    }
    ++r.sets_used;
    double good = 0.0;
    double pairs = 0.0;
    for (std::size_t c = 0; c < s.scores.size(); ++c) {
      if (s.labels[c] != 1) continue;
      for (std::size_t i = 0; i < s.scores.size(); ++i) {
        if (s.labels[i] != 0) continue;
        pairs += 1.0;
        if (s.scores[c] > s.scores[i]) {
          good += 1.0;
        } else if (s.scores[c] == s.scores[i]) {
          good += 0.5;
        }
      }
    }
    r.numerator += good;
    r.denominator += pairs;
    per_set_total += good / pairs;
  }
  if (r.sets_used == 0) throw DataError("ranking_accuracy: no cross-class pairs");
  r.value = pooling == RankingPooling::pooled ? r.numerator / r.denominator
                                              : per_set_total / static_cast<double>(r.sets_used);
  return r;
}

struct AlignmentReport {
  std::string metric;
  double top1_accuracy = 0.0;
  double ranking_accuracy = 0.0;
  std::size_t sets_used = 0;
  std::size_t sets_excluded = 0;
};

// Joins one metric's score vectors with labels by lf_id. Sets without labels
// are ignored.
inline AlignmentReport evaluate_alignment(const std::string& metric, const std::vector<QualityTable>& scores,
                                          const std::vector<LabeledSet>& labels,
                                          RankingPooling pooling = RankingPooling::pooled) {
  std::unordered_map<std::string, const LabeledSet*> by_id;
  for (const auto& l : labels) by_id[l.lf_id] = &l;
  std::vector<ScoredLabels> joined;
  for (const auto& t : scores) {
    auto it = by_id.find(t.lf_id);
    if (it == by_id.end()) continue;
    const auto& v = metric == "combined" ? t.require_combined() : t.metric(metric);
    it->second->validate(v.size());
    joined.push_back({v, it->second->labels});
  }
  if (joined.empty()) throw DataError("no scored set has labels");
  const auto top1 = top1_accuracy(joined);
  const auto rank = ranking_accuracy(joined, pooling);
  return {metric, top1.value, rank.value, top1.sets_used, top1.sets_excluded};
}

// ---------------------------------------------------------------- pipeline report

// One-sided paired bootstrap: resample sets with replacement and report the
// fraction of resamples whose mean difference (system - baseline) is <= 0.
inline double paired_bootstrap_p(std::span<const double> system, std::span<const double> baseline,
                                 std::size_t resamples, std::uint64_t seed) {
  if (system.size() != baseline.size()) throw DataError("paired bootstrap needs equally sized samples");
  if (system.empty()) throw DataError("paired bootstrap on empty samples");
  if (resamples == 0) throw ConfigError("bootstrap resamples must be > 0");
  std::vector<double> diff(system.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = system[i] - baseline[i];
  Rng rng(derive_seed(seed, "bootstrap"));
  std::size_t not_better = 0;
  for (std::size_t b = 0; b < resamples; ++b) {
    double total = 0.0;
    for (std::size_t k = 0; k < diff.size(); ++k) total += diff[rng.index(diff.size())];
    if (total <= 0.0) ++not_better;
  }
  return static_cast<double>(not_better) / static_cast<double>(resamples);
}

struct PipelineReport {
  std::string strategy;
  std::size_t sets = 0;
  std::map<std::string, double> mean_scores;
  // baseline name -> metric -> p-value
  std::map<std::string, std::map<std::string, double>> significance;
};

namespace detail {

inline std::map<std::string, std::vector<double>> chosen_scores(const std::vector<SelectionResult>& selections,
                                                                const std::vector<QualityTable>& quality,
                                                                const std::vector<std::string>& metrics) {
  std::unordered_map<std::string, const QualityTable*> by_id;
  for (const auto& t : quality) by_id[t.lf_id] = &t;
  std::map<std::string, std::vector<double>> out;
  for (const auto& sel : selections) {
    auto it = by_id.find(sel.lf_id);
    if (it == by_id.end()) throw DataError("no quality scores for selection '" + sel.lf_id + "'");
    for (const auto& m : metrics) {
      const auto& v = m == "combined" ? it->second->require_combined() : it->second->metric(m);
      if (sel.chosen_index >= v.size()) throw DataError("selection index out of range for '" + sel.lf_id + "'");
      out[m].push_back(v[sel.chosen_index]);
    }
  }
  return out;
}

}  // namespace detail

struct BootstrapConfig {
  std::size_t resamples = 10000;
  std::uint64_t seed = 0;
};

inline PipelineReport evaluate_pipeline(const std::string& strategy, const std::vector<SelectionResult>& selections,
                                        const std::vector<QualityTable>& quality,
                                        const std::vector<std::string>& metrics,
                                        const std::map<std::string, std::vector<SelectionResult>>& baselines = {},
                                        const BootstrapConfig& boot = {}) {
  if (selections.empty()) throw DataError("evaluate_pipeline: no selections");
  if (metrics.empty()) throw DataError("evaluate_pipeline: no metrics");
  PipelineReport report;
  report.strategy = strategy;
  report.sets = selections.size();
  const auto mine = detail::chosen_scores(selections, quality, metrics);
  for (const auto& [m, v] : mine) {
    double total = 0.0;
    for (double x : v) total += x;
    report.mean_scores[m] = total / static_cast<double>(v.size());
  }
  for (const auto& [name, base_sel] : baselines) {
    // Pair by lf_id, in this strategy's order.
    std::unordered_map<std::string, const SelectionResult*> by_id;
    for (const auto& s : base_sel) by_id[s.lf_id] = &s;
    std::vector<SelectionResult> aligned;
    for (const auto& s : selections) {
      auto it = by_id.find(s.lf_id);
      if (it == by_id.end()) throw DataError("baseline '" + name + "' lacks a selection for '" + s.lf_id + "'");
      aligned.push_back(*it->second);
    }
    const auto theirs = detail::chosen_scores(aligned, quality, metrics);
    for (const auto& m : metrics)
      report.significance[name][m] = paired_bootstrap_p(mine.at(m), theirs.at(m), boot.resamples, boot.seed);
  }
  return report;
}

}  // namespace lfrerank
