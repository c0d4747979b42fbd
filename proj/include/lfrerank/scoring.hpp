#pragma once

// Candidate quality scoring: native BLEU, the in-process toy parser scorer,
// the batch scorer contract, and per-metric standardization / combination
// into the reference quality Q.

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "lfrerank/core.hpp"
#include "lfrerank/error.hpp"
#include "lfrerank/parallel.hpp"

namespace lfrerank {

// ---------------------------------------------------------------- BLEU

enum class BleuSmoothing {
  none,     // any zero n-gram precision makes the score 0
  epsilon,  // zero numerators replaced by 0.1 (add-epsilon, "method1")
};

namespace detail {

inline std::unordered_map<std::string, int> ngram_counts(const std::vector<std::string>& toks, std::size_t n) {
  std::unordered_map<std::string, int> counts;
  if (toks.size() < n) return counts;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    std::string key = toks[i];
    for (std::size_t k = 1; k < n; ++k) {
      key += '\x1f';
      key += toks[i + k];
    }
    ++counts[key];
  }
  return counts;
}

}  // namespace detail

// Sentence BLEU with uniform weights over orders 1..max_order, clipped n-gram
// precisions and the brevity penalty exp(1 - r/c) when c <= r. Whitespace
// tokenization; case-sensitive.
inline double bleu(std::string_view candidate, std::string_view reference, int max_order = 4,
                   BleuSmoothing smoothing = BleuSmoothing::none) {
  if (max_order < 1) throw ConfigError("bleu max_order must be >= 1");
  const auto hyp = split_whitespace(candidate);
  const auto ref = split_whitespace(reference);
  if (hyp.empty()) throw DataError("bleu: empty candidate");
  if (ref.empty()) throw DataError("bleu: empty reference");

  double log_sum = 0.0;
  for (int n = 1; n <= max_order; ++n) {
    const auto hyp_counts = detail::ngram_counts(hyp, static_cast<std::size_t>(n));
    const auto ref_counts = detail::ngram_counts(ref, static_cast<std::size_t>(n));
    int matched = 0;
    int total = 0;
    for (const auto& [gram, count] : hyp_counts) {
      total += count;
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) matched += std::min(count, it->second);
    }
    const double denom = std::max(1, total);
    double p;
    if (matched == 0) {
      // No unigram overlap is zero under every smoothing scheme.
      if (smoothing == BleuSmoothing::none || n == 1) return 0.0;
      p = 0.1 / denom;
    } else {
      p = matched / denom;
    }
    log_sum += std::log(p) / max_order;
  }
  const double c = static_cast<double>(hyp.size());
  const double r = static_cast<double>(ref.size());
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_sum);
}

// ---------------------------------------------------------------- toy parser probability

namespace detail {

inline std::string lowercase(std::string_view s) {
  std::string out(s);
  for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

// Content keywords of an LF: split on whitespace and on '_', '.', ':', '/',
// keeping alphabetic pieces of length >= 2 and entity placeholders like m0.
inline std::vector<std::string> lf_keywords(std::string_view lf) {
  static const std::unordered_set<std::string> structural{"answer", "intersection", "ns", "select", "where",
                                                          "distinct", "filter", "count"};
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  std::string cur;
  auto flush = [&] {
    if (cur.size() >= 2 && std::any_of(cur.begin(), cur.end(), [](char c) { return std::isalpha(static_cast<unsigned char>(c)); })) {
      std::string k = lowercase(cur);
      if (!structural.count(k) && seen.insert(k).second) out.push_back(k);
    }
    cur.clear();
  };
  for (char ch : lf) {
    if (std::isalnum(static_cast<unsigned char>(ch))) {
      cur += ch;
    } else {
      flush();
    }
  }
  flush();
  return out;
}

inline bool keyword_matches(const std::string& kw, const std::string& tok) {
  if (kw == tok) return true;
  if (kw.size() >= 4 && tok.size() >= 4) return tok.starts_with(kw) || kw.starts_with(tok);
  return false;
}

}  // namespace detail

// Deterministic stand-in for a parser probability: a logistic squash of
// keyword coverage, keyword order agreement with the LF, and a penalty for
// LF syntax leaking into the utterance. Always in (0, 1).
inline double toy_parser_probability(std::string_view lf, std::string_view candidate) {
  if (trim(candidate).empty()) throw DataError("toy parser: empty candidate");
  if (trim(lf).empty()) throw DataError("toy parser: empty logical form");
  const auto keywords = detail::lf_keywords(lf);
  const auto raw_tokens = split_whitespace(candidate);
  std::vector<std::string> tokens;
  std::size_t leaked = 0;
  for (const auto& t : raw_tokens) {
    if (t.find_first_of("()_?:") != std::string::npos) ++leaked;
    std::string clean;
    for (char ch : t)
      if (std::isalnum(static_cast<unsigned char>(ch))) clean += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (!clean.empty()) tokens.push_back(std::move(clean));
  }

  std::vector<std::size_t> positions;  // first match position, in keyword order
  for (const auto& kw : keywords) {
    for (std::size_t p = 0; p < tokens.size(); ++p) {
      if (detail::keyword_matches(kw, tokens[p])) {
        positions.push_back(p);
        break;
      }
    }
  }
  const double coverage = keywords.empty() ? 0.0 : static_cast<double>(positions.size()) / static_cast<double>(keywords.size());
  double order = 1.0;
  if (positions.size() >= 2) {
    std::size_t increasing = 0;
    for (std::size_t k = 1; k < positions.size(); ++k)
      if (positions[k] > positions[k - 1]) ++increasing;
    order = static_cast<double>(increasing) / static_cast<double>(positions.size() - 1);
  }
  // Immediate repetitions ("the the") count as disfluency.
  std::size_t adjacent = 0;
  for (std::size_t p = 1; p < tokens.size(); ++p)
    if (tokens[p] != tokens[p - 1]) ++adjacent;
  const double repetition = tokens.size() > 1 ? 1.0 - static_cast<double>(adjacent) / static_cast<double>(tokens.size() - 1) : 0.0;
  const double leak = raw_tokens.empty() ? 0.0 : static_cast<double>(leaked) / static_cast<double>(raw_tokens.size());
  const double logit = 4.0 * coverage + 1.5 * order - 4.0 * leak - 3.0 * repetition - 2.0;
  return 1.0 / (1.0 + std::exp(-logit));
}

// ---------------------------------------------------------------- scorer contract

enum class ScorerKind { native_overlap, external_reference, external_lf };
enum class ScorerTransport { in_process, subprocess, http };

inline std::string_view to_string(ScorerKind k) {
  switch (k) {
    case ScorerKind::native_overlap: return "native-overlap";
    case ScorerKind::external_reference: return "external-reference";
    case ScorerKind::external_lf: return "external-lf";
  }
  return "native-overlap";
}

inline std::optional<ScorerKind> parse_scorer_kind(std::string_view s) {
  if (s == "native-overlap") return ScorerKind::native_overlap;
  if (s == "external-reference") return ScorerKind::external_reference;
  if (s == "external-lf") return ScorerKind::external_lf;
  return std::nullopt;
}

struct ScorerSpec {
  std::string name;
  ScorerKind kind = ScorerKind::native_overlap;
  ScorerTransport transport = ScorerTransport::in_process;

  // LF-based scorers see (lf, candidate); the rest see (reference, candidate).
  bool needs_lf() const { return kind == ScorerKind::external_lf; }
};

struct ScoreItem {
  std::string candidate;
  std::optional<std::string> reference;
  std::optional<std::string> lf;
};

class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual const ScorerSpec& spec() const = 0;
  // Must return exactly one score per item, in item order.
  virtual std::vector<double> score_batch(std::span<const ScoreItem> items) = 0;
  virtual std::size_t max_batch() const { return 256; }
};

class BleuScorer : public Scorer {
 public:
  explicit BleuScorer(int max_order = 4, BleuSmoothing smoothing = BleuSmoothing::none, std::string name = "bleu")
      : spec_{std::move(name), ScorerKind::native_overlap, ScorerTransport::in_process},
        max_order_(max_order),
        smoothing_(smoothing) {}

  const ScorerSpec& spec() const override { return spec_; }

  std::vector<double> score_batch(std::span<const ScoreItem> items) override {
    std::vector<double> out;
    out.reserve(items.size());
    for (const auto& it : items) {
      if (!it.reference) throw DataError("bleu scorer needs a reference");
      out.push_back(bleu(it.candidate, *it.reference, max_order_, smoothing_));
    }
    return out;
  }

 private:
  ScorerSpec spec_;
  int max_order_;
  BleuSmoothing smoothing_;
};

class ToyParserScorer : public Scorer {
 public:
  explicit ToyParserScorer(std::string name = "toy-parser")
      : spec_{std::move(name), ScorerKind::external_lf, ScorerTransport::in_process} {}

  const ScorerSpec& spec() const override { return spec_; }

  std::vector<double> score_batch(std::span<const ScoreItem> items) override {
    std::vector<double> out;
    out.reserve(items.size());
    for (const auto& it : items) {
      if (!it.lf) throw DataError("toy parser scorer needs the logical form");
      out.push_back(toy_parser_probability(*it.lf, it.candidate));
    }
    return out;
  }

 private:
  ScorerSpec spec_;
};

// Scores every candidate of every set with one scorer. Items from several
// sets are packed into batches of at most scorer.max_batch().
inline std::vector<QualityTable> score_sets(const std::vector<CandidateSet>& sets, Scorer& scorer) {
  const ScorerSpec& spec = scorer.spec();
  std::vector<ScoreItem> items;
  for (const auto& set : sets) {
    for (const auto& c : set.candidates()) {
      ScoreItem item{c.text, std::nullopt, std::nullopt};
      if (spec.needs_lf()) {
        if (trim(set.lf()).empty()) throw DataError("scorer '" + spec.name + "' needs the LF of '" + set.lf_id() + "'");
        item.lf = set.lf();
      } else {
        item.reference = set.require_reference();
      }
      items.push_back(std::move(item));
    }
  }
  std::vector<double> scores;
  scores.reserve(items.size());
  const std::size_t batch = std::max<std::size_t>(1, scorer.max_batch());
  for (std::size_t start = 0; start < items.size(); start += batch) {
    const std::size_t len = std::min(batch, items.size() - start);
    auto got = scorer.score_batch(std::span<const ScoreItem>(items).subspan(start, len));
    if (got.size() != len)
      throw ServiceError("scorer '" + spec.name + "' returned " + std::to_string(got.size()) + " scores for a batch of " +
                         std::to_string(len));
    scores.insert(scores.end(), got.begin(), got.end());
  }
  std::vector<QualityTable> out;
  out.reserve(sets.size());
  std::size_t k = 0;
  for (const auto& set : sets) {
    QualityTable t{set.lf_id(), {}, std::nullopt};
    t.per_metric[spec.name].assign(scores.begin() + static_cast<std::ptrdiff_t>(k),
                                   scores.begin() + static_cast<std::ptrdiff_t>(k + set.size()));
    k += set.size();
    out.push_back(std::move(t));
  }
  return out;
}

// Merges per-metric tables for the same LFs (same order) into one table each.
inline void merge_quality(std::vector<QualityTable>& into, const std::vector<QualityTable>& from) {
  if (into.empty()) {
    into = from;
    return;
  }
  if (into.size() != from.size()) throw DataError("cannot merge quality tables of different corpus sizes");
  for (std::size_t i = 0; i < into.size(); ++i) {
    if (into[i].lf_id != from[i].lf_id) throw DataError("quality tables are not aligned at '" + into[i].lf_id + "'");
    for (const auto& [name, scores] : from[i].per_metric) {
      if (!into[i].per_metric.emplace(name, scores).second)
        throw DataError("metric '" + name + "' scored twice for '" + into[i].lf_id + "'");
    }
  }
}

// ---------------------------------------------------------------- normalization

struct NormalizationStats {
  std::string metric;
  double mean = 0.0;
  double stddev = 0.0;  // population convention (divide by N)
  bool degenerate = false;
};

namespace detail {

// Constant vectors (up to rounding in the mean) have no spread to rescale.
inline bool is_degenerate(std::span<const double> xs, double sd) {
  double scale = 0.0;
  for (double x : xs) scale = std::max(scale, std::abs(x));
  return !(sd > 1e-12 * std::max(1.0, scale));
}

}  // namespace detail

inline NormalizationStats fit_normalization(std::span<const double> scores, std::string metric = {}) {
  if (scores.size() < 2) throw DataError("fit_normalization needs at least 2 scores");
  const double n = static_cast<double>(scores.size());
  double sum = 0.0;
  for (double x : scores) sum += x;
  const double mean = sum / n;
  double ss = 0.0;
  for (double x : scores) ss += (x - mean) * (x - mean);
  NormalizationStats st{std::move(metric), mean, std::sqrt(ss / n), false};
  st.degenerate = detail::is_degenerate(scores, st.stddev);
  return st;
}

inline std::vector<double> apply_normalization(std::span<const double> scores, const NormalizationStats& stats) {
  std::vector<double> out(scores.size(), 0.0);
  if (stats.degenerate) return out;
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = (scores[i] - stats.mean) / stats.stddev;
  return out;
}

// Fit-and-apply in one pass over a single vector. Written in terms of
// d_i = n*x_i - sum(x), which is mathematically (x_i - mean) * n; with this
// form, scaling by a power of two and shifting by a representable constant
// leave the output bit-identical. Vectors of length < 2 or with zero spread
// map to zeros.
inline std::vector<double> standardize(std::span<const double> scores, bool* degenerate = nullptr) {
  std::vector<double> out(scores.size(), 0.0);
  if (degenerate) *degenerate = true;
  if (scores.size() < 2) return out;
  const double n = static_cast<double>(scores.size());
  double sum = 0.0;
  for (double x : scores) sum += x;
  double ss = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = n * scores[i] - sum;
    ss += out[i] * out[i];
  }
  const double scale = std::sqrt(ss / n);  // = n * population stddev
  if (detail::is_degenerate(scores, scale / n)) {
    std::fill(out.begin(), out.end(), 0.0);
    return out;
  }
  if (degenerate) *degenerate = false;
  for (auto& d : out) d /= scale;
  return out;
}

enum class NormalizationScope {
  per_set,  // statistics fitted within each candidate set (default for Q)
  corpus,   // statistics fitted over all candidates of the corpus
};

// Sum of per-metric standardized vectors for one candidate set.
inline std::vector<double> combine_metrics(const std::map<std::string, std::vector<double>>& per_metric,
                                           const std::vector<std::string>& names,
                                           std::vector<std::string>* degenerate_metrics = nullptr) {
  if (names.empty()) throw DataError("combine_metrics needs at least one metric name");
  std::optional<std::size_t> n;
  std::vector<double> combined;
  for (const auto& name : names) {
    auto it = per_metric.find(name);
    if (it == per_metric.end()) throw DataError("combine_metrics: missing metric '" + name + "'");
    if (!n) {
      n = it->second.size();
      combined.assign(*n, 0.0);
    } else if (it->second.size() != *n) {
      throw DataError("combine_metrics: metric '" + name + "' has length " + std::to_string(it->second.size()) +
                      ", expected " + std::to_string(*n));
    }
    bool degenerate = false;
    const auto z = standardize(it->second, &degenerate);
    if (degenerate && degenerate_metrics) degenerate_metrics->push_back(name);
    for (std::size_t i = 0; i < z.size(); ++i) combined[i] += z[i];
  }
  return combined;
}

struct CombineReport {
  std::size_t sets = 0;
  std::size_t degenerate_metric_sets = 0;  // (set, metric) pairs with zero spread
};

// Fills QualityTable::combined for every table.
inline CombineReport combine_quality(std::vector<QualityTable>& tables, const std::vector<std::string>& names,
                                     NormalizationScope scope = NormalizationScope::per_set) {
  CombineReport report;
  report.sets = tables.size();
  if (scope == NormalizationScope::per_set) {
    for (auto& t : tables) {
      std::vector<std::string> degenerate;
      t.combined = combine_metrics(t.per_metric, names, &degenerate);
      report.degenerate_metric_sets += degenerate.size();
    }
    return report;
  }
  for (auto& t : tables) {
    for (const auto& name : names) t.metric(name);
    t.combined = std::vector<double>(t.metric(names.front()).size(), 0.0);
    t.validate(t.combined->size());
  }
  for (const auto& name : names) {
    std::vector<double> all;
    for (const auto& t : tables) {
      const auto& v = t.metric(name);
      all.insert(all.end(), v.begin(), v.end());
    }
    const auto z = standardize(all);
    std::size_t k = 0;
    for (auto& t : tables)
      for (auto& q : *t.combined) q += z[k++];
  }
  return report;
}

}  // namespace lfrerank
