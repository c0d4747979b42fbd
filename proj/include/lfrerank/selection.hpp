#pragma once

// Candidate selection strategies and tuning of the reranker/generator blend.

#include <algorithm>
#include <filesystem>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lfrerank/core.hpp"
#include "lfrerank/error.hpp"
#include "lfrerank/io.hpp"
#include "lfrerank/random.hpp"
#include "lfrerank/reranker.hpp"
#include "lfrerank/scoring.hpp"

namespace lfrerank {

enum class Strategy { random, self_consistency, generator, reranker, combined, oracle };

inline constexpr std::string_view kStrategyNames[] = {"random",   "self-consistency", "generator",
                                                      "reranker", "combined",         "oracle"};

inline std::string_view to_string(Strategy s) { return kStrategyNames[static_cast<int>(s)]; }

inline std::optional<Strategy> parse_strategy(std::string_view s) {
  for (int i = 0; i < 6; ++i)
    if (kStrategyNames[i] == s) return static_cast<Strategy>(i);
  return std::nullopt;
}

struct SelectionResult {
  std::string lf_id;
  std::size_t chosen_index = 0;
  std::string strategy;
  std::map<std::string, std::vector<double>> score_breakdown;
};

// First index of the maximum; NaN never wins.
inline std::size_t argmax_first(std::span<const double> xs) {
  if (xs.empty()) throw DataError("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < xs.size(); ++i)
    if (xs[i] > xs[best] || std::isnan(xs[best])) best = i;
  return best;
}

inline SelectionResult select_random(const CandidateSet& set, Rng& rng) {
  if (set.size() == 0) throw DataError("select_random on an empty set");
  return {set.lf_id(), rng.index(set.size()), "random", {}};
}

// Most frequent raw emission; ties broken uniformly at random.
inline SelectionResult select_self_consistency(const CandidateSet& set, Rng& rng) {
  if (set.size() == 0) throw DataError("select_self_consistency on an empty set");
  std::int64_t best = 0;
  for (const auto& c : set.candidates()) best = std::max(best, c.raw_count);
  std::vector<std::size_t> tied;
  std::vector<double> counts;
  for (std::size_t i = 0; i < set.size(); ++i) {
    counts.push_back(static_cast<double>(set[i].raw_count));
    if (set[i].raw_count == best) tied.push_back(i);
  }
  const std::size_t pick = tied.size() == 1 ? tied.front() : tied[rng.index(tied.size())];
  return {set.lf_id(), pick, "self-consistency", {{"raw_count", counts}}};
}

inline std::vector<double> generator_scores(const CandidateSet& set) {
  std::vector<double> g;
  g.reserve(set.size());
  for (const auto& c : set.candidates()) g.push_back(c.gen_logprob);
  return g;
}

inline SelectionResult select_generator(const CandidateSet& set) {
  auto g = generator_scores(set);
  const auto pick = argmax_first(g);
  return {set.lf_id(), pick, "generator", {{"generator", std::move(g)}}};
}

inline SelectionResult select_reranker(const CandidateSet& set, const RerankerModel& model) {
  auto r = score_set(model, set);
  const auto pick = argmax_first(r);
  return {set.lf_id(), pick, "reranker", {{"reranker", std::move(r)}}};
}

// Blend of precomputed reranker scores r and generator scores g:
// lambda * r + (1 - lambda) * g, optionally after standardizing each within
// the set.
inline std::size_t combined_choice(std::span<const double> r, std::span<const double> g, double lambda,
                                   bool standardize_first = false, std::vector<double>* blended = nullptr) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must be in [0, 1]");
  if (r.size() != g.size()) throw DataError("reranker and generator score vectors differ in length");
  std::vector<double> rs(r.begin(), r.end()), gs(g.begin(), g.end());
  if (standardize_first) {
    rs = standardize(rs);
    gs = standardize(gs);
  }
  std::vector<double> b(rs.size());
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = lambda * rs[i] + (1.0 - lambda) * gs[i];
  const auto pick = argmax_first(b);
  if (blended) *blended = std::move(b);
  return pick;
}

inline SelectionResult select_combined(const CandidateSet& set, const RerankerModel& model, double lambda,
                                       bool standardize_first = false) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must be in [0, 1]");
  auto r = score_set(model, set);
  auto g = generator_scores(set);
  std::vector<double> blended;
  const auto pick = combined_choice(r, g, lambda, standardize_first, &blended);
  return {set.lf_id(), pick, "combined", {{"reranker", std::move(r)}, {"generator", std::move(g)}, {"combined", std::move(blended)}}};
}

inline SelectionResult select_oracle(const CandidateSet& set, std::span<const double> quality) {
  if (quality.size() != set.size())
    throw DataError("oracle quality for '" + set.lf_id() + "' has " + std::to_string(quality.size()) +
                    " entries for " + std::to_string(set.size()) + " candidates");
  return {set.lf_id(), argmax_first(quality), "oracle", {{"quality", std::vector<double>(quality.begin(), quality.end())}}};
}

// ---------------------------------------------------------------- lambda tuning

struct LambdaConfig {
  std::vector<double> grid;
  bool standardize_first = false;

  static std::vector<double> make_grid(double lo, double hi, double step) {
    if (!(step > 0.0)) throw ConfigError("lambda grid step must be > 0");
    std::vector<double> g;
    const auto count = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
    for (long k = 0; k <= count; ++k) g.push_back(std::min(hi, lo + static_cast<double>(k) * step));
    return g;
  }

  LambdaConfig() : grid(make_grid(0.0, 1.0, 0.05)) {}

  void validate() const {
    if (grid.empty()) throw ConfigError("lambda grid must be non-empty");
    for (double l : grid)
      if (!(l >= 0.0 && l <= 1.0)) throw ConfigError("lambda grid values must lie in [0, 1]");
  }
};

struct LambdaTuning {
  double best_lambda = 0.0;
  double best_objective = 0.0;
  std::vector<std::pair<double, double>> curve;  // (lambda, mean dev quality)
};

// Dev-set inputs for tuning: precomputed reranker scores, generator scores
// and objective quality per set.
struct TuningSet {
  std::vector<double> reranker;
  std::vector<double> generator;
  std::vector<double> quality;
};

// Picks the grid value maximizing the mean quality of selected candidates.
// Ties go to the smallest lambda.
inline LambdaTuning tune_lambda(const std::vector<TuningSet>& dev, const LambdaConfig& cfg) {
  cfg.validate();
  if (dev.empty()) throw DataError("tune_lambda: empty dev set");
  std::vector<double> grid = cfg.grid;
  std::sort(grid.begin(), grid.end());
  LambdaTuning out;
  bool first = true;
  for (double lambda : grid) {
    double total = 0.0;
    for (const auto& s : dev) {
      if (s.quality.size() != s.reranker.size()) throw DataError("tune_lambda: quality length mismatch");
      total += s.quality[combined_choice(s.reranker, s.generator, lambda, cfg.standardize_first)];
    }
    const double mean = total / static_cast<double>(dev.size());
    out.curve.emplace_back(lambda, mean);
    if (first || mean > out.best_objective) {
      out.best_lambda = lambda;
      out.best_objective = mean;
      first = false;
    }
  }
  return out;
}

inline LambdaTuning tune_lambda(const std::vector<CandidateSet>& dev_sets, const RerankerModel& model,
                                const std::vector<QualityTable>& quality, const LambdaConfig& cfg,
                                const std::optional<std::string>& objective_metric = std::nullopt) {
  if (dev_sets.size() != quality.size()) throw DataError("tune_lambda: one quality table per dev set required");
  std::vector<TuningSet> dev;
  dev.reserve(dev_sets.size());
  for (std::size_t i = 0; i < dev_sets.size(); ++i) {
    const auto& q = objective_metric ? quality[i].metric(*objective_metric) : quality[i].require_combined();
    dev.push_back({score_set(model, dev_sets[i]), generator_scores(dev_sets[i]), q});
  }
  return tune_lambda(dev, cfg);
}

// ---------------------------------------------------------------- corpus-level selection

struct SelectionOptions {
  Strategy strategy = Strategy::reranker;
  const RerankerModel* model = nullptr;
  double lambda = 1.0;
  bool standardize_first = false;
  std::uint64_t seed = 0;
};

// Each set draws from its own seeded stream, so results are independent of
// corpus order and of parallel scheduling.
inline std::vector<SelectionResult> select_all(const std::vector<CandidateSet>& sets,
                                               const std::vector<QualityTable>* quality, const SelectionOptions& opt) {
  if ((opt.strategy == Strategy::reranker || opt.strategy == Strategy::combined) && !opt.model)
    throw ConfigError("strategy '" + std::string(to_string(opt.strategy)) + "' needs a reranker model");
  if (opt.strategy == Strategy::oracle && (!quality || quality->size() != sets.size()))
    throw DataError("oracle selection needs one quality table per set");
  std::vector<SelectionResult> out;
  out.reserve(sets.size());
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const auto& set = sets[i];
    Rng rng(derive_seed(opt.seed, "select:" + set.lf_id()));
    switch (opt.strategy) {
      case Strategy::random: out.push_back(select_random(set, rng)); break;
      case Strategy::self_consistency: out.push_back(select_self_consistency(set, rng)); break;
      case Strategy::generator: out.push_back(select_generator(set)); break;
      case Strategy::reranker: out.push_back(select_reranker(set, *opt.model)); break;
      case Strategy::combined: out.push_back(select_combined(set, *opt.model, opt.lambda, opt.standardize_first)); break;
      case Strategy::oracle: {
        const auto& q = (*quality)[i];
        if (q.lf_id != set.lf_id()) throw DataError("quality table order does not match candidate sets");
        out.push_back(select_oracle(set, q.require_combined()));
        break;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------- selection files

// {"lf_id", "strategy", "chosen_index", "text", "score_breakdown": {name: [real, ...]}}
inline json to_json(const SelectionResult& r, const CandidateSet& set) {
  if (r.lf_id != set.lf_id()) throw DataError("selection '" + r.lf_id + "' paired with set '" + set.lf_id() + "'");
  if (r.chosen_index >= set.size()) throw DataError("selection index out of range for '" + r.lf_id + "'");
  json breakdown = json::object();
  for (const auto& [k, v] : r.score_breakdown) breakdown[k] = v;
  return json{{"lf_id", r.lf_id},
              {"strategy", r.strategy},
              {"chosen_index", r.chosen_index},
              {"text", set[r.chosen_index].text},
              {"score_breakdown", std::move(breakdown)}};
}

inline void write_selections(const std::vector<SelectionResult>& selections, const std::vector<CandidateSet>& sets,
                             std::ostream& out) {
  if (selections.size() != sets.size()) throw DataError("one selection per candidate set required");
  for (std::size_t i = 0; i < sets.size(); ++i) detail::write_line(out, to_json(selections[i], sets[i]));
}

inline void save_selections(const std::vector<SelectionResult>& selections, const std::vector<CandidateSet>& sets,
                            const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  write_selections(selections, sets, out);
}

inline SelectionResult selection_from_json(const json& j) {
  SelectionResult r;
  r.lf_id = detail::string_field(j, "lf_id");
  r.strategy = detail::string_field(j, "strategy");
  const auto& idx = detail::field(j, "chosen_index");
  if (!idx.is_number_unsigned()) throw DataError("'chosen_index' must be a non-negative integer");
  r.chosen_index = idx.get<std::size_t>();
  if (j.contains("score_breakdown")) {
    if (!j["score_breakdown"].is_object()) throw DataError("'score_breakdown' must be an object");
    for (const auto& [k, v] : j["score_breakdown"].items()) r.score_breakdown[k] = v.get<std::vector<double>>();
  }
  return r;
}

inline std::vector<SelectionResult> read_selections(std::istream& in, const std::string& source = "<selections>") {
  std::vector<SelectionResult> out;
  detail::for_each_record(in, source, [&](const json& j) { out.push_back(selection_from_json(j)); });
  return out;
}

inline std::vector<SelectionResult> load_selections(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  return read_selections(in, path.string());
}

}  // namespace lfrerank
