#pragma once

// Synthetic ranking corpora whose gold quality is a known linear function of
// the reranker's own features. Used to check that training recovers a
// realizable ranking and to exercise selection and sweep end to end.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "lfrerank/core.hpp"
#include "lfrerank/random.hpp"
#include "lfrerank/reranker.hpp"

namespace lfrerank {

struct SyntheticConfig {
  std::size_t num_sets = 2000;
  std::size_t set_size = 8;
  std::size_t vocab_size = 300;
  double noise_sigma = 0.05;
  std::uint64_t seed = 7;
  FeatureConfig features;
};

struct SyntheticCorpus {
  std::vector<CandidateSet> sets;
  std::vector<std::vector<double>> quality;  // gold Q with noise
  std::vector<std::vector<int>> labels;      // 1 for candidates at or above the set median Q
  std::vector<double> true_weights;          // hash_dim weights generating noiseless Q (before scaling)
  double scale = 1.0;                        // noiseless Q = scale * dot(true_weights, x)
};

namespace detail {

inline std::vector<std::string> synthetic_vocab(std::size_t n, Rng& rng) {
  static const char* syllables[] = {"ka", "to", "ri", "mu", "se", "lo", "na", "pi", "ve", "du", "ra", "co",
                                    "fi", "gu", "he", "jo", "lu", "me", "no", "po", "sa", "ti", "vo", "ze"};
  constexpr std::size_t kSyl = sizeof(syllables) / sizeof(syllables[0]);
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  while (out.size() < n) {
    std::string w;
    const std::size_t parts = 2 + rng.index(2);
    for (std::size_t k = 0; k < parts; ++k) w += syllables[rng.index(kSyl)];
    if (seen.insert(w).second) out.push_back(std::move(w));
  }
  return out;
}

}  // namespace detail

inline SyntheticCorpus make_linear_corpus(const SyntheticConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, "synthetic"));
  const auto vocab = detail::synthetic_vocab(cfg.vocab_size, rng);
  SyntheticCorpus corpus;
  corpus.true_weights.assign(cfg.features.hash_dim, 0.0);
  for (const auto& w : vocab) corpus.true_weights[feature_index("w1:" + w, cfg.features.hash_dim)] += rng.normal();

  static const char* relations[] = {"loc_2", "next_to_2", "traverse_1", "capital_1", "population_1", "largest"};
  static const char* types[] = {"state", "river", "city", "place", "mountain", "lake"};

  std::vector<std::vector<double>> clean(cfg.num_sets);
  for (std::size_t s = 0; s < cfg.num_sets; ++s) {
    const std::string lf = std::string("answer ( intersection ( ") + types[rng.index(6)] + " , " + relations[rng.index(6)] +
                           " ( m" + std::to_string(rng.index(4)) + " ) ) )";
    std::vector<Candidate> cands;
    std::unordered_set<std::string> seen;
    while (cands.size() < cfg.set_size) {
      const std::size_t len = 4 + rng.index(6);
      std::string text;
      for (std::size_t k = 0; k < len; ++k) {
        if (k) text += ' ';
        text += vocab[rng.index(vocab.size())];
      }
      if (!seen.insert(text).second) continue;
      cands.push_back({text, 1, 0.0});
    }
    for (const auto& c : cands) {
      const auto fv = featurize(lf, c.text, cfg.features);
      double q = 0.0;
      for (const auto& [i, v] : fv.hashed) q += corpus.true_weights[i] * v;
      clean[s].push_back(q);
    }
    corpus.sets.emplace_back("syn" + std::to_string(s), std::move(cands), lf, std::nullopt);
  }

  // Scale so the pooled within-set standard deviation of noiseless Q is 1.
  double ss = 0.0;
  std::size_t count = 0;
  for (const auto& q : clean) {
    const double mean = std::accumulate(q.begin(), q.end(), 0.0) / static_cast<double>(q.size());
    for (double x : q) ss += (x - mean) * (x - mean);
    count += q.size();
  }
  corpus.scale = 1.0 / std::sqrt(ss / static_cast<double>(count));

  std::vector<CandidateSet> rebuilt;
  for (std::size_t s = 0; s < cfg.num_sets; ++s) {
    std::vector<double> q(clean[s].size());
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = corpus.scale * clean[s][i] + cfg.noise_sigma * rng.normal();

    std::vector<std::size_t> order(q.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return q[a] < q[b]; });
    std::vector<double> rank(q.size());
    for (std::size_t r = 0; r < order.size(); ++r)
      rank[order[r]] = order.size() > 1 ? static_cast<double>(r) / static_cast<double>(order.size() - 1) : 0.0;

    std::vector<Candidate> cands = corpus.sets[s].candidates();
    std::vector<int> labels(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) {
      // Emission counts rise with quality; generator log-probs are a noisy
      // correlate of it.
      cands[i].raw_count = 1 + static_cast<std::int64_t>(std::floor(3.0 * rank[i] + 1.5 * rng.uniform()));
      cands[i].gen_logprob = -1.5 + 0.3 * q[i] + 0.6 * rng.normal();
      labels[i] = rank[i] >= 0.5 ? 1 : 0;
    }
    rebuilt.emplace_back(corpus.sets[s].lf_id(), std::move(cands), corpus.sets[s].lf(), std::nullopt);
    corpus.quality.push_back(std::move(q));
    corpus.labels.push_back(std::move(labels));
  }
  corpus.sets = std::move(rebuilt);
  return corpus;
}

}  // namespace lfrerank
