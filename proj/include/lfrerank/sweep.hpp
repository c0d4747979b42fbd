#pragma once

// n-best size sweep: train on candidate lists of one size, test on another.

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "lfrerank/core.hpp"
#include "lfrerank/error.hpp"
#include "lfrerank/evaluation.hpp"
#include "lfrerank/random.hpp"
#include "lfrerank/reranker.hpp"
#include "lfrerank/scoring.hpp"
#include "lfrerank/selection.hpp"

namespace lfrerank {

struct SweepConfig {
  std::vector<std::size_t> train_sizes{2, 4, 8, 16, 32};
  std::vector<std::size_t> test_sizes{2, 4, 8, 16, 32};
  std::vector<std::string> quality_metrics;  // combined into Q for training
  std::vector<std::string> eval_metrics;     // raw means reported per cell
  double test_frac = 0.2;
  double dev_frac = 0.1;
  std::uint64_t seed = 0;
  FeatureConfig features;
  TrainConfig train;
};

struct SweepCell {
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  std::map<std::string, double> means;
  int epochs_run = 0;
};

namespace detail {

inline std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.index(n - i)]);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

inline QualityTable subset_quality(const QualityTable& t, const std::vector<std::size_t>& idx) {
  QualityTable out{t.lf_id, {}, std::nullopt};
  for (const auto& [m, v] : t.per_metric) {
    auto& dst = out.per_metric[m];
    for (auto i : idx) dst.push_back(v.at(i));
  }
  return out;
}

}  // namespace detail

// Sets are split once into train / test by seed. For each train size every
// training set is subsampled (seeded per set and size), Q is rebuilt on the
// subsample and a fresh reranker is trained; that model is then evaluated on
// test sets subsampled to each test size. Cells are emitted row-major.
inline std::vector<SweepCell> nbest_sweep(const std::vector<CandidateSet>& sets,
                                          const std::vector<QualityTable>& quality, const SweepConfig& cfg) {
  if (sets.size() != quality.size()) throw DataError("sweep: one quality table per set required");
  if (cfg.train_sizes.empty() || cfg.test_sizes.empty()) throw ConfigError("sweep: sizes must be non-empty");
  if (cfg.quality_metrics.empty() || cfg.eval_metrics.empty()) throw ConfigError("sweep: metrics must be non-empty");
  std::size_t smallest = std::numeric_limits<std::size_t>::max();
  for (const auto& s : sets) smallest = std::min(smallest, s.size());
  for (auto k : cfg.train_sizes)
    if (k < 2 || k > smallest)
      throw DataError("sweep: train size " + std::to_string(k) + " outside [2, " + std::to_string(smallest) + "]");
  for (auto k : cfg.test_sizes)
    if (k < 1 || k > smallest)
      throw DataError("sweep: test size " + std::to_string(k) + " outside [1, " + std::to_string(smallest) + "]");

  auto [pool_idx, test_idx] = split_dev(sets.size(), cfg.test_frac, derive_seed(cfg.seed, "sweep-test"));
  auto [train_rel, dev_rel] = split_dev(pool_idx.size(), cfg.dev_frac, derive_seed(cfg.seed, "sweep-dev"));

  auto subsample = [&](std::size_t set_index, std::size_t k, std::string_view tag) {
    const auto& s = sets[set_index];
    const auto idx = detail::sample_indices(s.size(), k, derive_seed(cfg.seed, std::string(tag) + s.lf_id(), k));
    auto q = detail::subset_quality(quality[set_index], idx);
    q.combined = combine_metrics(q.per_metric, cfg.quality_metrics);
    return std::pair{s.subset(idx), std::move(q)};
  };

  std::vector<SweepCell> cells;
  for (auto train_size : cfg.train_sizes) {
    std::vector<CandidateSet> tr_sets, dev_sets;
    std::vector<std::vector<double>> tr_q, dev_q;
    for (auto r : train_rel) {
      auto [s, q] = subsample(pool_idx[r], train_size, "train:");
      tr_sets.push_back(std::move(s));
      tr_q.push_back(*q.combined);
    }
    for (auto r : dev_rel) {
      auto [s, q] = subsample(pool_idx[r], train_size, "train:");
      dev_sets.push_back(std::move(s));
      dev_q.push_back(*q.combined);
    }
    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(cfg.seed, "sweep-train", train_size);
    const auto model = train(tr_sets, tr_q, dev_sets, dev_q, cfg.features, tc);

    for (auto test_size : cfg.test_sizes) {
      SweepCell cell{train_size, test_size, {}, model.meta.epochs_run};
      for (const auto& m : cfg.eval_metrics) cell.means[m] = 0.0;
      for (auto t : test_idx) {
        auto [s, q] = subsample(t, test_size, "test:");
        const auto pick = select_reranker(s, model).chosen_index;
        for (const auto& m : cfg.eval_metrics) cell.means[m] += (m == "combined" ? *q.combined : q.metric(m))[pick];
      }
      for (auto& [m, v] : cell.means) v /= static_cast<double>(test_idx.size());
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

// Tab-separated grid: train_size, test_size, one column per metric.
inline void write_sweep_grid(const std::vector<SweepCell>& cells, std::ostream& out) {
  out << "train_size\ttest_size";
  if (!cells.empty())
    for (const auto& [m, v] : cells.front().means) out << '\t' << m;
  out << "\tepochs_run\n";
  out.precision(17);
  for (const auto& c : cells) {
    out << c.train_size << '\t' << c.test_size;
    for (const auto& [m, v] : c.means) out << '\t' << v;
    out << '\t' << c.epochs_run << '\n';
  }
}

}  // namespace lfrerank
