#pragma once

// The trainable reranker: hashed sparse features over (LF, candidate), a
// linear scoring function, the weighted margin ranking loss with its exact
// subgradient, and per-set training with early stopping on dev loss.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "lfrerank/core.hpp"
#include "lfrerank/error.hpp"
#include "lfrerank/parallel.hpp"
#include "lfrerank/random.hpp"

namespace lfrerank {

// ---------------------------------------------------------------- features

inline constexpr std::size_t kLengthFeatures = 3;

struct FeatureConfig {
  std::set<int> char_ngram_orders{2, 3, 4};
  std::set<int> word_ngram_orders{1, 2};
  std::uint32_t hash_dim = 1u << 18;
  bool include_length_feats = true;
  bool include_pair_feats = true;

  void validate() const {
    if (hash_dim < 2 || (hash_dim & (hash_dim - 1)) != 0) throw ConfigError("features.hash_dim must be a power of two >= 2");
    for (int n : char_ngram_orders)
      if (n < 1) throw ConfigError("features.char_ngram_orders must be >= 1");
    for (int n : word_ngram_orders)
      if (n < 1) throw ConfigError("features.word_ngram_orders must be >= 1");
  }

  bool operator==(const FeatureConfig&) const = default;
};

struct FeatureVector {
  std::uint32_t hash_dim = 0;
  std::vector<std::pair<std::uint32_t, double>> hashed;  // sorted by index, unique
  std::array<double, kLengthFeatures> length{};
};

namespace detail {

inline std::vector<std::string> lf_feature_tokens(std::string_view lf) {
  std::vector<std::string> out;
  for (auto& t : split_whitespace(lf))
    if (std::any_of(t.begin(), t.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)); }))
      out.push_back(std::move(t));
  return out;
}

inline std::vector<std::string> candidate_tokens(std::string_view text) {
  auto toks = split_whitespace(text);
  for (auto& t : toks)
    for (auto& c : t) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return toks;
}

}  // namespace detail

// The raw (unhashed) feature strings, one entry per occurrence. Exposed so
// collision rates can be measured against an exact dictionary.
inline std::vector<std::string> feature_keys(std::string_view lf, std::string_view candidate, const FeatureConfig& cfg) {
  if (trim(lf).empty()) throw DataError("featurize: empty logical form");
  if (trim(candidate).empty()) throw DataError("featurize: empty candidate");
  std::vector<std::string> keys;
  const auto toks = detail::candidate_tokens(candidate);

  std::string padded = " ";
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (i) padded += ' ';
    padded += toks[i];
  }
  padded += ' ';
  for (int n : cfg.char_ngram_orders) {
    const auto len = static_cast<std::size_t>(n);
    for (std::size_t i = 0; i + len <= padded.size(); ++i) keys.push_back("c" + std::to_string(n) + ":" + padded.substr(i, len));
  }
  for (int n : cfg.word_ngram_orders) {
    const auto len = static_cast<std::size_t>(n);
    for (std::size_t i = 0; i + len <= toks.size(); ++i) {
      std::string k = "w" + std::to_string(n) + ":" + toks[i];
      for (std::size_t j = 1; j < len; ++j) k += "\x1f" + toks[i + j];
      keys.push_back(std::move(k));
    }
  }
  if (cfg.include_pair_feats) {
    std::set<std::string> lf_set;
    for (auto& t : detail::lf_feature_tokens(lf)) lf_set.insert(std::move(t));
    std::set<std::string> cand_set(toks.begin(), toks.end());
    for (const auto& a : lf_set)
      for (const auto& b : cand_set) keys.push_back("p:" + a + "\x1f" + b);
  }
  return keys;
}

inline std::uint32_t feature_index(std::string_view key, std::uint32_t hash_dim) {
  return static_cast<std::uint32_t>(fnv1a64(key) & (hash_dim - 1));
}

// Hashed counts, L2-normalized, plus dense length features. Pure function of
// its inputs.
inline FeatureVector featurize(std::string_view lf, std::string_view candidate, const FeatureConfig& cfg) {
  cfg.validate();
  FeatureVector fv;
  fv.hash_dim = cfg.hash_dim;
  std::unordered_map<std::uint32_t, double> counts;
  for (const auto& key : feature_keys(lf, candidate, cfg)) counts[feature_index(key, cfg.hash_dim)] += 1.0;
  fv.hashed.assign(counts.begin(), counts.end());
  std::sort(fv.hashed.begin(), fv.hashed.end());
  double norm = 0.0;
  for (const auto& [i, v] : fv.hashed) norm += v * v;
  norm = std::sqrt(norm);
  if (norm > 0)
    for (auto& [i, v] : fv.hashed) v /= norm;
  if (cfg.include_length_feats) {
    const double cand_tokens = static_cast<double>(split_whitespace(candidate).size());
    const double lf_tokens = static_cast<double>(std::max<std::size_t>(1, detail::lf_feature_tokens(lf).size()));
    fv.length = {std::log1p(cand_tokens), cand_tokens / lf_tokens, std::log1p(static_cast<double>(trim(candidate).size()))};
  }
  return fv;
}

// ---------------------------------------------------------------- model

struct TrainMeta {
  std::uint64_t seed = 0;
  int epochs_run = 0;
  int best_epoch = 0;
  double best_dev_loss = std::numeric_limits<double>::infinity();
  std::vector<double> dev_loss_history;
  std::string weight_mode = "uniform";
  std::string optimizer = "adaptive-moment";
  double learning_rate = 0.0;

  bool operator==(const TrainMeta&) const = default;
};

struct RerankerModel {
  FeatureConfig features;
  double gamma = 0.1;
  double bias = 0.0;
  std::array<double, kLengthFeatures> length_weights{};
  std::vector<double> weights;  // hash_dim entries
  TrainMeta meta;

  static RerankerModel zeros(const FeatureConfig& cfg, double gamma = 0.1) {
    cfg.validate();
    RerankerModel m;
    m.features = cfg;
    m.gamma = gamma;
    m.weights.assign(cfg.hash_dim, 0.0);
    return m;
  }

  void validate() const {
    features.validate();
    if (weights.size() != features.hash_dim)
      throw DataError("model has " + std::to_string(weights.size()) + " weights for hash_dim " +
                      std::to_string(features.hash_dim));
    if (!(gamma >= 0.0)) throw DataError("model gamma must be >= 0");
  }

  bool operator==(const RerankerModel&) const = default;
};

inline double score(const RerankerModel& model, const FeatureVector& fv) {
  if (fv.hash_dim != model.weights.size())
    throw DataError("feature vector built for hash_dim " + std::to_string(fv.hash_dim) + " but model has " +
                    std::to_string(model.weights.size()) + " weights");
  double s = model.bias;
  for (std::size_t k = 0; k < kLengthFeatures; ++k) s += model.length_weights[k] * fv.length[k];
  for (const auto& [i, v] : fv.hashed) s += model.weights[i] * v;
  return s;
}

inline double score(const RerankerModel& model, std::string_view lf, std::string_view candidate) {
  model.validate();
  return score(model, featurize(lf, candidate, model.features));
}

inline std::vector<double> score_set(const RerankerModel& model, const CandidateSet& set) {
  model.validate();
  std::vector<double> out;
  out.reserve(set.size());
  for (const auto& c : set.candidates()) out.push_back(score(model, featurize(set.lf(), c.text, model.features)));
  return out;
}

// ---------------------------------------------------------------- loss

namespace detail {

inline void check_loss_inputs(std::span<const double> gold, std::span<const double> pred) {
  if (gold.size() != pred.size())
    throw DataError("set_loss: gold has " + std::to_string(gold.size()) + " entries, pred has " +
                    std::to_string(pred.size()));
  if (gold.size() < 2) throw DataError("set_loss needs at least 2 candidates");
}

}  // namespace detail

// L = sum over ordered pairs i != j of max(0, -z_ij (zhat_ij + gamma)) / (n (n - 1)),
// z_ij = Q_i - Q_j, zhat_ij = R_i - R_j.
inline double set_loss(std::span<const double> gold, std::span<const double> pred, double gamma) {
  detail::check_loss_inputs(gold, pred);
  const std::size_t n = gold.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double z = gold[i] - gold[j];
      const double zhat = pred[i] - pred[j];
      total += std::max(0.0, -z * (zhat + gamma));
    }
  }
  return total / static_cast<double>(n * (n - 1));
}

// dL/dR. A hinge exactly at zero takes the zero side; tied gold (z = 0)
// contributes nothing.
inline std::vector<double> set_loss_gradient_wrt_scores(std::span<const double> gold, std::span<const double> pred,
                                                        double gamma) {
  detail::check_loss_inputs(gold, pred);
  const std::size_t n = gold.size();
  const double norm = static_cast<double>(n * (n - 1));
  std::vector<double> grad(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double z = gold[i] - gold[j];
      const double zhat = pred[i] - pred[j];
      if (-z * (zhat + gamma) > 0.0) {
        grad[i] -= z / norm;
        grad[j] += z / norm;
      }
    }
  }
  return grad;
}

struct ParameterGradient {
  double bias = 0.0;
  std::array<double, kLengthFeatures> length{};
  std::vector<std::pair<std::uint32_t, double>> hashed;  // sorted by index, unique
};

// Chain rule through the linear score: dL/dw = sum_i dL/dR_i * x_i.
inline ParameterGradient set_loss_gradient(std::span<const double> gold, std::span<const double> pred, double gamma,
                                           std::span<const FeatureVector> features) {
  if (features.size() != gold.size()) throw DataError("set_loss_gradient: one feature vector per candidate required");
  const auto dr = set_loss_gradient_wrt_scores(gold, pred, gamma);
  ParameterGradient g;
  // Per-thread dense scratch; `touched` lists the slots to read back and reset.
  thread_local std::vector<double> scratch;
  thread_local std::vector<char> marked;
  std::vector<std::uint32_t> touched;
  for (std::size_t i = 0; i < dr.size(); ++i) {
    if (dr[i] == 0.0) continue;
    g.bias += dr[i];
    for (std::size_t k = 0; k < kLengthFeatures; ++k) g.length[k] += dr[i] * features[i].length[k];
    if (scratch.size() < features[i].hash_dim) {
      scratch.assign(features[i].hash_dim, 0.0);
      marked.assign(features[i].hash_dim, 0);
    }
    for (const auto& [idx, v] : features[i].hashed) {
      if (!marked[idx]) {
        marked[idx] = 1;
        touched.push_back(idx);
      }
      scratch[idx] += dr[i] * v;
    }
  }
  std::sort(touched.begin(), touched.end());
  g.hashed.reserve(touched.size());
  for (auto idx : touched) {
    g.hashed.emplace_back(idx, scratch[idx]);
    scratch[idx] = 0.0;
    marked[idx] = 0;
  }
  return g;
}

// ---------------------------------------------------------------- training

enum class Optimizer { sgd, adaptive_moment };
enum class WeightMode { uniform, set_size };

inline std::string_view to_string(WeightMode m) { return m == WeightMode::uniform ? "uniform" : "set-size"; }
inline std::string_view to_string(Optimizer o) { return o == Optimizer::sgd ? "sgd" : "adaptive-moment"; }

inline std::optional<WeightMode> parse_weight_mode(std::string_view s) {
  if (s == "uniform") return WeightMode::uniform;
  if (s == "set-size") return WeightMode::set_size;
  return std::nullopt;
}

inline std::optional<Optimizer> parse_optimizer(std::string_view s) {
  if (s == "sgd") return Optimizer::sgd;
  if (s == "adaptive-moment" || s == "adam") return Optimizer::adaptive_moment;
  return std::nullopt;
}

struct TrainConfig {
  int max_epochs = 100;
  int patience = 10;
  double learning_rate = 1e-4;
  Optimizer optimizer = Optimizer::adaptive_moment;
  std::uint64_t seed = 0;
  double gamma = 0.1;
  WeightMode weight_mode = WeightMode::uniform;
  // Epochs during which only bias and length weights move; 0 disables the
  // two-phase schedule.
  int warmup_epochs = 10;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t workers = 1;

  void validate() const {
    if (max_epochs < 1) throw ConfigError("train.max_epochs must be >= 1");
    if (patience < 1) throw ConfigError("train.patience must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
    if (!(gamma >= 0.0)) throw ConfigError("train.gamma must be >= 0");
    if (warmup_epochs < 0) throw ConfigError("train.warmup_epochs must be >= 0");
  }
};

// Size of each set divided by the mean set size; averages to exactly 1 up to
// rounding.
inline std::vector<double> set_size_weights(std::span<const std::size_t> sizes) {
  if (sizes.empty()) return {};
  double mean = 0.0;
  for (auto s : sizes) mean += static_cast<double>(s);
  mean /= static_cast<double>(sizes.size());
  std::vector<double> w;
  w.reserve(sizes.size());
  for (auto s : sizes) w.push_back(static_cast<double>(s) / mean);
  return w;
}

struct RankingExample {
  std::vector<FeatureVector> features;
  std::vector<double> gold;
  double weight = 1.0;
};

inline std::vector<RankingExample> make_examples(const std::vector<CandidateSet>& sets,
                                                 const std::vector<std::vector<double>>& gold,
                                                 const FeatureConfig& cfg, std::size_t workers = 1) {
  if (sets.size() != gold.size()) throw DataError("one gold quality vector per candidate set required");
  std::vector<RankingExample> out(sets.size());
  parallel_for(sets.size(), workers, [&](std::size_t s) {
    if (gold[s].size() != sets[s].size())
      throw DataError("gold quality for '" + sets[s].lf_id() + "' has wrong length");
    out[s].gold = gold[s];
    out[s].features.reserve(sets[s].size());
    for (const auto& c : sets[s].candidates()) out[s].features.push_back(featurize(sets[s].lf(), c.text, cfg));
  });
  return out;
}

inline double mean_loss(const RerankerModel& model, const std::vector<RankingExample>& examples) {
  if (examples.empty()) return 0.0;
  double total = 0.0;
  std::vector<double> pred;
  for (const auto& ex : examples) {
    pred.clear();
    for (const auto& fv : ex.features) pred.push_back(score(model, fv));
    total += set_loss(ex.gold, pred, model.gamma);
  }
  return total / static_cast<double>(examples.size());
}

namespace detail {

// Adaptive-moment (or plain SGD) state with lazy per-coordinate updates:
// only coordinates present in a step's gradient are touched, with bias
// correction from the global step count.
class ParameterUpdater {
 public:
  ParameterUpdater(const TrainConfig& cfg, std::size_t dim)
      : cfg_(cfg), m_(dim + kLengthFeatures + 1, 0.0), v_(dim + kLengthFeatures + 1, 0.0), dim_(dim) {}

  void step(RerankerModel& model, const ParameterGradient& g, double weight, bool hashed_enabled) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    auto apply = [&](std::size_t slot, double& param, double grad) {
      grad *= weight;
      if (cfg_.optimizer == Optimizer::sgd) {
        param -= cfg_.learning_rate * grad;
        return;
      }
      m_[slot] = cfg_.beta1 * m_[slot] + (1.0 - cfg_.beta1) * grad;
      v_[slot] = cfg_.beta2 * v_[slot] + (1.0 - cfg_.beta2) * grad * grad;
      param -= cfg_.learning_rate * (m_[slot] / c1) / (std::sqrt(v_[slot] / c2) + cfg_.epsilon);
    };
    apply(dim_ + kLengthFeatures, model.bias, g.bias);
    if (model.features.include_length_feats)
      for (std::size_t k = 0; k < kLengthFeatures; ++k) apply(dim_ + k, model.length_weights[k], g.length[k]);
    if (hashed_enabled)
      for (const auto& [idx, grad] : g.hashed) apply(idx, model.weights[idx], grad);
  }

 private:
  TrainConfig cfg_;
  std::vector<double> m_, v_;
  std::size_t dim_;
  std::uint64_t t_ = 0;
};

}  // namespace detail

// One candidate set per update. Sets are visited in a seeded shuffled order
// each epoch. After every epoch the mean dev loss is computed; the returned
// model is the checkpoint with the lowest dev loss. Training stops once
// `patience` epochs pass without improvement. During the warmup phase only
// the bias and length weights are trained and patience is not counted.
inline RerankerModel train(const std::vector<RankingExample>& train_examples,
                           const std::vector<RankingExample>& dev_examples, const FeatureConfig& features,
                           const TrainConfig& cfg) {
  cfg.validate();
  if (train_examples.empty()) throw DataError("train: no training sets");
  if (dev_examples.empty()) throw DataError("train: no dev sets");
  for (const auto& ex : train_examples)
    if (ex.gold.size() < 2) throw DataError("train: every training set needs at least 2 candidates");

  RerankerModel model = RerankerModel::zeros(features, cfg.gamma);
  detail::ParameterUpdater updater(cfg, features.hash_dim);
  RerankerModel best = model;
  best.meta.best_dev_loss = std::numeric_limits<double>::infinity();
  TrainMeta meta;
  meta.seed = cfg.seed;
  meta.weight_mode = std::string(to_string(cfg.weight_mode));
  meta.optimizer = std::string(to_string(cfg.optimizer));
  meta.learning_rate = cfg.learning_rate;

  std::vector<std::size_t> order(train_examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> pred;
  int since_best = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const bool hashed_enabled = epoch > cfg.warmup_epochs;
    Rng rng(derive_seed(cfg.seed, "epoch", static_cast<std::uint64_t>(epoch)));
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t s : order) {
      const auto& ex = train_examples[s];
      pred.clear();
      for (const auto& fv : ex.features) pred.push_back(score(model, fv));
      const auto g = set_loss_gradient(ex.gold, pred, model.gamma, ex.features);
      if (g.hashed.empty() && g.bias == 0.0 && g.length == decltype(g.length){}) continue;
      updater.step(model, g, ex.weight, hashed_enabled);
    }
    const double dev = mean_loss(model, dev_examples);
    meta.dev_loss_history.push_back(dev);
    meta.epochs_run = epoch;
    if (dev < meta.best_dev_loss) {
      meta.best_dev_loss = dev;
      meta.best_epoch = epoch;
      best = model;
      since_best = 0;
    } else if (hashed_enabled && ++since_best >= cfg.patience) {
      break;
    }
  }
  best.meta = meta;
  return best;
}

// Convenience overload: builds examples and applies the weight mode.
inline RerankerModel train(const std::vector<CandidateSet>& sets, const std::vector<std::vector<double>>& gold,
                           const std::vector<CandidateSet>& dev_sets, const std::vector<std::vector<double>>& dev_gold,
                           const FeatureConfig& features, const TrainConfig& cfg) {
  auto train_examples = make_examples(sets, gold, features, cfg.workers);
  auto dev_examples = make_examples(dev_sets, dev_gold, features, cfg.workers);
  if (cfg.weight_mode == WeightMode::set_size) {
    std::vector<std::size_t> sizes;
    for (const auto& s : sets) sizes.push_back(s.size());
    const auto w = set_size_weights(sizes);
    for (std::size_t i = 0; i < train_examples.size(); ++i) train_examples[i].weight = w[i];
  }
  return train(train_examples, dev_examples, features, cfg);
}

// Seeded split of set indices into (train, dev). At least one set goes to
// each side when there are two or more sets.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_dev(std::size_t n, double dev_frac,
                                                                               std::uint64_t seed) {
  if (!(dev_frac > 0.0 && dev_frac < 1.0)) throw ConfigError("dev fraction must be in (0, 1)");
  if (n < 2) throw DataError("need at least 2 sets to carve a dev split");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, "dev-split"));
  rng.shuffle(std::span<std::size_t>(idx));
  auto n_dev = static_cast<std::size_t>(std::llround(dev_frac * static_cast<double>(n)));
  n_dev = std::clamp<std::size_t>(n_dev, 1, n - 1);
  std::vector<std::size_t> dev(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_dev));
  std::vector<std::size_t> tr(idx.begin() + static_cast<std::ptrdiff_t>(n_dev), idx.end());
  std::sort(dev.begin(), dev.end());
  std::sort(tr.begin(), tr.end());
  return {tr, dev};
}

// ---------------------------------------------------------------- persistence

inline nlohmann::json to_json(const RerankerModel& m) {
  using nlohmann::json;
  json sparse = json::array();
  std::size_t nnz = 0;
  for (double w : m.weights) nnz += w != 0.0;
  json j;
  j["format_version"] = 1;
  j["feature_config"] = {{"char_ngram_orders", m.features.char_ngram_orders},
                         {"word_ngram_orders", m.features.word_ngram_orders},
                         {"hash_dim", m.features.hash_dim},
                         {"include_length_feats", m.features.include_length_feats},
                         {"include_pair_feats", m.features.include_pair_feats}};
  j["gamma"] = m.gamma;
  j["bias"] = m.bias;
  j["length_weights"] = m.length_weights;
  if (nnz * 2 < m.weights.size()) {
    for (std::size_t i = 0; i < m.weights.size(); ++i)
      if (m.weights[i] != 0.0) sparse.push_back({i, m.weights[i]});
    j["weights"] = {{"encoding", "sparse"}, {"values", std::move(sparse)}};
  } else {
    j["weights"] = {{"encoding", "dense"}, {"values", m.weights}};
  }
  j["train_meta"] = {{"seed", m.meta.seed},
                     {"epochs_run", m.meta.epochs_run},
                     {"best_epoch", m.meta.best_epoch},
                     {"best_dev_loss", std::isfinite(m.meta.best_dev_loss) ? json(m.meta.best_dev_loss) : json(nullptr)},
                     {"dev_loss_history", m.meta.dev_loss_history},
                     {"weight_mode", m.meta.weight_mode},
                     {"optimizer", m.meta.optimizer},
                     {"learning_rate", m.meta.learning_rate}};
  return j;
}

inline RerankerModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format_version").get<int>() != 1) throw DataError("unsupported model format_version");
    RerankerModel m;
    const auto& fc = j.at("feature_config");
    m.features.char_ngram_orders = fc.at("char_ngram_orders").get<std::set<int>>();
    m.features.word_ngram_orders = fc.at("word_ngram_orders").get<std::set<int>>();
    m.features.hash_dim = fc.at("hash_dim").get<std::uint32_t>();
    m.features.include_length_feats = fc.at("include_length_feats").get<bool>();
    m.features.include_pair_feats = fc.value("include_pair_feats", true);
    m.gamma = j.at("gamma").get<double>();
    m.bias = j.at("bias").get<double>();
    m.length_weights = j.at("length_weights").get<std::array<double, kLengthFeatures>>();
    m.weights.assign(m.features.hash_dim, 0.0);
    const auto& w = j.at("weights");
    if (w.at("encoding") == "dense") {
      m.weights = w.at("values").get<std::vector<double>>();
    } else {
      for (const auto& entry : w.at("values")) {
        const auto idx = entry.at(0).get<std::size_t>();
        if (idx >= m.weights.size()) throw DataError("model weight index out of range");
        m.weights[idx] = entry.at(1).get<double>();
      }
    }
    const auto& meta = j.at("train_meta");
    m.meta.seed = meta.at("seed").get<std::uint64_t>();
    m.meta.epochs_run = meta.at("epochs_run").get<int>();
    m.meta.best_epoch = meta.at("best_epoch").get<int>();
    m.meta.best_dev_loss = meta.at("best_dev_loss").is_null() ? std::numeric_limits<double>::infinity()
                                                              : meta.at("best_dev_loss").get<double>();
    m.meta.dev_loss_history = meta.at("dev_loss_history").get<std::vector<double>>();
    m.meta.weight_mode = meta.at("weight_mode").get<std::string>();
    m.meta.optimizer = meta.at("optimizer").get<std::string>();
    m.meta.learning_rate = meta.at("learning_rate").get<double>();
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed model file: ") + e.what());
  }
}

inline void save_model(const RerankerModel& m, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write model to '" + path.string() + "'");
  out << to_json(m).dump() << '\n';
}

inline RerankerModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model '" + path.string() + "'");
  try {
    return model_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("malformed model file '" + path.string() + "': " + e.what());
  }
}

}  // namespace lfrerank
