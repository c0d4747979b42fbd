#include <cmath>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include <gtest/gtest.h>

#include "lfrerank/random.hpp"
#include "lfrerank/reranker.hpp"
#include "lfrerank/synthetic.hpp"
#include "test_util.hpp"

using namespace lfrerank;

namespace {

// Unordered-pair form of the loss: each pair {i, j} contributes the hinge at
// +gamma and at -gamma.
double loss_oracle(const std::vector<double>& q, const std::vector<double>& r, double gamma) {
  const std::size_t n = q.size();
  long double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const long double z = q[i] - q[j];
      const long double zh = r[i] - r[j];
      total += std::max<long double>(0.0, -z * (zh + gamma)) + std::max<long double>(0.0, -z * (zh - gamma));
    }
  return static_cast<double>(total / static_cast<long double>(n * (n - 1)));
}

std::vector<double> random_vector(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = 4.0 * rng.uniform() - 2.0;
  return v;
}

FeatureConfig small_features(std::uint32_t dim = 1u << 12) {
  FeatureConfig f;
  f.hash_dim = dim;
  return f;
}

CandidateSet set_of(const std::string& id, const std::vector<std::string>& texts) {
  std::vector<Candidate> c;
  for (const auto& t : texts) c.push_back({t, 1, -1.0});
  return CandidateSet(id, std::move(c), "answer ( largest ( state ) )", "what is the largest state");
}

}  // namespace

TEST(SetLoss, WorkedExamples) {
  EXPECT_DOUBLE_EQ(set_loss(std::vector<double>{1, 0}, std::vector<double>{0, 1}, 0.1), 1.0);
  EXPECT_DOUBLE_EQ(set_loss(std::vector<double>{1, 0}, std::vector<double>{0, 0}, 0.1), 0.05);
  EXPECT_DOUBLE_EQ(set_loss(std::vector<double>{1, 0}, std::vector<double>{1, 0}, 0.1), 0.0);
  EXPECT_DOUBLE_EQ(set_loss(std::vector<double>{2, 2, 2}, std::vector<double>{5, -1, 0}, 0.1), 0.0);
  EXPECT_THROW(set_loss(std::vector<double>{1}, std::vector<double>{1}, 0.1), DataError);
  EXPECT_THROW(set_loss(std::vector<double>{1, 2}, std::vector<double>{1}, 0.1), DataError);
}

TEST(SetLoss, MatchesUnorderedPairOracle) {
  Rng rng(1);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto n = 2 + rng.index(15);
    const auto q = random_vector(rng, n);
    const auto r = random_vector(rng, n);
    const double gamma = rng.uniform();
    EXPECT_NEAR(set_loss(q, r, gamma), loss_oracle(q, r, gamma), 1e-12);
  }
}

TEST(SetLoss, ZeroExactlyWhenPredictionsKeepAGammaMargin) {
  const double gamma = 0.1;
  EXPECT_GT(set_loss(std::vector<double>{1, 0}, std::vector<double>{gamma / 2, 0}, gamma), 0.0);
  EXPECT_EQ(set_loss(std::vector<double>{1, 0}, std::vector<double>{gamma, 0}, gamma), 0.0);
  EXPECT_GT(set_loss(std::vector<double>{1, 0}, std::vector<double>{-gamma, 0}, gamma), 0.0);

  Rng rng(2);
  for (int trial = 0; trial < 500; ++trial) {
    const auto n = 2 + rng.index(10);
    std::vector<double> q(n);
    for (auto& x : q) x = static_cast<double>(rng.index(5));
    auto r = random_vector(rng, n);
    bool margin = true;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (q[i] > q[j] && r[i] - r[j] < gamma) margin = false;
    EXPECT_EQ(set_loss(q, r, gamma) == 0.0, margin);
  }
}

TEST(SetLoss, PermutationAndShiftInvariant) {
  Rng rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const auto n = 2 + rng.index(12);
    auto q = random_vector(rng, n);
    auto r = random_vector(rng, n);
    const double base = set_loss(q, r, 0.1);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(std::span<std::size_t>(perm));
    std::vector<double> qp(n), rp(n), qs(n), rs(n);
    const double c = 10.0 * rng.uniform();
    for (std::size_t i = 0; i < n; ++i) {
      qp[i] = q[perm[i]];
      rp[i] = r[perm[i]];
      qs[i] = q[i] + c;
      rs[i] = r[i] - c;
    }
    EXPECT_NEAR(set_loss(qp, rp, 0.1), base, 1e-12);
    EXPECT_NEAR(set_loss(qs, rs, 0.1), base, 1e-12);
  }
}

TEST(SetLossGradient, MatchesCentralFiniteDifferences) {
  Rng rng(4);
  const double h = 1e-6;
  int checked = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const auto n = 2 + rng.index(10);
    const auto q = random_vector(rng, n);
    auto r = random_vector(rng, n);
    const double gamma = 0.1;
    // Skip configurations within h of a hinge, where the loss is not differentiable.
    bool near_kink = false;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j && std::abs(r[i] - r[j] + gamma) < 1e-4) near_kink = true;
    if (near_kink) continue;
    const auto g = set_loss_gradient_wrt_scores(q, r, gamma);
    for (std::size_t k = 0; k < n; ++k) {
      auto up = r, down = r;
      up[k] += h;
      down[k] -= h;
      const double fd = (set_loss(q, up, gamma) - set_loss(q, down, gamma)) / (2 * h);
      EXPECT_NEAR(g[k], fd, 1e-6);
    }
    ++checked;
  }
  EXPECT_GT(checked, 300);
}

TEST(SetLossGradient, ChainRuleThroughFeatures) {
  Rng rng(5);
  const auto feats = small_features(1u << 8);
  const auto set = set_of("s", {"what is the largest state", "largest state", "state the what", "what is m0 ( x )"});
  std::vector<FeatureVector> fvs;
  for (const auto& c : set.candidates()) fvs.push_back(featurize(set.lf(), c.text, feats));
  auto model = RerankerModel::zeros(feats);
  for (auto& w : model.weights) w = rng.normal();
  for (auto& w : model.length_weights) w = rng.normal();
  const std::vector<double> q{1.0, 0.3, -0.5, -1.2};
  auto loss_at = [&](const RerankerModel& m) {
    std::vector<double> pred;
    for (const auto& fv : fvs) pred.push_back(score(m, fv));
    return set_loss(q, pred, m.gamma);
  };
  std::vector<double> pred;
  for (const auto& fv : fvs) pred.push_back(score(model, fv));
  const auto g = set_loss_gradient(q, pred, model.gamma, fvs);
  const double h = 1e-7;
  for (const auto& [idx, val] : g.hashed) {
    auto up = model, down = model;
    up.weights[idx] += h;
    down.weights[idx] -= h;
    EXPECT_NEAR(val, (loss_at(up) - loss_at(down)) / (2 * h), 1e-6);
  }
  for (std::size_t k = 0; k < kLengthFeatures; ++k) {
    auto up = model, down = model;
    up.length_weights[k] += h;
    down.length_weights[k] -= h;
    EXPECT_NEAR(g.length[k], (loss_at(up) - loss_at(down)) / (2 * h), 1e-6);
  }
  EXPECT_NEAR(g.bias, 0.0, 1e-15);
}

TEST(Features, DeterministicAndNormalized) {
  const auto cfg = small_features();
  const auto a = featurize("answer ( largest ( state ) )", "what is the largest state", cfg);
  const auto b = featurize("answer ( largest ( state ) )", "what is the largest state", cfg);
  EXPECT_EQ(a.hashed, b.hashed);
  EXPECT_EQ(a.length, b.length);
  double norm = 0.0;
  for (std::size_t i = 0; i < a.hashed.size(); ++i) {
    norm += a.hashed[i].second * a.hashed[i].second;
    if (i > 0) EXPECT_LT(a.hashed[i - 1].first, a.hashed[i].first);
  }
  EXPECT_NEAR(norm, 1.0, 1e-12);
  EXPECT_NE(featurize("answer ( largest ( state ) )", "what is the smallest state", cfg).hashed, a.hashed);
  EXPECT_DOUBLE_EQ(a.length[0], std::log1p(5.0));

  FeatureConfig bad = cfg;
  bad.hash_dim = 1000;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Features, CollisionRateIsSmallAtDefaultDimension) {
  FeatureConfig cfg;
  ASSERT_EQ(cfg.hash_dim, 1u << 18);
  SyntheticConfig sc;
  sc.num_sets = 300;
  const auto corpus = make_linear_corpus(sc);
  std::unordered_set<std::string> keys;
  for (const auto& s : corpus.sets)
    for (const auto& c : s.candidates())
      for (auto& k : feature_keys(s.lf(), c.text, cfg)) keys.insert(std::move(k));
  std::unordered_set<std::uint32_t> slots;
  for (const auto& k : keys) slots.insert(feature_index(k, cfg.hash_dim));
  ASSERT_GT(keys.size(), 5000u);
  const double rate = 1.0 - static_cast<double>(slots.size()) / static_cast<double>(keys.size());
  EXPECT_LT(rate, 0.05) << keys.size() << " keys in " << slots.size() << " slots";
}

TEST(Score, LinearInParameters) {
  Rng rng(6);
  const auto cfg = small_features(1u << 8);
  const auto fv = featurize("answer ( m0 )", "what is m0", cfg);
  auto a = RerankerModel::zeros(cfg), b = RerankerModel::zeros(cfg), sum = RerankerModel::zeros(cfg);
  for (std::size_t i = 0; i < a.weights.size(); ++i) {
    a.weights[i] = rng.normal();
    b.weights[i] = rng.normal();
    sum.weights[i] = a.weights[i] + b.weights[i];
  }
  a.bias = 0.5;
  b.bias = -2.0;
  sum.bias = -1.5;
  EXPECT_NEAR(score(sum, fv), score(a, fv) + score(b, fv), 1e-12);
  EXPECT_EQ(score(RerankerModel::zeros(cfg), fv), 0.0);
}

TEST(Score, RejectsHashDimMismatch) {
  const auto model = RerankerModel::zeros(small_features(1u << 8));
  const auto fv = featurize("answer ( m0 )", "what is m0", small_features(1u << 10));
  EXPECT_THROW(score(model, fv), DataError);
}

TEST(SetSizeWeights, AverageToOne) {
  const std::vector<std::size_t> sizes{2, 10, 8, 4, 6};
  const auto w = set_size_weights(sizes);
  const std::vector<double> expected{1.0 / 3, 5.0 / 3, 4.0 / 3, 2.0 / 3, 1.0};
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(w[i], expected[i], 1e-15);
  EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0) / 5.0, 1.0, 1e-15);

  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::size_t> s(1 + rng.index(50));
    for (auto& x : s) x = 1 + rng.index(30);
    const auto ws = set_size_weights(s);
    EXPECT_NEAR(std::accumulate(ws.begin(), ws.end(), 0.0) / static_cast<double>(s.size()), 1.0, 1e-12);
  }
}

TEST(Train, ReducesLossOnLinearlyGeneratedData) {
  SyntheticConfig sc;
  sc.num_sets = 300;
  sc.features.hash_dim = 1u << 14;
  const auto corpus = make_linear_corpus(sc);
  std::vector<CandidateSet> tr(corpus.sets.begin(), corpus.sets.begin() + 250), dv(corpus.sets.begin() + 250, corpus.sets.end());
  std::vector<std::vector<double>> qtr(corpus.quality.begin(), corpus.quality.begin() + 250),
      qdv(corpus.quality.begin() + 250, corpus.quality.end());
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.max_epochs = 25;
  cfg.warmup_epochs = 2;
  const auto model = train(tr, qtr, dv, qdv, sc.features, cfg);
  const auto dev_examples = make_examples(dv, qdv, sc.features);
  const double initial = mean_loss(RerankerModel::zeros(sc.features), dev_examples);
  EXPECT_LT(model.meta.best_dev_loss, 0.5 * initial);
  EXPECT_NEAR(mean_loss(model, dev_examples), model.meta.best_dev_loss, 1e-12);
}

TEST(Train, EarlyStoppingReturnsBestCheckpoint) {
  // Dev gold is the reverse of train gold, so dev loss never improves after epoch 1.
  const std::vector<CandidateSet> sets{set_of("a", {"what is the largest state", "largest", "state state state"}),
                                       set_of("b", {"what is the largest state in m0", "m0", "the the"})};
  const std::vector<std::vector<double>> gold{{1.0, 0.0, -1.0}, {1.0, 0.0, -1.0}};
  const std::vector<std::vector<double>> reversed{{-1.0, 0.0, 1.0}, {-1.0, 0.0, 1.0}};
  TrainConfig cfg;
  cfg.warmup_epochs = 0;
  cfg.patience = 1;
  cfg.max_epochs = 50;
  cfg.learning_rate = 0.05;
  cfg.seed = 3;
  const auto feats = small_features();
  const auto model = train(sets, gold, sets, reversed, feats, cfg);
  EXPECT_EQ(model.meta.best_epoch, 1);
  EXPECT_EQ(model.meta.epochs_run, 2);
  ASSERT_EQ(model.meta.dev_loss_history.size(), 2u);
  EXPECT_GE(model.meta.dev_loss_history[1], model.meta.dev_loss_history[0]);

  cfg.max_epochs = 1;
  const auto one = train(sets, gold, sets, reversed, feats, cfg);
  EXPECT_EQ(one.weights, model.weights);
  EXPECT_EQ(one.length_weights, model.length_weights);
}

TEST(Train, WarmupLeavesHashedWeightsUntouched) {
  const std::vector<CandidateSet> sets{set_of("a", {"what is the largest state", "largest", "state state state"}),
                                       set_of("b", {"what is the largest state in m0", "m0", "the the"})};
  const std::vector<std::vector<double>> gold{{1.0, 0.0, -1.0}, {1.0, 0.0, -1.0}};
  TrainConfig cfg;
  cfg.warmup_epochs = 5;
  cfg.max_epochs = 5;
  cfg.learning_rate = 0.01;
  const auto model = train(sets, gold, sets, gold, small_features(), cfg);
  EXPECT_EQ(model.meta.epochs_run, 5);
  for (double w : model.weights) ASSERT_EQ(w, 0.0);
  EXPECT_NE(model.length_weights, (std::array<double, kLengthFeatures>{}));

  cfg.max_epochs = 6;
  const auto after = train(sets, gold, sets, gold, small_features(), cfg);
  EXPECT_TRUE(std::any_of(after.weights.begin(), after.weights.end(), [](double w) { return w != 0.0; }));
}

TEST(Train, DeterministicAcrossWorkerCounts) {
  SyntheticConfig sc;
  sc.num_sets = 60;
  sc.features.hash_dim = 1u << 12;
  const auto corpus = make_linear_corpus(sc);
  std::vector<CandidateSet> tr(corpus.sets.begin(), corpus.sets.begin() + 50), dv(corpus.sets.begin() + 50, corpus.sets.end());
  std::vector<std::vector<double>> qtr(corpus.quality.begin(), corpus.quality.begin() + 50),
      qdv(corpus.quality.begin() + 50, corpus.quality.end());
  TrainConfig cfg;
  cfg.max_epochs = 12;
  cfg.warmup_epochs = 2;
  cfg.learning_rate = 1e-3;
  cfg.workers = 1;
  const auto a = train(tr, qtr, dv, qdv, sc.features, cfg);
  cfg.workers = 4;
  const auto b = train(tr, qtr, dv, qdv, sc.features, cfg);
  EXPECT_EQ(a, b);
}

TEST(Train, RejectsBadInputs) {
  const auto feats = small_features();
  TrainConfig cfg;
  EXPECT_THROW(train(std::vector<RankingExample>{}, std::vector<RankingExample>{RankingExample{}}, feats, cfg), DataError);
  cfg.patience = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.learning_rate = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(SplitDev, SeededAndDisjoint) {
  const auto [tr, dv] = split_dev(100, 0.1, 9);
  EXPECT_EQ(dv.size(), 10u);
  EXPECT_EQ(tr.size(), 90u);
  std::unordered_set<std::size_t> all(tr.begin(), tr.end());
  for (auto i : dv) EXPECT_TRUE(all.insert(i).second);
  EXPECT_EQ(all.size(), 100u);
  EXPECT_EQ(split_dev(100, 0.1, 9), split_dev(100, 0.1, 9));
  EXPECT_NE(split_dev(100, 0.1, 9), split_dev(100, 0.1, 10));
  EXPECT_EQ(split_dev(2, 0.01, 1).second.size(), 1u);
  EXPECT_THROW(split_dev(1, 0.1, 1), DataError);
  EXPECT_THROW(split_dev(10, 1.0, 1), ConfigError);
}

TEST(ModelIo, RoundTripIsExact) {
  testutil::TempDir dir;
  Rng rng(10);
  auto model = RerankerModel::zeros(small_features());
  for (int i = 0; i < 50; ++i) model.weights[rng.index(model.weights.size())] = rng.normal();
  model.bias = 0.1 + 0.2;
  model.length_weights = {1e-300, -3.5, 2.0 / 3.0};
  model.meta.dev_loss_history = {0.5, 0.25};
  model.meta.best_epoch = 2;
  save_model(model, dir / "sparse.json");
  EXPECT_EQ(load_model(dir / "sparse.json"), model);

  for (auto& w : model.weights) w = rng.normal();
  save_model(model, dir / "dense.json");
  EXPECT_EQ(load_model(dir / "dense.json"), model);

  testutil::write_file(dir / "bad.json", "{\"features\": 1}");
  EXPECT_THROW(load_model(dir / "bad.json"), DataError);
}
