// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include "lfrerank/evaluation.hpp"
#include "lfrerank/genclient.hpp"
#include "lfrerank/pipeline.hpp"
#include "lfrerank/reranker.hpp"
#include "lfrerank/scoring.hpp"
#include "lfrerank/selection.hpp"
#include "lfrerank/synthetic.hpp"

using namespace lfrerank;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::vector<double> uniform_vector(Rng& rng, std::size_t n, double scale) {
  std::vector<double> v(n);
  for (auto& x : v) x = scale * (2.0 * rng.uniform() - 1.0);
  return v;
}

// ---------------------------------------------------------------- loss

double ordered_pair_loss(const std::vector<double>& q, const std::vector<double>& r, double gamma) {
  long double total = 0;
  const std::size_t n = q.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) {
        const long double v = -(static_cast<long double>(q[i]) - q[j]) * ((static_cast<long double>(r[i]) - r[j]) + gamma);
        if (v > 0) total += v;
      }
  return static_cast<double>(total / static_cast<long double>(n * (n - 1)));
}

Outcome loss_oracle() {
  const auto t0 = Clock::now();
  Rng rng(101);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n = 2 + rng.index(7);
    const auto q = uniform_vector(rng, n, 1.0), r = uniform_vector(rng, n, 1.0);
    const double gamma = rng.uniform();
    worst = std::max(worst, std::abs(set_loss(q, r, gamma) - ordered_pair_loss(q, r, gamma)));
  }
  const double hand = set_loss(std::vector<double>{1, 0}, std::vector<double>{0, 1}, 0.1);
  const double secs = seconds_since(t0);
  return {worst <= 1e-12 && hand == 1.0 && secs < 5.0,
          fmt("max |diff| %.3g", worst) + fmt(", hand case %.17g", hand) + fmt(", %.2f s", secs)};
}

// ---------------------------------------------------------------- gradient

double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
  return std::sqrt(diff) / denom;
}

// True when every hinge argument is at least `margin` away from zero, so a
// step of h < margin / 2 in any score never crosses a kink.
bool away_from_kinks(const std::vector<double>& q, const std::vector<double>& r, double gamma, double margin) {
  for (std::size_t i = 0; i < q.size(); ++i)
    for (std::size_t j = 0; j < q.size(); ++j)
      if (i != j && q[i] != q[j] && std::abs((r[i] - r[j]) + gamma) < margin) return false;
  return true;
}

Outcome gradient_check() {
  const auto t0 = Clock::now();
  constexpr double h = 1e-6;
  Rng rng(102);
  FeatureConfig fc;
  fc.hash_dim = 1u << 10;
  double worst_scores = 0.0, worst_params = 0.0;
  int instances = 0;
  const std::vector<std::string> words{"what", "is", "the", "largest", "state", "river", "near", "m0", "city", "of"};
  while (instances < 100) {
    const auto n = 2 + rng.index(7);
    RerankerModel model = RerankerModel::zeros(fc, 0.1);
    for (auto& w : model.weights) w = 0.5 * rng.normal();
    model.bias = rng.normal();
    for (auto& w : model.length_weights) w = rng.normal();
    std::vector<FeatureVector> feats;
    for (std::size_t i = 0; i < n; ++i) {
      std::string text;
      for (std::size_t k = 0, len = 2 + rng.index(6); k < len; ++k) text += (k ? " " : "") + words[rng.index(words.size())];
      feats.push_back(featurize("answer ( largest ( state ( all ) ) )", text, fc));
    }
    const auto q = uniform_vector(rng, n, 1.0);
    std::vector<double> r;
    for (const auto& fv : feats) r.push_back(score(model, fv));
    if (!away_from_kinks(q, r, model.gamma, 1e-3)) continue;
    ++instances;

    // With respect to the scores.
    const auto analytic = set_loss_gradient_wrt_scores(q, r, model.gamma);
    std::vector<double> numeric(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto up = r, down = r;
      up[i] += h;
      down[i] -= h;
      numeric[i] = (set_loss(q, up, model.gamma) - set_loss(q, down, model.gamma)) / (2 * h);
    }
    worst_scores = std::max(worst_scores, relative_error(analytic, numeric));

    // With respect to the bias and every touched hashed weight.
    const auto g = set_loss_gradient(q, r, model.gamma, feats);
    auto loss_at = [&](const RerankerModel& m) {
      std::vector<double> pr;
      for (const auto& fv : feats) pr.push_back(score(m, fv));
      return set_loss(q, pr, m.gamma);
    };
    std::vector<double> pa(1, g.bias), pn;
    {
      auto up = model, down = model;
      up.bias += h;
      down.bias -= h;
      pn.push_back((loss_at(up) - loss_at(down)) / (2 * h));
    }
    for (const auto& [idx, v] : g.hashed) {
      auto up = model, down = model;
      up.weights[idx] += h;
      down.weights[idx] -= h;
      pa.push_back(v);
      pn.push_back((loss_at(up) - loss_at(down)) / (2 * h));
    }
    worst_params = std::max(worst_params, relative_error(pa, pn));
  }
  const double secs = seconds_since(t0);
  return {worst_scores < 1e-5 && worst_params < 1e-5 && secs < 30.0,
          fmt("max rel err %.3g (scores)", worst_scores) + fmt(", %.3g (parameters)", worst_params) +
              fmt(", %.2f s", secs)};
}

// ---------------------------------------------------------------- normalization

Outcome normalization() {
  Rng rng(103);
  double worst_mean = 0.0, worst_sd = 0.0, worst_general = 0.0;
  bool dyadic_exact = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto v = uniform_vector(rng, 2 + rng.index(30), 1.0 + 100.0 * rng.uniform());
    const auto z = apply_normalization(v, fit_normalization(v));
    const double mean = std::accumulate(z.begin(), z.end(), 0.0) / static_cast<double>(z.size());
    double ss = 0.0;
    for (double x : z) ss += (x - mean) * (x - mean);
    worst_mean = std::max(worst_mean, std::abs(mean));
    worst_sd = std::max(worst_sd, std::abs(std::sqrt(ss / static_cast<double>(z.size())) - 1.0));

    // Rescale one metric of a three-metric combination.
    const auto n = 2 + rng.index(10);
    std::map<std::string, std::vector<double>> metrics;
    for (const char* name : {"bleu", "parser", "ext"}) metrics[name] = uniform_vector(rng, n, 1.0);
    for (auto& x : metrics["ext"]) x = std::round(x * 1024.0) / 1024.0;
    const std::vector<std::string> names{"bleu", "parser", "ext"};
    const auto base = combine_metrics(metrics, names);

    auto dyadic = metrics;
    const double a = std::ldexp(1.0, static_cast<int>(rng.index(12)) - 6);
    const double b = static_cast<double>(static_cast<int>(rng.index(200)) - 100);
    for (auto& x : dyadic["ext"]) x = a * x + b;
    if (combine_metrics(dyadic, names) != base) dyadic_exact = false;

    auto general = metrics;
    const double ga = 0.01 + 100.0 * rng.uniform(), gb = 100.0 * (rng.uniform() - 0.5);
    for (auto& x : general["ext"]) x = ga * x + gb;
    const auto c = combine_metrics(general, names);
    for (std::size_t i = 0; i < n; ++i) worst_general = std::max(worst_general, std::abs(c[i] - base[i]));
  }
  return {worst_mean < 1e-9 && worst_sd < 1e-9 && dyadic_exact && worst_general < 1e-9,
          fmt("max |mean| %.3g", worst_mean) + fmt(", max |sd-1| %.3g", worst_sd) +
              (dyadic_exact ? ", bit-identical under power-of-two scale + integer shift" : ", dyadic NOT exact") +
              fmt(", general affine max diff %.3g", worst_general)};
}

// ---------------------------------------------------------------- accuracy oracles

ScoredLabels random_labeled(Rng& rng, std::size_t n, bool ties, int force_class = -1) {
  ScoredLabels s;
  for (std::size_t i = 0; i < n; ++i) {
    s.scores.push_back(ties ? static_cast<double>(rng.index(3)) : rng.normal());
    s.labels.push_back(force_class >= 0 ? force_class : (rng.uniform() < 0.5 ? 1 : 0));
  }
  return s;
}

bool mixed(const ScoredLabels& s) {
  const auto ones = std::count(s.labels.begin(), s.labels.end(), 1);
  return ones > 0 && ones < static_cast<long>(s.labels.size());
}

Outcome accuracy_oracles() {
  Rng rng(104);
  std::vector<ScoredLabels> sets;
  while (sets.size() < 500) {
    auto s = random_labeled(rng, 2 + rng.index(7), rng.index(2) == 0);
    if (mixed(s)) sets.push_back(std::move(s));
  }
  // Exhaustive enumeration: every candidate for top-1, every (positive,
  // negative) pair for ranking.
  double hits = 0, pairs = 0, ordered = 0;
  bool per_set_exact = true;
  for (const auto& s : sets) {
    const double top = *std::max_element(s.scores.begin(), s.scores.end());
    bool hit = true;
    double set_pairs = 0, set_ordered = 0;
    for (std::size_t i = 0; i < s.scores.size(); ++i) {
      if (s.scores[i] == top && s.labels[i] == 0) hit = false;
      for (std::size_t j = 0; j < s.scores.size(); ++j) {
        if (s.labels[i] != 1 || s.labels[j] != 0) continue;
        set_pairs += 1;
        set_ordered += s.scores[i] > s.scores[j] ? 1.0 : (s.scores[i] == s.scores[j] ? 0.5 : 0.0);
      }
    }
    hits += hit ? 1 : 0;
    pairs += set_pairs;
    ordered += set_ordered;
    const std::vector<ScoredLabels> one{s};
    if (top1_accuracy(one).value != (hit ? 1.0 : 0.0) || ranking_accuracy(one).value != set_ordered / set_pairs)
      per_set_exact = false;
  }
  const auto top1 = top1_accuracy(sets), rank = ranking_accuracy(sets);
  const bool pooled_exact = top1.value == hits / static_cast<double>(sets.size()) && rank.value == ordered / pairs;

  // Interleaving single-class sets changes nothing.
  auto padded = sets;
  for (int k = 0; k < 300; ++k) {
    const auto pos = rng.index(padded.size() + 1);
    padded.insert(padded.begin() + static_cast<std::ptrdiff_t>(pos),
                  random_labeled(rng, 1 + rng.index(8), rng.index(2) == 0, static_cast<int>(rng.index(2))));
  }
  const auto top1_p = top1_accuracy(padded), rank_p = ranking_accuracy(padded);
  const auto rank_ps = ranking_accuracy(padded, RankingPooling::per_set), rank_s = ranking_accuracy(sets, RankingPooling::per_set);
  const bool unaffected = top1_p.value == top1.value && rank_p.value == rank.value && rank_ps.value == rank_s.value &&
                          top1_p.sets_excluded == 300 && rank_p.sets_excluded == 300;
  return {per_set_exact && pooled_exact && unaffected,
          std::string(per_set_exact && pooled_exact ? "exact on 500 sets" : "MISMATCH") +
              (unaffected ? ", 300 single-class sets ignored" : ", single-class sets changed a value")};
}

// ---------------------------------------------------------------- synthetic corpus

struct SyntheticRun {
  SyntheticCorpus corpus;
  std::vector<std::size_t> train, dev, test;
  RerankerModel model;
  double train_seconds = 0.0;
};

template <class T>
std::vector<T> pick(const std::vector<T>& xs, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  for (auto i : idx) out.push_back(xs[i]);
  return out;
}

// 80/10/10 split of 2,000 sets of 8; trained once and shared by the
// criteria that need a reranker.
const SyntheticRun& synthetic_run() {
  static const SyntheticRun run = [] {
    SyntheticRun r;
    SyntheticConfig sc;
    r.corpus = make_linear_corpus(sc);
    std::vector<std::size_t> idx(sc.num_sets);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(derive_seed(11, "acceptance-split"));
    rng.shuffle(std::span<std::size_t>(idx));
    r.test.assign(idx.begin(), idx.begin() + 200);
    r.dev.assign(idx.begin() + 200, idx.begin() + 400);
    r.train.assign(idx.begin() + 400, idx.end());
    TrainConfig tc;  // defaults: lr 1e-4, 100 epochs, patience 10, warmup 10
    tc.seed = 11;
    tc.workers = 1;
    const auto t0 = Clock::now();
    r.model = train(pick(r.corpus.sets, r.train), pick(r.corpus.quality, r.train), pick(r.corpus.sets, r.dev),
                    pick(r.corpus.quality, r.dev), sc.features, tc);
    r.train_seconds = seconds_since(t0);
    return r;
  }();
  return run;
}

Outcome training_efficacy() {
  const auto& r = synthetic_run();
  std::vector<ScoredLabels> held_out;
  for (auto i : r.test) held_out.push_back({score_set(r.model, r.corpus.sets[i]), r.corpus.labels[i]});
  const double rank = ranking_accuracy(held_out).value, top1 = top1_accuracy(held_out).value;
  return {rank >= 0.95 && top1 >= 0.90 && r.model.meta.epochs_run <= 100 && r.train_seconds < 120.0,
          fmt("ranking %.4f", rank) + fmt(", top-1 %.4f", top1) +
              fmt(", %.0f epochs", static_cast<double>(r.model.meta.epochs_run)) + fmt(", %.1f s", r.train_seconds)};
}

double mean_quality(const std::vector<SelectionResult>& sel, const std::vector<std::vector<double>>& q) {
  double total = 0.0;
  for (std::size_t i = 0; i < sel.size(); ++i) total += q[i][sel[i].chosen_index];
  return total / static_cast<double>(sel.size());
}

Outcome strategy_ordering() {
  const auto& r = synthetic_run();
  // Combined quality of a single metric is its within-set standardization.
  auto combined_q = [&](const std::vector<std::size_t>& idx) {
    std::vector<std::vector<double>> out;
    for (auto i : idx) out.push_back(standardize(r.corpus.quality[i]));
    return out;
  };
  auto tables = [&](const std::vector<std::size_t>& idx, const std::vector<std::vector<double>>& q) {
    std::vector<QualityTable> out;
    for (std::size_t k = 0; k < idx.size(); ++k) out.push_back({r.corpus.sets[idx[k]].lf_id(), {{"q", r.corpus.quality[idx[k]]}}, q[k]});
    return out;
  };
  const auto test_sets = pick(r.corpus.sets, r.test), dev_sets = pick(r.corpus.sets, r.dev);
  const auto test_q = combined_q(r.test), dev_q = combined_q(r.dev);
  const auto test_tables = tables(r.test, test_q), dev_tables = tables(r.dev, dev_q);

  LambdaConfig lc;
  const auto tuning = tune_lambda(dev_sets, r.model, dev_tables, lc);
  auto run = [&](Strategy s, const std::vector<CandidateSet>& sets, const std::vector<QualityTable>& tabs,
                 const std::vector<std::vector<double>>& q, double lambda) {
    SelectionOptions opt;
    opt.strategy = s;
    opt.model = &r.model;
    opt.lambda = lambda;
    opt.seed = 11;
    return mean_quality(select_all(sets, &tabs, opt), q);
  };
  const double oracle = run(Strategy::oracle, test_sets, test_tables, test_q, 1.0);
  const double reranker = run(Strategy::reranker, test_sets, test_tables, test_q, 1.0);
  const double random = run(Strategy::random, test_sets, test_tables, test_q, 1.0);
  const double self_cons = run(Strategy::self_consistency, test_sets, test_tables, test_q, 1.0);
  const double dev_combined = run(Strategy::combined, dev_sets, dev_tables, dev_q, tuning.best_lambda);
  const double dev_reranker = run(Strategy::reranker, dev_sets, dev_tables, dev_q, 1.0);
  const double dev_generator = run(Strategy::generator, dev_sets, dev_tables, dev_q, 1.0);
  const bool ok = oracle >= reranker && reranker >= random && dev_combined >= std::max(dev_reranker, dev_generator) - 1e-9 &&
                  self_cons >= random;
  return {ok, fmt("test: oracle %.3f", oracle) + fmt(" >= reranker %.3f", reranker) + fmt(" >= random %.3f", random) +
                  fmt(", self-consistency %.3f", self_cons) + fmt("; dev: combined(lambda=%.2f)", tuning.best_lambda) +
                  fmt(" %.3f", dev_combined) + fmt(" vs reranker %.3f", dev_reranker) +
                  fmt(", generator %.3f", dev_generator)};
}

// ---------------------------------------------------------------- degenerate lambda

Outcome degenerate_lambda() {
  Rng rng(105);
  FeatureConfig fc;
  fc.hash_dim = 1u << 12;
  RerankerModel model = RerankerModel::zeros(fc);
  for (auto& w : model.weights) w = rng.normal();
  model.bias = rng.normal();
  const std::vector<std::string> words{"how", "many", "rivers", "in", "m0", "is", "the", "biggest", "state", "what"};
  int sets = 0, mismatches = 0;
  for (int trial = 0; trial < 2000; ++trial, ++sets) {
    std::vector<Candidate> cands;
    const auto n = 1 + rng.index(9);
    for (std::size_t i = 0; i < n; ++i) {
      std::string text;
      for (std::size_t k = 0, len = 1 + rng.index(6); k < len; ++k) text += (k ? " " : "") + words[rng.index(words.size())];
      text += " #" + std::to_string(i);
      // Coarse log-probs produce frequent generator ties.
      cands.push_back({text, 1, trial % 3 == 0 ? -static_cast<double>(rng.index(3)) : -5.0 * rng.uniform()});
    }
    const CandidateSet set("f" + std::to_string(trial), std::move(cands), "answer ( m0 )", std::nullopt);
    const bool standardize_first = trial % 2 == 1;
    if (select_combined(set, model, 1.0, standardize_first).chosen_index != select_reranker(set, model).chosen_index) ++mismatches;
    if (select_combined(set, model, 0.0, standardize_first).chosen_index != select_generator(set).chosen_index) ++mismatches;
  }
  return {mismatches == 0, std::to_string(sets) + " fuzzed sets, " + std::to_string(mismatches) + " mismatches"};
}

// ---------------------------------------------------------------- budget builder

Outcome budget_builder() {
  Rng rng(106);
  std::size_t emitted = 0, out_of_range = 0, single_kept = 0, single_total = 0;
  double worst_weight_mean = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<LogicalForm> lfs;
    for (int i = 0; i < 40; ++i) lfs.push_back({"l" + std::to_string(trial) + "_" + std::to_string(i), "lf", "ref", Split::train});
    const auto pool_size = 1 + rng.index(12);
    const double skew = 0.2 + 3.0 * rng.uniform();
    auto pool_for = [pool_size](const std::string& id) { return 1 + fnv1a64(id) % pool_size; };
    MockClient client(rng.next(), [&, skew](const GenerationRequest& r) {
      std::vector<WeightedText> pool;
      for (std::size_t k = 0; k < pool_for(r.lf_id); ++k)
        pool.push_back({r.lf_id + " c" + std::to_string(k), std::exp(-skew * static_cast<double>(k))});
      return pool;
    });
    BudgetBuilderConfig cfg;
    cfg.samples_per_lf = 2 + static_cast<int>(rng.index(12));
    std::unordered_set<std::string> single;
    for (const auto& lf : lfs)
      if (pool_for(lf.id) == 1) single.insert(lf.id);
    single_total += single.size();
    BudgetBuildResult res;
    try {
      res = build_variable_dataset(lfs, [](const LogicalForm&) { return std::string("p"); }, cfg, client, 0.7,
                                   1 + rng.index(4));
    } catch (const DataError&) {
      continue;  // every LF collapsed to a single candidate
    }
    std::vector<std::size_t> sizes;
    for (const auto& s : res.sets) {
      ++emitted;
      sizes.push_back(s.size());
      if (s.size() < 2 || s.size() > static_cast<std::size_t>(cfg.samples_per_lf)) ++out_of_range;
      if (single.count(s.lf_id())) ++single_kept;
    }
    const auto w = set_size_weights(sizes);
    if (!w.empty()) {
      const double mean = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(w.size());
      worst_weight_mean = std::max(worst_weight_mean, std::abs(mean - 1.0));
    }
  }
  return {emitted > 0 && out_of_range == 0 && single_kept == 0 && single_total > 0 && worst_weight_mean <= 1e-9,
          std::to_string(emitted) + " sets, " + std::to_string(out_of_range) + " out of range, " +
              std::to_string(single_kept) + " of " + std::to_string(single_total) + " single-unique LFs kept" +
              fmt(", max |mean weight - 1| %.3g", worst_weight_mean)};
}

// ---------------------------------------------------------------- BLEU

Outcome bleu_conformance() {
  std::ifstream in(fs::path(LFRERANK_SOURCE_DIR) / "tests/data/bleu_fixture.jsonl");
  if (!in) return {false, "fixture missing"};
  std::string line;
  int rows = 0;
  double worst = 0.0;
  while (std::getline(in, line)) {
    const auto j = json::parse(line);
    const auto cand = j.at("candidate").get<std::string>(), ref = j.at("reference").get<std::string>();
    worst = std::max(worst, std::abs(bleu(cand, ref) - j.at("bleu").get<double>()));
    worst = std::max(worst, std::abs(bleu(cand, ref, 4, BleuSmoothing::epsilon) - j.at("bleu_epsilon").get<double>()));
    ++rows;
  }
  return {rows == 100 && worst <= 1e-6, std::to_string(rows) + " pairs" + fmt(", max |diff| %.3g", worst)};
}

// ---------------------------------------------------------------- end to end

Outcome end_to_end_determinism() {
  std::random_device rd;
  const fs::path root = fs::temp_directory_path() / ("lfrerank-acceptance-" + std::to_string(rd()));
  auto config = [&](const std::string& name) {
    return json{
        {"seed", 5},
        {"output_dir", (root / name).string()},
        {"dataset", {{"path", (fs::path(LFRERANK_SOURCE_DIR) / "data/fixtures/geo20.jsonl").string()}}},
        {"generator", {{"endpoint", "mock"}, {"target_n", 6}, {"max_attempts", 30}, {"prompt", {{"num_exemplars", 4}}}}},
        {"scoring", {{"metrics", {"bleu", "toy-parser"}}}},
        {"reranker", {{"learning_rate", 0.001}, {"max_epochs", 20}, {"warmup_epochs", 3}, {"features", {{"hash_dim", 4096}}}}},
        {"selection", {{"strategy", "combined"}, {"lambda", "tune"}}},
        {"evaluation", {{"baselines", {"random", "generator", "oracle"}}, {"bootstrap_resamples", 200}}},
    };
  };
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  Outcome o;
  try {
    run_pipeline(parse_config(config("first")));
    run_pipeline(parse_config(config("second")));
    const auto a = slurp(root / "first/selections.jsonl"), b = slurp(root / "second/selections.jsonl");
    o.pass = !a.empty() && a == b;
    o.detail = std::string(o.pass ? "selection files byte-identical" : "selection files differ") +
               ", mock generator, no network";
  } catch (const std::exception& e) {
    o = {false, e.what()};
  }
  std::error_code ec;
  fs::remove_all(root, ec);
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"loss-oracle", loss_oracle},
      {"gradient-check", gradient_check},
      {"normalization", normalization},
      {"accuracy-oracles", accuracy_oracles},
      {"training-efficacy", training_efficacy},
      {"strategy-ordering", strategy_ordering},
      {"degenerate-lambda", degenerate_lambda},
      {"budget-builder", budget_builder},
      {"bleu-conformance", bleu_conformance},
      {"end-to-end-determinism", end_to_end_determinism},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  std::cout << (failures ? "FAILED " : "ALL PASSED ") << criteria.size() - static_cast<std::size_t>(failures) << "/"
            << criteria.size() << std::endl;
  return failures ? 1 : 0;
}
