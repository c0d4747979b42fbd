#include <cmath>
#include <fstream>

#include <gtest/gtest.h>

#include "lfrerank/io.hpp"
#include "lfrerank/random.hpp"
#include "lfrerank/scoring.hpp"
#include "lfrerank/transport.hpp"
#include "test_util.hpp"

using namespace lfrerank;

namespace {

std::vector<double> random_vector(Rng& rng, std::size_t n, double scale = 10.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = scale * (2.0 * rng.uniform() - 1.0);
  return v;
}

CandidateSet set_of(const std::string& id, const std::vector<std::string>& texts, const std::string& ref = "what is m0") {
  std::vector<Candidate> c;
  for (const auto& t : texts) c.push_back({t, 1, -1.0});
  return CandidateSet(id, std::move(c), "answer ( m0 )", ref);
}

// Always returns one score too few.
class ShortScorer : public Scorer {
 public:
  const ScorerSpec& spec() const override { return spec_; }
  std::vector<double> score_batch(std::span<const ScoreItem> items) override {
    return std::vector<double>(items.empty() ? 0 : items.size() - 1, 0.0);
  }

 private:
  ScorerSpec spec_{"short", ScorerKind::external_reference, ScorerTransport::in_process};
};

}  // namespace

TEST(Bleu, AgreesWithReferenceImplementationFixture) {
  std::ifstream in(testutil::source_path("tests/data/bleu_fixture.jsonl"));
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) {
    const auto j = json::parse(line);
    const auto cand = j.at("candidate").get<std::string>();
    const auto ref = j.at("reference").get<std::string>();
    EXPECT_NEAR(bleu(cand, ref), j.at("bleu").get<double>(), 1e-12) << cand << " | " << ref;
    EXPECT_NEAR(bleu(cand, ref, 4, BleuSmoothing::epsilon), j.at("bleu_epsilon").get<double>(), 1e-12)
        << cand << " | " << ref;
    ++rows;
  }
  EXPECT_EQ(rows, 100);
}

TEST(Bleu, HandComputedCases) {
  EXPECT_DOUBLE_EQ(bleu("what is the largest state", "what is the largest state"), 1.0);
  EXPECT_EQ(bleu("m0", "what is the largest state"), 0.0);
  // 4 of 5 unigrams, 3/4 bigrams, 2/3 trigrams, 1/2 four-grams, no brevity penalty.
  const double expected = std::pow(4.0 / 5 * 3.0 / 4 * 2.0 / 3 * 1.0 / 2, 0.25);
  EXPECT_NEAR(bleu("what is the largest city", "what is the largest state"), expected, 1e-15);
  // Shorter hypothesis: brevity penalty exp(1 - 5/4).
  EXPECT_NEAR(bleu("what is the largest", "what is the largest state"), std::exp(1.0 - 5.0 / 4.0), 1e-15);
  EXPECT_NEAR(bleu("a b", "a b", 2), 1.0, 1e-15);
}

TEST(Bleu, BoundedAndRejectsEmptyInputs) {
  Rng rng(8);
  const std::vector<std::string> vocab{"what", "is", "m0", "state", "river", "the", "largest"};
  for (int i = 0; i < 300; ++i) {
    std::string a, b;
    for (std::size_t k = 0, n = 1 + rng.index(8); k < n; ++k) a += vocab[rng.index(vocab.size())] + " ";
    for (std::size_t k = 0, n = 1 + rng.index(8); k < n; ++k) b += vocab[rng.index(vocab.size())] + " ";
    for (auto s : {BleuSmoothing::none, BleuSmoothing::epsilon}) {
      const double x = bleu(a, b, 4, s);
      EXPECT_GE(x, 0.0);
      EXPECT_LE(x, 1.0);
    }
  }
  EXPECT_THROW(bleu("", "x"), DataError);
  EXPECT_THROW(bleu("x", "  "), DataError);
  EXPECT_THROW(bleu("x", "x", 0), ConfigError);
}

TEST(ToyParser, PrefersFaithfulFluentCandidates) {
  const std::string lf = "answer ( largest ( intersection ( state , loc_2 ( m0 ) ) ) )";
  const double good = toy_parser_probability(lf, "what is the largest state in m0");
  const double missing = toy_parser_probability(lf, "what is in m0");
  const double leaky = toy_parser_probability(lf, "what is the largest ( state loc_2 ) in m0");
  const double stutter = toy_parser_probability(lf, "what is the the largest largest state in m0");
  EXPECT_GT(good, missing);
  EXPECT_GT(good, leaky);
  EXPECT_GT(good, stutter);
  for (double p : {good, missing, leaky, stutter}) {
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
  }
  EXPECT_EQ(toy_parser_probability(lf, "what is the largest state in m0"), good);
  EXPECT_THROW(toy_parser_probability(lf, " "), DataError);
}

TEST(Normalization, KnownVector) {
  const auto z = standardize(std::vector<double>{1, 2, 3});
  const double s = std::sqrt(1.5);
  EXPECT_NEAR(z[0], -s, 1e-12);
  EXPECT_NEAR(z[1], 0.0, 1e-12);
  EXPECT_NEAR(z[2], s, 1e-12);
  const auto st = fit_normalization(std::vector<double>{1, 2, 3});
  EXPECT_DOUBLE_EQ(st.mean, 2.0);
  EXPECT_NEAR(st.stddev, std::sqrt(2.0 / 3.0), 1e-15);
}

TEST(Normalization, ConstantAndTinyVectorsMapToZeros) {
  bool degenerate = false;
  EXPECT_EQ(standardize(std::vector<double>{0.7, 0.7, 0.7}, &degenerate), (std::vector<double>{0, 0, 0}));
  EXPECT_TRUE(degenerate);
  EXPECT_EQ(standardize(std::vector<double>{5.0}), std::vector<double>{0.0});
  EXPECT_TRUE(standardize(std::vector<double>{}).empty());
  EXPECT_TRUE(fit_normalization(std::vector<double>{2, 2}).degenerate);
  EXPECT_THROW(fit_normalization(std::vector<double>{2}), DataError);
}

TEST(Normalization, MeanZeroUnitVariance) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const auto v = random_vector(rng, 2 + rng.index(30));
    const auto z = standardize(v);
    double sum = 0.0, ss = 0.0;
    for (double x : z) {
      sum += x;
      ss += x * x;
    }
    EXPECT_NEAR(sum / static_cast<double>(z.size()), 0.0, 1e-12);
    EXPECT_NEAR(ss / static_cast<double>(z.size()), 1.0, 1e-12);
  }
}

TEST(Normalization, ExactUnderDyadicAffineMaps) {
  Rng rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    // Values on a dyadic grid, so shifting by a small integer is exact.
    std::vector<double> v(2 + rng.index(20));
    for (auto& x : v) x = static_cast<double>(static_cast<std::int64_t>(rng.index(1 << 20)) - (1 << 19)) / 1024.0;
    const double a = std::ldexp(1.0, static_cast<int>(rng.index(10)) - 5);
    const double b = static_cast<double>(static_cast<int>(rng.index(200)) - 100);
    std::vector<double> w(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) w[i] = a * v[i] + b;
    EXPECT_EQ(standardize(v), standardize(w));
  }
}

TEST(Normalization, InvariantUnderGeneralAffineMaps) {
  Rng rng(6);
  for (int trial = 0; trial < 500; ++trial) {
    const auto v = random_vector(rng, 2 + rng.index(20));
    const double a = 0.01 + 50.0 * rng.uniform();
    const double b = 100.0 * (rng.uniform() - 0.5);
    std::vector<double> w(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) w[i] = a * v[i] + b;
    const auto zv = standardize(v);
    const auto zw = standardize(w);
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(zv[i], zw[i], 1e-9);
  }
}

TEST(Normalization, FitThenApplyMatchesStandardize) {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const auto v = random_vector(rng, 2 + rng.index(20));
    const auto a = apply_normalization(v, fit_normalization(v));
    const auto b = standardize(v);
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
  }
}

TEST(Combine, SumsStandardizedMetrics) {
  std::map<std::string, std::vector<double>> m{{"bleu", {1, 2, 3}}, {"prob", {30, 20, 10}}};
  const auto c = combine_metrics(m, {"bleu", "prob"});
  for (double x : c) EXPECT_NEAR(x, 0.0, 1e-12);
  const auto only = combine_metrics(m, {"bleu"});
  EXPECT_NEAR(only[2], std::sqrt(1.5), 1e-12);

  std::vector<std::string> degenerate;
  std::map<std::string, std::vector<double>> flat{{"bleu", {0.5, 0.5}}, {"prob", {0.0, 1.0}}};
  const auto f = combine_metrics(flat, {"bleu", "prob"}, &degenerate);
  EXPECT_EQ(degenerate, std::vector<std::string>{"bleu"});
  EXPECT_NEAR(f[0], -1.0, 1e-12);
  EXPECT_NEAR(f[1], 1.0, 1e-12);
}

TEST(Combine, RejectsMissingAndMisalignedMetrics) {
  std::map<std::string, std::vector<double>> m{{"bleu", {1, 2, 3}}, {"prob", {1, 2}}};
  EXPECT_THROW(combine_metrics(m, {"bleu", "prob"}), DataError);
  EXPECT_THROW(combine_metrics(m, {"prism"}), DataError);
  EXPECT_THROW(combine_metrics(m, {}), DataError);
}

TEST(Combine, CorpusScopeUsesPooledStatistics) {
  std::vector<QualityTable> tables{{"a", {{"m", {0.0, 1.0}}}, std::nullopt}, {"b", {{"m", {2.0, 3.0}}}, std::nullopt}};
  combine_quality(tables, {"m"}, NormalizationScope::corpus);
  const double sd = std::sqrt(1.25);
  EXPECT_NEAR((*tables[0].combined)[0], -1.5 / sd, 1e-12);
  EXPECT_NEAR((*tables[1].combined)[1], 1.5 / sd, 1e-12);

  std::vector<QualityTable> per_set{{"a", {{"m", {0.0, 1.0}}}, std::nullopt}, {"b", {{"m", {2.0, 3.0}}}, std::nullopt}};
  const auto report = combine_quality(per_set, {"m"});
  EXPECT_EQ(report.degenerate_metric_sets, 0u);
  EXPECT_NEAR((*per_set[1].combined)[0], -1.0, 1e-12);
}

TEST(ScoreSets, OneScorePerCandidateInOrder) {
  const std::vector<CandidateSet> sets{set_of("a", {"what is in m0", "m0"}, "what is in m0"), set_of("b", {"what is the m0"})};
  BleuScorer scorer(4, BleuSmoothing::epsilon);
  const auto tables = score_sets(sets, scorer);
  ASSERT_EQ(tables.size(), 2u);
  EXPECT_EQ(tables[0].metric("bleu").size(), 2u);
  EXPECT_DOUBLE_EQ(tables[0].metric("bleu")[0], 1.0);
  EXPECT_EQ(tables[1].lf_id, "b");
}

TEST(ScoreSets, ArityMismatchIsAServiceError) {
  ShortScorer scorer;
  EXPECT_THROW(score_sets({set_of("a", {"x", "y"})}, scorer), ServiceError);
}

TEST(ScoreSets, ReferenceScorerNeedsReferences) {
  BleuScorer scorer;
  const CandidateSet no_ref("a", {{"x", 1, 0.0}}, "answer ( m0 )", std::nullopt);
  EXPECT_THROW(score_sets({no_ref}, scorer), DataError);
}

TEST(ScoreSets, ExternalScorerEchoesCandidateLength) {
  ExternalScorerOptions opt;
  opt.max_batch = 3;  // forces batches that straddle set boundaries
  SubprocessScorer scorer(std::string(LFRERANK_MOCK_SCORER) + " length", opt);
  const std::vector<CandidateSet> sets{set_of("a", {"x", "yy", "zzz", "wwww"}), set_of("b", {"12345", "1"})};
  const auto tables = score_sets(sets, scorer);
  EXPECT_EQ(tables[0].metric(scorer.spec().name), (std::vector<double>{1, 2, 3, 4}));
  EXPECT_EQ(tables[1].metric(scorer.spec().name), (std::vector<double>{5, 1}));
}

TEST(MergeQuality, DetectsConflicts) {
  std::vector<QualityTable> a{{"x", {{"bleu", {1.0}}}, std::nullopt}};
  std::vector<QualityTable> b{{"x", {{"prob", {0.5}}}, std::nullopt}};
  merge_quality(a, b);
  EXPECT_EQ(a[0].per_metric.size(), 2u);
  EXPECT_THROW(merge_quality(a, b), DataError);
  std::vector<QualityTable> c{{"y", {{"other", {0.5}}}, std::nullopt}};
  EXPECT_THROW(merge_quality(a, c), DataError);
}
