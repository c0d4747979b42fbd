// lfrerank: generate, score, rerank and evaluate natural-language candidates
// for logical forms.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lfrerank/annotate.hpp"
#include "lfrerank/pipeline.hpp"
#include "lfrerank/sweep.hpp"

namespace fs = std::filesystem;
using namespace lfrerank;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::string config;
};

// "24h", "30m", "90s", "500ms"; a bare number is seconds.
std::chrono::milliseconds parse_duration(const std::string& text) {
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(text, &used);
  } catch (const std::exception&) {
    throw ConfigError("invalid duration '" + text + "'");
  }
  const std::string unit = text.substr(used);
  double ms = 0.0;
  if (unit == "ms") ms = value;
  else if (unit.empty() || unit == "s") ms = value * 1e3;
  else if (unit == "m") ms = value * 6e4;
  else if (unit == "h") ms = value * 3.6e6;
  else if (unit == "d") ms = value * 8.64e7;
  else throw ConfigError("invalid duration unit in '" + text + "' (use ms, s, m, h or d)");
  if (!(ms > 0.0)) throw ConfigError("duration must be positive: '" + text + "'");
  return std::chrono::milliseconds(static_cast<long long>(ms));
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream in(text);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    try {
      std::size_t used = 0;
      const long v = std::stol(tok, &used);
      if (used != tok.size() || v < 1) throw std::invalid_argument(tok);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ConfigError("invalid size list '" + text + "'");
    }
  }
  if (out.empty()) throw ConfigError("empty size list");
  return out;
}

std::string require_env_token(const std::string& var) {
  if (var.empty()) return {};
  const char* v = std::getenv(var.c_str());
  return v ? v : "";
}

// Records how an output file was produced, next to the file itself.
void write_manifest(const fs::path& output, const std::string& command, const json& params, const Globals& g,
                    const std::map<std::string, fs::path>& inputs) {
  json in = json::object();
  for (const auto& [k, p] : inputs) in[k] = {{"path", p.string()}, {"fnv1a64", file_digest(p)}};
  json m{{"manifest_version", 1},
         {"tool_version", kToolVersion},
         {"command", command},
         {"params", params},
         {"seed", g.seed},
         {"workers", g.workers},
         {"inputs", in},
         {"output", {{"path", output.string()}, {"fnv1a64", file_digest(output)}}},
         {"created_at", utc_timestamp()}};
  std::ofstream out(output.string() + ".manifest.json", std::ios::trunc);
  out << m.dump(2) << '\n';
}

std::unique_ptr<GenerationClient> make_client(const std::string& endpoint, const std::vector<LogicalForm>& lfs,
                                              std::uint64_t seed, const std::string& token_env) {
  if (endpoint == "mock") return std::make_unique<MockClient>(derive_seed(seed, "mock-generator"), lfs);
  return std::make_unique<HttpGenerationClient>(endpoint, require_env_token(token_env));
}

std::vector<double> gold_quality(const QualityTable& t) {
  if (t.combined) return *t.combined;
  std::vector<std::string> names;
  for (const auto& [m, v] : t.per_metric) names.push_back(m);
  return combine_metrics(t.per_metric, names);
}

void check_aligned(const std::vector<CandidateSet>& sets, const std::vector<QualityTable>& quality) {
  if (sets.size() != quality.size()) throw DataError("candidate and quality files cover different sets");
  for (std::size_t i = 0; i < sets.size(); ++i) {
    if (sets[i].lf_id() != quality[i].lf_id) throw DataError("quality file order differs at '" + sets[i].lf_id() + "'");
    quality[i].validate(sets[i].size());
  }
}

void print_report(const PipelineReport& r) {
  std::cout << r.strategy << " (" << r.sets << " sets)\n";
  for (const auto& [m, v] : r.mean_scores) {
    std::cout << "  " << std::left << std::setw(14) << m << std::right << std::fixed << std::setprecision(4) << v;
    for (const auto& [base, ps] : r.significance)
      if (auto it = ps.find(m); it != ps.end()) std::cout << "  p(vs " << base << ")=" << it->second;
    std::cout << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generate-and-rerank toolkit for natural language from logical forms"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand
  Globals g;
  app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();
  app.add_option("--workers", g.workers, "Parallel workers")->check(CLI::Range(1, 1024))->capture_default_str();
  app.add_option("--config", g.config, "Pipeline config file (run, validate-config)");

  std::function<void()> action;

  // generate
  auto* gen = app.add_subcommand("generate", "Sample candidates until n unique per LF");
  std::string gen_dataset, gen_split = "train", gen_out, gen_endpoint, gen_style = "completion",
              gen_token_env = "LFRERANK_API_TOKEN", gen_map;
  int gen_n = 8, gen_exemplars = 15, gen_attempts = 0, gen_max_tokens = 128;
  double gen_temp = 0.7;
  bool gen_redraw = false;
  gen->add_option("--dataset", gen_dataset, "Dataset JSONL")->required();
  gen->add_option("--split", gen_split, "Split to generate for")->check(CLI::IsMember({"train", "dev", "test"}));
  gen->add_option("--n", gen_n, "Unique candidates per LF")->check(CLI::PositiveNumber);
  gen->add_option("--temperature", gen_temp, "Sampling temperature")->check(CLI::Range(0.0, 2.0));
  gen->add_option("--max-attempts", gen_attempts, "Sample cap per LF (0 = 5n)");
  gen->add_option("--max-tokens", gen_max_tokens, "Token cap per sample");
  gen->add_option("--exemplars", gen_exemplars, "Few-shot exemplars per prompt (from the train split)");
  gen->add_option("--endpoint", gen_endpoint, "LLM endpoint URL or 'mock'")->required();
  gen->add_option("--token-env", gen_token_env, "Environment variable holding the API token");
  gen->add_option("--prompt-style", gen_style)->check(CLI::IsMember({"completion", "chat"}));
  gen->add_option("--freebase-map", gen_map, "Identifier map applied to LFs");
  gen->add_flag("--redraw-exemplars", gen_redraw, "Draw fresh exemplars for every request");
  gen->add_option("--out", gen_out, "Candidates JSONL")->required();
  gen->callback([&] {
    action = [&] {
      auto all = load_dataset(gen_dataset);
      if (!gen_map.empty()) {
        const auto map = IdentifierMap::load(gen_map);
        for (auto& lf : all) lf.lf = map.apply(lf.lf);
      }
      std::vector<LogicalForm> targets, pool;
      for (const auto& lf : all) {
        if (lf.split == *parse_split(gen_split)) targets.push_back(lf);
        if (lf.split == Split::train && lf.reference) pool.push_back(lf);
      }
      if (targets.empty()) throw DataError("no LFs in split '" + gen_split + "'");
      GeneratorConfig cfg;
      cfg.endpoint = gen_endpoint;
      cfg.temperature = gen_temp;
      cfg.target_n = gen_n;
      cfg.max_attempts = gen_attempts;
      cfg.max_tokens = gen_max_tokens;
      cfg.seed = g.seed;
      cfg.redraw_exemplars_per_attempt = gen_redraw;
      PromptTemplate tmpl;
      tmpl.num_exemplars = gen_exemplars;
      tmpl.style = gen_style == "chat" ? PromptStyle::chat : PromptStyle::completion;
      tmpl.chat_candidates = gen_n;
      auto client = make_client(gen_endpoint, all, g.seed, gen_token_env);
      const auto sets = generate_candidates(targets, pool, cfg, tmpl, *client, g.workers);
      save_candidates(sets, gen_out);
      std::size_t truncated = 0;
      for (const auto& s : sets) truncated += s.truncated();
      write_manifest(gen_out, "generate",
                     {{"split", gen_split}, {"n", gen_n}, {"temperature", gen_temp}, {"max_attempts", cfg.attempt_cap()},
                      {"exemplars", gen_exemplars}, {"endpoint", gen_endpoint}, {"prompt_style", gen_style},
                      {"redraw_exemplars", gen_redraw}},
                     g, {{"dataset", gen_dataset}});
      std::cerr << "generated " << sets.size() << " sets (" << truncated << " truncated)\n";
    };
  });

  // budget-build
  auto* bud = app.add_subcommand("budget-build", "Fixed-sample candidate sets of variable size");
  std::string bud_dataset, bud_split = "train", bud_out, bud_endpoint, bud_budget,
              bud_token_env = "LFRERANK_API_TOKEN";
  int bud_samples = 10, bud_min = 2, bud_exemplars = 15;
  double bud_temp = 0.7;
  bud->add_option("--dataset", bud_dataset)->required();
  bud->add_option("--split", bud_split)->check(CLI::IsMember({"train", "dev", "test"}));
  bud->add_option("--samples", bud_samples, "Samples drawn per LF");
  bud->add_option("--min-unique", bud_min, "Drop sets with fewer distinct candidates");
  bud->add_option("--budget", bud_budget, "Wall-clock budget, e.g. 24h");
  bud->add_option("--temperature", bud_temp)->check(CLI::Range(0.0, 2.0));
  bud->add_option("--exemplars", bud_exemplars);
  bud->add_option("--endpoint", bud_endpoint, "LLM endpoint URL or 'mock'")->required();
  bud->add_option("--token-env", bud_token_env);
  bud->add_option("--out", bud_out)->required();
  bud->callback([&] {
    action = [&] {
      auto all = load_dataset(bud_dataset);
      std::vector<LogicalForm> targets, pool;
      for (const auto& lf : all) {
        if (lf.split == *parse_split(bud_split)) targets.push_back(lf);
        if (lf.split == Split::train && lf.reference) pool.push_back(lf);
      }
      BudgetBuilderConfig cfg;
      cfg.samples_per_lf = bud_samples;
      cfg.min_unique = bud_min;
      if (!bud_budget.empty()) cfg.wall_clock_budget = parse_duration(bud_budget);
      PromptTemplate tmpl;
      tmpl.num_exemplars = bud_exemplars;
      auto prompt_for = [&](const LogicalForm& lf) {
        Rng rng(derive_seed(g.seed, "exemplars:" + lf.id));
        return build_prompt(lf, draw_exemplars(lf, pool, static_cast<std::size_t>(tmpl.num_exemplars), rng), tmpl);
      };
      auto client = make_client(bud_endpoint, all, g.seed, bud_token_env);
      const auto res = build_variable_dataset(targets, prompt_for, cfg, *client, bud_temp, g.workers);
      if (res.sets.empty()) throw DataError("budget build produced no sets");
      save_candidates(res.sets, bud_out);
      write_manifest(bud_out, "budget-build",
                     {{"split", bud_split}, {"samples", bud_samples}, {"min_unique", bud_min}, {"budget", bud_budget},
                      {"temperature", bud_temp}, {"exemplars", bud_exemplars}, {"endpoint", bud_endpoint}},
                     g, {{"dataset", bud_dataset}});
      std::cerr << "kept " << res.sets.size() << " of " << res.lfs_attempted << " LFs attempted, mean size "
                << res.mean_set_size() << (res.budget_exhausted ? ", budget exhausted" : "") << "\n";
    };
  });

  // score
  auto* sco = app.add_subcommand("score", "Score candidates under one or more metrics");
  std::vector<std::string> sco_metrics;
  std::string sco_in, sco_out, sco_norm = "per-set";
  bool sco_combine = false;
  long long sco_timeout = 60000;
  sco->add_option("--metric", sco_metrics, "bleu | bleu-smoothed | toy-parser | ext:<cmd-or-url> (repeatable)")->required();
  sco->add_option("--in", sco_in, "Candidates JSONL")->required();
  sco->add_option("--out", sco_out, "Scores JSONL")->required();
  sco->add_flag("--combine", sco_combine, "Also write the combined quality Q");
  sco->add_option("--normalization", sco_norm)->check(CLI::IsMember({"per-set", "corpus"}));
  sco->add_option("--timeout-ms", sco_timeout, "External scorer timeout");
  sco->callback([&] {
    action = [&] {
      const auto sets = load_candidates(sco_in);
      ExternalScorerOptions opt;
      opt.timeout = std::chrono::milliseconds(sco_timeout);
      auto quality = score_quality(sets, sco_metrics, opt);
      if (sco_combine)
        combine_quality(quality, sco_metrics, sco_norm == "corpus" ? NormalizationScope::corpus : NormalizationScope::per_set);
      save_scores(quality, sco_out);
      write_manifest(sco_out, "score", {{"metrics", sco_metrics}, {"combine", sco_combine}, {"normalization", sco_norm}}, g,
                     {{"candidates", sco_in}});
    };
  });

  // train
  auto* tr = app.add_subcommand("train", "Train the reranker on quality-scored candidates");
  std::string tr_cands, tr_quality, tr_out, tr_mode = "uniform", tr_opt = "adam";
  double tr_dev = 0.1, tr_gamma = 0.1, tr_lr = 1e-4;
  int tr_epochs = 100, tr_patience = 10, tr_warmup = 10;
  std::uint32_t tr_hash = 1u << 18;
  tr->add_option("--candidates", tr_cands)->required();
  tr->add_option("--quality", tr_quality, "Scores JSONL; uses 'combined' when present")->required();
  tr->add_option("--dev-frac", tr_dev)->check(CLI::Range(0.0, 1.0));
  tr->add_option("--gamma", tr_gamma, "Loss margin")->check(CLI::NonNegativeNumber);
  tr->add_option("--weight-mode", tr_mode)->check(CLI::IsMember({"uniform", "set-size"}));
  tr->add_option("--optimizer", tr_opt)->check(CLI::IsMember({"adam", "sgd"}));
  tr->add_option("--lr", tr_lr)->check(CLI::PositiveNumber);
  tr->add_option("--epochs", tr_epochs)->check(CLI::PositiveNumber);
  tr->add_option("--patience", tr_patience)->check(CLI::PositiveNumber);
  tr->add_option("--warmup-epochs", tr_warmup)->check(CLI::NonNegativeNumber);
  tr->add_option("--hash-dim", tr_hash, "Power of two");
  tr->add_option("--out", tr_out, "Model JSON")->required();
  tr->callback([&] {
    action = [&] {
      const auto sets = load_candidates(tr_cands);
      const auto quality = load_scores(tr_quality);
      check_aligned(sets, quality);
      auto [tr_idx, dv_idx] = split_dev(sets.size(), tr_dev, derive_seed(g.seed, "dev-split"));
      std::vector<CandidateSet> a, b;
      std::vector<std::vector<double>> qa, qb;
      for (auto i : tr_idx) a.push_back(sets[i]), qa.push_back(gold_quality(quality[i]));
      for (auto i : dv_idx) b.push_back(sets[i]), qb.push_back(gold_quality(quality[i]));
      FeatureConfig fc;
      fc.hash_dim = tr_hash;
      fc.validate();
      TrainConfig tc;
      tc.seed = derive_seed(g.seed, "train");
      tc.gamma = tr_gamma;
      tc.learning_rate = tr_lr;
      tc.max_epochs = tr_epochs;
      tc.patience = tr_patience;
      tc.warmup_epochs = tr_warmup;
      tc.weight_mode = *parse_weight_mode(tr_mode);
      tc.optimizer = *parse_optimizer(tr_opt);
      tc.workers = g.workers;
      const auto model = train(a, qa, b, qb, fc, tc);
      save_model(model, tr_out);
      write_manifest(tr_out, "train",
                     {{"dev_frac", tr_dev}, {"gamma", tr_gamma}, {"weight_mode", tr_mode}, {"optimizer", tr_opt},
                      {"lr", tr_lr}, {"epochs", tr_epochs}, {"patience", tr_patience}, {"warmup_epochs", tr_warmup},
                      {"hash_dim", tr_hash}},
                     g, {{"candidates", tr_cands}, {"quality", tr_quality}});
      std::cerr << "trained " << model.meta.epochs_run << " epochs, best dev loss " << model.meta.best_dev_loss
                << " at epoch " << model.meta.best_epoch << "\n";
    };
  });

  // select
  auto* sel = app.add_subcommand("select", "Pick one candidate per set");
  std::string sel_strategy = "reranker", sel_model, sel_in, sel_out, sel_quality;
  double sel_lambda = 1.0;
  bool sel_std = false;
  std::vector<std::string> strategy_names(std::begin(kStrategyNames), std::end(kStrategyNames));
  sel->add_option("--strategy", sel_strategy)->check(CLI::IsMember(strategy_names));
  sel->add_option("--model", sel_model, "Reranker model (reranker, combined)");
  sel->add_option("--lambda", sel_lambda, "Reranker weight for combined")->check(CLI::Range(0.0, 1.0));
  sel->add_flag("--standardize-first", sel_std, "Standardize R and G within each set before blending");
  sel->add_option("--quality", sel_quality, "Scores JSONL (oracle)");
  sel->add_option("--in", sel_in, "Candidates JSONL")->required();
  sel->add_option("--out", sel_out, "Selections JSONL")->required();
  sel->callback([&] {
    action = [&] {
      const auto sets = load_candidates(sel_in);
      const auto strategy = *parse_strategy(sel_strategy);
      std::optional<RerankerModel> model;
      std::map<std::string, fs::path> inputs{{"candidates", sel_in}};
      if (!sel_model.empty()) {
        model = load_model(sel_model);
        inputs["model"] = sel_model;
      }
      std::vector<QualityTable> quality;
      if (!sel_quality.empty()) {
        quality = load_scores(sel_quality);
        check_aligned(sets, quality);
        for (auto& t : quality)
          if (!t.combined) t.combined = gold_quality(t);
        inputs["quality"] = sel_quality;
      }
      SelectionOptions opt{strategy, model ? &*model : nullptr, sel_lambda, sel_std, derive_seed(g.seed, "select")};
      const auto results = select_all(sets, sel_quality.empty() ? nullptr : &quality, opt);
      save_selections(results, sets, sel_out);
      write_manifest(sel_out, "select", {{"strategy", sel_strategy}, {"lambda", sel_lambda}, {"standardize_first", sel_std}},
                     g, inputs);
    };
  });

  // tune-lambda
  auto* tl = app.add_subcommand("tune-lambda", "Tune the reranker/generator blend on dev sets");
  std::string tl_dev, tl_model, tl_quality, tl_grid = "0:1:0.05", tl_objective, tl_out;
  bool tl_std = false;
  tl->add_option("--dev", tl_dev, "Dev candidates JSONL")->required();
  tl->add_option("--model", tl_model)->required();
  tl->add_option("--quality", tl_quality, "Dev scores JSONL")->required();
  tl->add_option("--grid", tl_grid, "lo:hi:step");
  tl->add_option("--objective", tl_objective, "Metric to maximize (default: combined)");
  tl->add_flag("--standardize-first", tl_std);
  tl->add_option("--out", tl_out, "Tuning result JSON");
  tl->callback([&] {
    action = [&] {
      const auto sets = load_candidates(tl_dev);
      auto quality = load_scores(tl_quality);
      check_aligned(sets, quality);
      for (auto& t : quality)
        if (!t.combined) t.combined = gold_quality(t);
      LambdaConfig cfg;
      auto grid = detail::parse_grid(tl_grid);
      if (!grid) throw ConfigError("invalid --grid '" + tl_grid + "' (expected lo:hi:step)");
      cfg.grid = *grid;
      cfg.standardize_first = tl_std;
      std::optional<std::string> objective;
      if (!tl_objective.empty() && tl_objective != "combined") objective = tl_objective;
      const auto res = tune_lambda(sets, load_model(tl_model), quality, cfg, objective);
      for (const auto& [l, v] : res.curve) std::cout << std::fixed << std::setprecision(2) << l << '\t' << std::setprecision(6) << v << '\n';
      std::cout << "best lambda " << std::setprecision(2) << res.best_lambda << " (objective " << std::setprecision(6)
                << res.best_objective << ")\n";
      if (!tl_out.empty()) {
        std::ofstream out(tl_out, std::ios::trunc);
        out << to_json(res).dump(2) << '\n';
        if (!out) throw DataError("cannot write '" + tl_out + "'");
        write_manifest(tl_out, "tune-lambda", {{"grid", tl_grid}, {"objective", tl_objective}, {"standardize_first", tl_std}},
                       g, {{"dev", tl_dev}, {"model", tl_model}, {"quality", tl_quality}});
      }
    };
  });

  // eval-alignment
  auto* ea = app.add_subcommand("eval-alignment", "Agreement of metrics with human labels");
  std::string ea_scores, ea_labels, ea_pooling = "pooled", ea_out;
  std::vector<std::string> ea_metrics;
  ea->add_option("--scores", ea_scores)->required();
  ea->add_option("--labels", ea_labels)->required();
  ea->add_option("--metric", ea_metrics, "Metrics to report (default: all, plus combined when present)");
  ea->add_option("--pooling", ea_pooling, "Ranking-accuracy pair pooling")->check(CLI::IsMember({"pooled", "per-set"}));
  ea->add_option("--out", ea_out, "Report JSON");
  ea->callback([&] {
    action = [&] {
      const auto scores = load_scores(ea_scores);
      const auto labels = load_labels(ea_labels);
      if (scores.empty()) throw DataError("no scores in '" + ea_scores + "'");
      auto metrics = ea_metrics;
      if (metrics.empty()) {
        for (const auto& [m, v] : scores.front().per_metric) metrics.push_back(m);
        if (scores.front().combined) metrics.push_back("combined");
      }
      const auto pooling = ea_pooling == "pooled" ? RankingPooling::pooled : RankingPooling::per_set;
      json report = json::array();
      std::cout << std::left << std::setw(16) << "metric" << std::right << std::setw(8) << "top1" << std::setw(10)
                << "ranking" << std::setw(8) << "sets" << std::setw(10) << "excluded\n";
      for (const auto& m : metrics) {
        const auto r = evaluate_alignment(m, scores, labels, pooling);
        std::cout << std::left << std::setw(16) << m << std::right << std::fixed << std::setprecision(4) << std::setw(8)
                  << r.top1_accuracy << std::setw(10) << r.ranking_accuracy << std::setw(8) << r.sets_used << std::setw(9)
                  << r.sets_excluded << '\n';
        report.push_back({{"metric", m}, {"top1_accuracy", r.top1_accuracy}, {"ranking_accuracy", r.ranking_accuracy},
                          {"sets_used", r.sets_used}, {"sets_excluded", r.sets_excluded}});
      }
      if (!ea_out.empty()) {
        std::ofstream out(ea_out, std::ios::trunc);
        out << report.dump(2) << '\n';
        write_manifest(ea_out, "eval-alignment", {{"metrics", metrics}, {"pooling", ea_pooling}}, g,
                       {{"scores", ea_scores}, {"labels", ea_labels}});
      }
    };
  });

  // eval-pipeline
  auto* ep = app.add_subcommand("eval-pipeline", "Mean quality of selections with significance against baselines");
  std::string ep_sel, ep_quality, ep_cands, ep_out;
  std::vector<std::string> ep_baselines, ep_metrics;
  std::size_t ep_resamples = 10000;
  ep->add_option("--selections", ep_sel)->required();
  ep->add_option("--quality", ep_quality)->required();
  ep->add_option("--baseline", ep_baselines,
                 "Baseline selections file, or a model-free strategy name computed from --candidates (repeatable)");
  ep->add_option("--candidates", ep_cands, "Candidates JSONL for computed baselines");
  ep->add_option("--metric", ep_metrics, "Metrics to report (default: all, plus combined when present)");
  ep->add_option("--resamples", ep_resamples, "Bootstrap resamples")->check(CLI::PositiveNumber);
  ep->add_option("--out", ep_out, "Report JSON");
  ep->callback([&] {
    action = [&] {
      const auto selections = load_selections(ep_sel);
      auto quality = load_scores(ep_quality);
      if (quality.empty()) throw DataError("no scores in '" + ep_quality + "'");
      std::map<std::string, fs::path> inputs{{"selections", ep_sel}, {"quality", ep_quality}};
      std::map<std::string, std::vector<SelectionResult>> baselines;
      std::optional<std::vector<CandidateSet>> sets;
      for (const auto& b : ep_baselines) {
        if (fs::exists(b)) {
          auto loaded = load_selections(b);
          if (loaded.empty()) throw DataError("baseline '" + b + "' is empty");
          baselines[loaded.front().strategy] = std::move(loaded);
          inputs["baseline:" + b] = b;
          continue;
        }
        const auto st = parse_strategy(b);
        if (!st || *st == Strategy::reranker || *st == Strategy::combined)
          throw ConfigError("--baseline '" + b + "' is neither a file nor one of random, self-consistency, generator, oracle");
        if (ep_cands.empty()) throw ConfigError("--baseline " + b + " needs --candidates");
        if (!sets) {
          sets = load_candidates(ep_cands);
          inputs["candidates"] = ep_cands;
        }
        std::unordered_map<std::string, const QualityTable*> by_id;
        for (const auto& t : quality) by_id[t.lf_id] = &t;
        std::vector<QualityTable> aligned;
        for (const auto& s : *sets) {
          auto it = by_id.find(s.lf_id());
          if (it == by_id.end()) throw DataError("no quality scores for '" + s.lf_id() + "'");
          aligned.push_back(*it->second);
          if (!aligned.back().combined) aligned.back().combined = gold_quality(aligned.back());
        }
        SelectionOptions opt{*st, nullptr, 1.0, false, derive_seed(g.seed, "select")};
        baselines[b] = select_all(*sets, &aligned, opt);
      }
      auto metrics = ep_metrics;
      if (metrics.empty()) {
        for (const auto& [m, v] : quality.front().per_metric) metrics.push_back(m);
        if (quality.front().combined) metrics.push_back("combined");
      }
      const std::string name = selections.empty() ? "selections" : selections.front().strategy;
      const auto report = evaluate_pipeline(name, selections, quality, metrics, baselines,
                                            {ep_resamples, derive_seed(g.seed, "bootstrap")});
      print_report(report);
      if (!ep_out.empty()) {
        std::ofstream out(ep_out, std::ios::trunc);
        out << to_json(report).dump(2) << '\n';
        write_manifest(ep_out, "eval-pipeline", {{"metrics", metrics}, {"resamples", ep_resamples}}, g, inputs);
      }
    };
  });

  // sweep
  auto* sw = app.add_subcommand("sweep", "Train-size by test-size n-best sweep");
  std::string sw_cands, sw_quality, sw_train = "2,4,8,16,32", sw_test = "2,4,8,16,32", sw_out;
  std::vector<std::string> sw_qmetrics, sw_emetrics;
  double sw_lr = 1e-4;
  int sw_epochs = 100, sw_patience = 10;
  sw->add_option("--candidates", sw_cands)->required();
  sw->add_option("--quality", sw_quality)->required();
  sw->add_option("--train-sizes", sw_train);
  sw->add_option("--test-sizes", sw_test);
  sw->add_option("--quality-metric", sw_qmetrics, "Metrics combined into Q (default: all)");
  sw->add_option("--eval-metric", sw_emetrics, "Metrics reported per cell (default: all plus combined)");
  sw->add_option("--lr", sw_lr)->check(CLI::PositiveNumber);
  sw->add_option("--epochs", sw_epochs)->check(CLI::PositiveNumber);
  sw->add_option("--patience", sw_patience)->check(CLI::PositiveNumber);
  sw->add_option("--out", sw_out, "Grid TSV (default: stdout)");
  sw->callback([&] {
    action = [&] {
      const auto sets = load_candidates(sw_cands);
      const auto quality = load_scores(sw_quality);
      check_aligned(sets, quality);
      SweepConfig cfg;
      cfg.train_sizes = parse_sizes(sw_train);
      cfg.test_sizes = parse_sizes(sw_test);
      cfg.seed = g.seed;
      cfg.quality_metrics = sw_qmetrics;
      if (cfg.quality_metrics.empty())
        for (const auto& [m, v] : quality.front().per_metric) cfg.quality_metrics.push_back(m);
      cfg.eval_metrics = sw_emetrics;
      if (cfg.eval_metrics.empty()) {
        cfg.eval_metrics = cfg.quality_metrics;
        cfg.eval_metrics.push_back("combined");
      }
      cfg.train.learning_rate = sw_lr;
      cfg.train.max_epochs = sw_epochs;
      cfg.train.patience = sw_patience;
      cfg.train.workers = g.workers;
      const auto cells = nbest_sweep(sets, quality, cfg);
      if (sw_out.empty()) {
        write_sweep_grid(cells, std::cout);
      } else {
        std::ofstream out(sw_out, std::ios::trunc);
        write_sweep_grid(cells, out);
        if (!out) throw DataError("cannot write '" + sw_out + "'");
        out.close();
        write_manifest(sw_out, "sweep", {{"train_sizes", sw_train}, {"test_sizes", sw_test}, {"lr", sw_lr},
                                          {"epochs", sw_epochs}, {"patience", sw_patience}},
                       g, {{"candidates", sw_cands}, {"quality", sw_quality}});
      }
    };
  });

  // annotate
  auto* an = app.add_subcommand("annotate", "Label candidates interactively");
  std::string an_in, an_out;
  an->add_option("--in", an_in, "Candidates JSONL (with references)")->required();
  an->add_option("--out", an_out, "Label store JSONL (appended)")->required();
  an->callback([&] {
    action = [&] {
      const auto sets = load_candidates(an_in);
      const auto summary = annotate(sets, std::cin, std::cout, an_out);
      std::cerr << "labeled " << summary.labeled.size() << ", skipped " << summary.skipped
                << (summary.interrupted ? ", interrupted" : "") << "\n";
    };
  });

  // run
  auto* run = app.add_subcommand("run", "Run the whole pipeline from a config file (or a run manifest)");
  std::string run_config;
  bool run_fresh = false;
  run->add_option("config", run_config, "Config file; overrides --config");
  run->add_flag("--fresh", run_fresh, "Ignore artifacts from earlier runs");
  run->callback([&] {
    action = [&] {
      const std::string path = run_config.empty() ? g.config : run_config;
      if (path.empty()) throw ConfigError("run needs a config file (--config or positional)");
      auto parsed = load_config(path);
      // Explicit flags override the file.
      if (app.get_option("--seed")->count() > 0) {
        parsed.config.seed = g.seed;
        parsed.config.generator.seed = g.seed;
        parsed.config.train.seed = derive_seed(g.seed, "train");
        parsed.raw["seed"] = g.seed;
      }
      if (app.get_option("--workers")->count() > 0) {
        parsed.config.workers = g.workers;
        parsed.config.train.workers = g.workers;
      }
      if (run_fresh) parsed.config.resume = false;
      const auto result = run_pipeline(parsed);
      for (const auto& s : result.manifest.stages)
        std::cerr << s.name << ": " << (s.reused ? "reused" : "ran") << "\n";
      if (result.tuning) std::cout << "lambda " << result.lambda << " (tuned on dev)\n";
      for (const auto& r : result.reports) print_report(r);
      std::cerr << "manifest: " << result.manifest_path.string() << "\n";
    };
  });

  // validate-config
  auto* vc = app.add_subcommand("validate-config", "Check a config file and list every problem");
  std::string vc_path;
  vc->add_option("config", vc_path, "Config file; overrides --config");
  vc->callback([&] {
    action = [&] {
      const std::string path = vc_path.empty() ? g.config : vc_path;
      if (path.empty()) throw ConfigError("validate-config needs a config file");
      const auto errors = validate_config(path);
      if (errors.empty()) {
        std::cout << "ok\n";
        return;
      }
      std::string msg = "invalid config '" + path + "':";
      for (const auto& e : errors) msg += "\n  " + e;
      throw ConfigError(msg);
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  try {
    action();
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
