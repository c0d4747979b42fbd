#pragma once

// End-to-end runs: configuration schema, environment interpolation, the
// generate -> score -> train -> select -> evaluate pipeline and its manifest.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lfrerank/core.hpp"
#include "lfrerank/error.hpp"
#include "lfrerank/evaluation.hpp"
#include "lfrerank/freebase.hpp"
#include "lfrerank/genclient.hpp"
#include "lfrerank/io.hpp"
#include "lfrerank/reranker.hpp"
#include "lfrerank/scoring.hpp"
#include "lfrerank/selection.hpp"
#include "lfrerank/transport.hpp"

#ifndef LFRERANK_VERSION
#define LFRERANK_VERSION "0.0.0"
#endif

namespace lfrerank {

inline constexpr const char* kToolVersion = LFRERANK_VERSION;

// ---------------------------------------------------------------- config

struct PipelineConfig {
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::filesystem::path output_dir = "run";
  bool resume = true;

  std::filesystem::path dataset;
  std::optional<std::filesystem::path> freebase_map;
  double dev_frac = 0.1;  // used only when the dataset has no dev split

  GeneratorConfig generator;
  PromptTemplate prompt;
  std::string api_token;
  std::string model_name;
  RetryPolicy retry;
  std::size_t mock_pool_size = 12;

  std::vector<std::string> metrics{"bleu", "toy-parser"};
  NormalizationScope normalization = NormalizationScope::per_set;
  std::chrono::milliseconds scorer_timeout{60000};

  FeatureConfig features;
  TrainConfig train;

  Strategy strategy = Strategy::combined;
  std::optional<double> lambda;  // unset: tuned on the dev split
  LambdaConfig lambda_cfg;
  std::optional<std::string> lambda_objective;

  std::vector<std::string> eval_metrics{"bleu", "toy-parser", "combined"};
  std::vector<Strategy> baselines{Strategy::random, Strategy::generator};
  std::size_t bootstrap_resamples = 10000;
};

namespace detail {

// Replaces ${NAME} and ${NAME:-default} in every string value. Unset
// variables without a default are reported with their field path.
inline void interpolate_env(json& j, const std::string& path, std::vector<std::string>& errors) {
  if (j.is_object()) {
    for (auto& [k, v] : j.items()) interpolate_env(v, path.empty() ? k : path + "." + k, errors);
  } else if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) interpolate_env(j[i], path + "[" + std::to_string(i) + "]", errors);
  } else if (j.is_string()) {
    const std::string s = j.get<std::string>();
    std::string out;
    std::size_t pos = 0;
    while (pos < s.size()) {
      const auto open = s.find("${", pos);
      if (open == std::string::npos) {
        out += s.substr(pos);
        break;
      }
      const auto close = s.find('}', open);
      if (close == std::string::npos) {
        errors.push_back(path + ": unterminated ${...}");
        return;
      }
      out += s.substr(pos, open - pos);
      std::string name = s.substr(open + 2, close - open - 2);
      std::optional<std::string> fallback;
      if (auto d = name.find(":-"); d != std::string::npos) {
        fallback = name.substr(d + 2);
        name.resize(d);
      }
      if (const char* v = std::getenv(name.c_str()); v && *v) {
        out += v;
      } else if (fallback) {
        out += *fallback;
      } else {
        errors.push_back(path + ": environment variable " + name + " is not set");
      }
      pos = close + 1;
    }
    j = out;
  }
}

// Collects every schema violation instead of stopping at the first one.
class ConfigReader {
 public:
  explicit ConfigReader(std::vector<std::string>& errors) : errors_(errors) {}

  void error(const std::string& path, const std::string& msg) { errors_.push_back(path + ": " + msg); }

  const json* object(const json& parent, const std::string& key, const std::string& path,
                     std::initializer_list<const char*> allowed) {
    auto it = parent.find(key);
    if (it == parent.end()) return nullptr;
    if (!it->is_object()) {
      error(path, "must be an object");
      return nullptr;
    }
    check_keys(*it, path, allowed);
    return &*it;
  }

  void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
    for (const auto& [k, v] : obj.items()) {
      bool ok = false;
      for (const char* a : allowed) ok = ok || k == a;
      if (!ok) error(join(path, k), "unknown field");
    }
  }

  template <class T>
  void number(const json* obj, const char* key, const std::string& path, T& out, double lo, double hi) {
    if (!obj || !obj->contains(key)) return;
    const json& v = (*obj)[key];
    const std::string p = join(path, key);
    if (!v.is_number()) return error(p, "must be a number");
    const double d = v.get<double>();
    if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) return error(p, "must be an integer");
    }
    if (!(d >= lo && d <= hi)) return error(p, "must be in [" + fmt(lo) + ", " + fmt(hi) + "], got " + v.dump());
    if constexpr (std::is_integral_v<T>) {
      out = static_cast<T>(v.get<long long>());
    } else {
      out = static_cast<T>(d);
    }
  }

  void boolean(const json* obj, const char* key, const std::string& path, bool& out) {
    if (!obj || !obj->contains(key)) return;
    const json& v = (*obj)[key];
    if (!v.is_boolean()) return error(join(path, key), "must be true or false");
    out = v.get<bool>();
  }

  bool string(const json* obj, const char* key, const std::string& path, std::string& out) {
    if (!obj || !obj->contains(key)) return false;
    const json& v = (*obj)[key];
    if (!v.is_string()) {
      error(join(path, key), "must be a string");
      return false;
    }
    out = v.get<std::string>();
    return true;
  }

  bool strings(const json* obj, const char* key, const std::string& path, std::vector<std::string>& out) {
    if (!obj || !obj->contains(key)) return false;
    const json& v = (*obj)[key];
    if (!v.is_array()) {
      error(join(path, key), "must be an array of strings");
      return false;
    }
    std::vector<std::string> tmp;
    for (const auto& e : v) {
      if (!e.is_string()) {
        error(join(path, key), "must be an array of strings");
        return false;
      }
      tmp.push_back(e.get<std::string>());
    }
    out = std::move(tmp);
    return true;
  }

  template <class E>
  void enumeration(const json* obj, const char* key, const std::string& path, E& out,
                   const std::vector<std::pair<std::string, E>>& choices) {
    std::string s;
    if (!string(obj, key, path, s)) return;
    for (const auto& [name, value] : choices)
      if (name == s) {
        out = value;
        return;
      }
    error(join(path, key), "unknown value '" + s + "' (allowed: " + list(choices) + ")");
  }

  static std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

 private:
  static std::string fmt(double d) {
    std::ostringstream o;
    o << d;
    return o.str();
  }

  template <class E>
  static std::string list(const std::vector<std::pair<std::string, E>>& choices) {
    std::string out;
    for (const auto& [name, value] : choices) out += (out.empty() ? "" : ", ") + name;
    return out;
  }

  std::vector<std::string>& errors_;
};

inline std::vector<std::pair<std::string, Strategy>> strategy_choices() {
  std::vector<std::pair<std::string, Strategy>> out;
  for (int i = 0; i < 6; ++i) out.emplace_back(std::string(kStrategyNames[i]), static_cast<Strategy>(i));
  return out;
}

inline bool metric_name_ok(const std::string& m) {
  return m == "bleu" || m == "bleu-smoothed" || m == "toy-parser" || (m.starts_with("ext:") && m.size() > 4);
}

// Parses "lo:hi:step".
inline std::optional<std::vector<double>> parse_grid(const std::string& spec) {
  std::vector<double> parts;
  std::stringstream in(spec);
  std::string tok;
  while (std::getline(in, tok, ':')) {
    try {
      std::size_t used = 0;
      parts.push_back(std::stod(tok, &used));
      if (used != tok.size()) return std::nullopt;
    } catch (const std::exception&) {
      return std::nullopt;
    }
  }
  if (parts.size() != 3 || !(parts[2] > 0.0) || parts[1] < parts[0]) return std::nullopt;
  return LambdaConfig::make_grid(parts[0], parts[1], parts[2]);
}

}  // namespace detail

struct ConfigParse {
  PipelineConfig config;
  json raw;  // as written, before interpolation
  std::vector<std::string> errors;
  bool ok() const { return errors.empty(); }
};

// Parses and validates a config document. All problems are returned at once,
// each prefixed with its field path.
inline ConfigParse parse_config(const json& document) {
  ConfigParse out;
  out.raw = document;
  auto& errors = out.errors;
  if (!document.is_object()) {
    errors.push_back("<root>: config must be a JSON object");
    return out;
  }
  // A run manifest embeds the config it ran with.
  json j = document.contains("manifest_version") ? document.value("config", json::object()) : document;
  out.raw = j;
  if (const auto* tok = j.contains("generator") && j["generator"].is_object() ? &j["generator"] : nullptr;
      tok && tok->contains("api_token") && (*tok)["api_token"].is_string() &&
      (*tok)["api_token"].get<std::string>().find("${") == std::string::npos &&
      !(*tok)["api_token"].get<std::string>().empty())
    errors.push_back("generator.api_token: must reference an environment variable, e.g. \"${LFRERANK_API_TOKEN}\"");
  detail::interpolate_env(j, "", errors);

  auto& c = out.config;
  detail::ConfigReader r(errors);
  r.check_keys(j, "", {"seed", "workers", "output_dir", "resume", "dataset", "generator", "scoring", "reranker",
                       "selection", "evaluation"});
  r.number(&j, "seed", "", c.seed, 0.0, 1.8446744073709552e19);
  r.number(&j, "workers", "", c.workers, 1.0, 1024.0);
  std::string s;
  if (r.string(&j, "output_dir", "", s)) c.output_dir = s;
  r.boolean(&j, "resume", "", c.resume);

  if (!j.contains("dataset")) errors.push_back("dataset: required");
  if (const json* d = r.object(j, "dataset", "dataset", {"path", "freebase_map", "dev_frac"})) {
    if (r.string(d, "path", "dataset", s)) c.dataset = s;
    else if (!d->contains("path")) errors.push_back("dataset.path: required");
    if (r.string(d, "freebase_map", "dataset", s)) c.freebase_map = s;
    r.number(d, "dev_frac", "dataset", c.dev_frac, 1e-9, 1.0 - 1e-9);
  }

  c.generator.endpoint.clear();  // no silent fallback to the mock generator
  if (const json* g = r.object(j, "generator", "generator",
                               {"endpoint", "api_token", "model", "temperature", "target_n", "max_attempts",
                                "max_tokens", "redraw_exemplars_per_attempt", "mock_pool_size", "prompt", "retry"})) {
    r.string(g, "endpoint", "generator", c.generator.endpoint);
    r.string(g, "api_token", "generator", c.api_token);
    r.string(g, "model", "generator", c.model_name);
    r.number(g, "temperature", "generator", c.generator.temperature, 0.0, 2.0);
    r.number(g, "target_n", "generator", c.generator.target_n, 1.0, 1e6);
    r.number(g, "max_attempts", "generator", c.generator.max_attempts, 0.0, 1e8);
    r.number(g, "max_tokens", "generator", c.generator.max_tokens, 1.0, 1e6);
    r.boolean(g, "redraw_exemplars_per_attempt", "generator", c.generator.redraw_exemplars_per_attempt);
    r.number(g, "mock_pool_size", "generator", c.mock_pool_size, 1.0, 1e6);
    if (const json* p = r.object(*g, "prompt", "generator.prompt",
                                 {"style", "num_exemplars", "dataset", "dataset_display", "chat_candidates"})) {
      r.enumeration(p, "style", "generator.prompt", c.prompt.style,
                    {{"completion", PromptStyle::completion}, {"chat", PromptStyle::chat}});
      r.number(p, "num_exemplars", "generator.prompt", c.prompt.num_exemplars, 1.0, 1e4);
      r.string(p, "dataset", "generator.prompt", c.prompt.dataset);
      r.string(p, "dataset_display", "generator.prompt", c.prompt.dataset_display);
      r.number(p, "chat_candidates", "generator.prompt", c.prompt.chat_candidates, 1.0, 1e4);
    }
    if (const json* rt = r.object(*g, "retry", "generator.retry", {"max_retries", "initial_backoff_ms", "max_backoff_ms"})) {
      r.number(rt, "max_retries", "generator.retry", c.retry.max_retries, 0.0, 100.0);
      long long ms = c.retry.initial_backoff.count();
      r.number(rt, "initial_backoff_ms", "generator.retry", ms, 0.0, 3.6e6);
      c.retry.initial_backoff = std::chrono::milliseconds(ms);
      ms = c.retry.max_backoff.count();
      r.number(rt, "max_backoff_ms", "generator.retry", ms, 0.0, 3.6e6);
      c.retry.max_backoff = std::chrono::milliseconds(ms);
    }
  }
  if (c.generator.endpoint.empty()) errors.push_back("generator.endpoint: required; a URL or \"mock\"");
  else if (c.generator.endpoint.starts_with("https://"))
    errors.push_back("generator.endpoint: https is not supported by this build; use http or \"mock\"");
  else if (c.generator.endpoint != "mock" && !c.generator.endpoint.starts_with("http://"))
    errors.push_back("generator.endpoint: must be an http URL or \"mock\"");
  if (c.generator.max_attempts != 0 && c.generator.max_attempts < c.generator.target_n)
    errors.push_back("generator.max_attempts: must be 0 or >= target_n");

  if (const json* sc = r.object(j, "scoring", "scoring", {"metrics", "normalization", "timeout_ms"})) {
    if (r.strings(sc, "metrics", "scoring", c.metrics)) {
      if (c.metrics.empty()) errors.push_back("scoring.metrics: must be non-empty");
      for (const auto& m : c.metrics)
        if (!detail::metric_name_ok(m))
          errors.push_back("scoring.metrics: unknown metric '" + m + "' (allowed: bleu, bleu-smoothed, toy-parser, ext:<cmd-or-url>)");
    }
    r.enumeration(sc, "normalization", "scoring", c.normalization,
                  {{"per-set", NormalizationScope::per_set}, {"corpus", NormalizationScope::corpus}});
    long long ms = c.scorer_timeout.count();
    r.number(sc, "timeout_ms", "scoring", ms, 1.0, 3.6e6);
    c.scorer_timeout = std::chrono::milliseconds(ms);
  }

  if (const json* rr = r.object(j, "reranker", "reranker",
                                {"gamma", "weight_mode", "optimizer", "learning_rate", "max_epochs", "patience",
                                 "warmup_epochs", "features"})) {
    r.number(rr, "gamma", "reranker", c.train.gamma, 0.0, 1e6);
    r.enumeration(rr, "weight_mode", "reranker", c.train.weight_mode,
                  {{"uniform", WeightMode::uniform}, {"set-size", WeightMode::set_size}});
    r.enumeration(rr, "optimizer", "reranker", c.train.optimizer,
                  {{"adam", Optimizer::adaptive_moment}, {"sgd", Optimizer::sgd}});
    r.number(rr, "learning_rate", "reranker", c.train.learning_rate, 1e-12, 1e3);
    r.number(rr, "max_epochs", "reranker", c.train.max_epochs, 1.0, 1e6);
    r.number(rr, "patience", "reranker", c.train.patience, 1.0, 1e6);
    r.number(rr, "warmup_epochs", "reranker", c.train.warmup_epochs, 0.0, 1e6);
    if (const json* f = r.object(*rr, "features", "reranker.features",
                                 {"hash_dim", "char_ngram_orders", "word_ngram_orders", "length_features", "pair_features"})) {
      r.number(f, "hash_dim", "reranker.features", c.features.hash_dim, 2.0, 4294967296.0 / 2);
      if ((c.features.hash_dim & (c.features.hash_dim - 1)) != 0)
        errors.push_back("reranker.features.hash_dim: must be a power of two");
      for (const char* key : {"char_ngram_orders", "word_ngram_orders"}) {
        if (!f->contains(key)) continue;
        auto& dst = std::string_view(key) == "char_ngram_orders" ? c.features.char_ngram_orders : c.features.word_ngram_orders;
        const json& v = (*f)[key];
        bool good = v.is_array();
        std::set<int> orders;
        if (good)
          for (const auto& e : v) {
            if (!e.is_number_integer() || e.get<int>() < 1 || e.get<int>() > 16) good = false;
            else orders.insert(e.get<int>());
          }
        if (!good) errors.push_back(std::string("reranker.features.") + key + ": must be an array of integers in [1, 16]");
        else dst = orders;
      }
      r.boolean(f, "length_features", "reranker.features", c.features.include_length_feats);
      r.boolean(f, "pair_features", "reranker.features", c.features.include_pair_feats);
    }
  }

  if (const json* se = r.object(j, "selection", "selection",
                                {"strategy", "lambda", "lambda_grid", "standardize_first", "objective_metric"})) {
    r.enumeration(se, "strategy", "selection", c.strategy, detail::strategy_choices());
    if (se->contains("lambda")) {
      const json& l = (*se)["lambda"];
      if (l.is_string() && l.get<std::string>() == "tune") c.lambda.reset();
      else if (l.is_number() && l.get<double>() >= 0.0 && l.get<double>() <= 1.0) c.lambda = l.get<double>();
      else errors.push_back("selection.lambda: must be a number in [0, 1] or \"tune\"");
    }
    if (r.string(se, "lambda_grid", "selection", s)) {
      auto grid = detail::parse_grid(s);
      if (!grid || grid->front() < 0.0 || grid->back() > 1.0)
        errors.push_back("selection.lambda_grid: expected lo:hi:step within [0, 1], got '" + s + "'");
      else c.lambda_cfg.grid = *grid;
    }
    r.boolean(se, "standardize_first", "selection", c.lambda_cfg.standardize_first);
    if (r.string(se, "objective_metric", "selection", s)) c.lambda_objective = s;
  }

  if (const json* ev = r.object(j, "evaluation", "evaluation", {"metrics", "baselines", "bootstrap_resamples"})) {
    r.strings(ev, "metrics", "evaluation", c.eval_metrics);
    if (c.eval_metrics.empty()) errors.push_back("evaluation.metrics: must be non-empty");
    std::vector<std::string> names;
    if (r.strings(ev, "baselines", "evaluation", names)) {
      c.baselines.clear();
      for (const auto& n : names) {
        auto st = parse_strategy(n);
        if (!st) {
          std::string allowed;
          for (auto a : kStrategyNames) allowed += (allowed.empty() ? "" : ", ") + std::string(a);
          errors.push_back("evaluation.baselines: unknown strategy '" + n + "' (allowed: " + allowed + ")");
        } else {
          c.baselines.push_back(*st);
        }
      }
    }
    r.number(ev, "bootstrap_resamples", "evaluation", c.bootstrap_resamples, 1.0, 1e8);
  }
  for (const auto& m : c.eval_metrics)
    if (m != "combined" && std::find(c.metrics.begin(), c.metrics.end(), m) == c.metrics.end())
      errors.push_back("evaluation.metrics: '" + m + "' is neither \"combined\" nor one of scoring.metrics");
  if (c.lambda_objective && *c.lambda_objective != "combined" &&
      std::find(c.metrics.begin(), c.metrics.end(), *c.lambda_objective) == c.metrics.end())
    errors.push_back("selection.objective_metric: '" + *c.lambda_objective + "' is not one of scoring.metrics");
  if (c.lambda_objective && *c.lambda_objective == "combined") c.lambda_objective.reset();

  c.train.seed = derive_seed(c.seed, "train");
  c.train.workers = c.workers;
  c.generator.seed = c.seed;
  return out;
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
}

// Returns every schema error in the file; empty means valid.
inline std::vector<std::string> validate_config(const std::filesystem::path& path) {
  return parse_config(read_json_file(path)).errors;
}

inline ConfigParse load_config(const std::filesystem::path& path) {
  auto parsed = parse_config(read_json_file(path));
  if (!parsed.ok()) {
    std::string msg = "invalid config '" + path.string() + "':";
    for (const auto& e : parsed.errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return parsed;
}

// ---------------------------------------------------------------- manifest

// FNV-1a 64 over file bytes, as 16 hex digits. Identifies artifacts; not a
// security digest.
inline std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read '" + path.string() + "' for digest");
  std::uint64_t h = 14695981039346656037ull;
  char buf[65536];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct ArtifactRecord {
  std::string path;
  std::string digest;
};

struct StageRecord {
  std::string name;
  bool reused = false;
  std::map<std::string, ArtifactRecord> outputs;
};

struct RunManifest {
  std::string tool_version = kToolVersion;
  json config;  // uninterpolated; secrets stay as ${VAR} references
  std::string config_digest;
  std::uint64_t seed = 0;
  std::map<std::string, ArtifactRecord> inputs;
  std::vector<StageRecord> stages;
  std::string started_at;
  std::string finished_at;
};

inline json to_json(const RunManifest& m) {
  auto art = [](const std::map<std::string, ArtifactRecord>& a) {
    json o = json::object();
    for (const auto& [k, v] : a) o[k] = {{"path", v.path}, {"fnv1a64", v.digest}};
    return o;
  };
  json stages = json::array();
  for (const auto& s : m.stages)
    stages.push_back({{"name", s.name}, {"status", s.reused ? "reused" : "ran"}, {"outputs", art(s.outputs)}});
  return {{"manifest_version", 1},  {"tool_version", m.tool_version}, {"config", m.config},
          {"config_digest", m.config_digest}, {"seed", m.seed},       {"inputs", art(m.inputs)},
          {"stages", stages},       {"started_at", m.started_at},     {"finished_at", m.finished_at}};
}

inline json to_json(const PipelineReport& r) {
  // p-values are a one-sided paired bootstrap over per-set chosen scores.
  return {{"strategy", r.strategy},
          {"sets", r.sets},
          {"mean_scores", r.mean_scores},
          {"significance", r.significance},
          {"significance_test", "paired-bootstrap-one-sided"}};
}

inline json to_json(const LambdaTuning& t) {
  json curve = json::array();
  for (const auto& [l, v] : t.curve) curve.push_back({{"lambda", l}, {"objective", v}});
  return {{"best_lambda", t.best_lambda}, {"best_objective", t.best_objective}, {"curve", curve}};
}

// ---------------------------------------------------------------- pipeline

// Scores every set under each metric; tables are keyed by the metric name as
// given, even when an external scorer announces a different name.
inline std::vector<QualityTable> score_quality(const std::vector<CandidateSet>& sets,
                                               const std::vector<std::string>& metrics,
                                               const ExternalScorerOptions& opt = {}) {
  std::vector<QualityTable> quality;
  for (const auto& metric : metrics) {
    auto scorer = make_scorer(metric, opt);
    auto tables = score_sets(sets, *scorer);
    if (scorer->spec().name != metric)
      for (auto& t : tables) {
        auto node = t.per_metric.extract(scorer->spec().name);
        node.key() = metric;
        t.per_metric.insert(std::move(node));
      }
    merge_quality(quality, tables);
  }
  return quality;
}

struct PipelineResult {
  RunManifest manifest;
  std::vector<PipelineReport> reports;  // main strategy first, then baselines
  std::optional<LambdaTuning> tuning;
  double lambda = 1.0;
  std::filesystem::path manifest_path;
};

// Every stage writes plain artifacts under output_dir. When `resume` is on
// and the previous manifest there was produced by the same config and inputs,
// stages whose outputs are intact are loaded instead of recomputed.
inline PipelineResult run_pipeline(const ConfigParse& parsed,
                                   GenerationClient* client_override = nullptr) {
  if (!parsed.ok()) throw ConfigError("invalid config: " + parsed.errors.front());
  const PipelineConfig& cfg = parsed.config;
  namespace fs = std::filesystem;
  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);

  PipelineResult result;
  auto& man = result.manifest;
  man.config = parsed.raw;
  man.config_digest = [&] {
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a64(parsed.raw.dump())));
    return std::string(hex);
  }();
  man.seed = cfg.seed;
  man.started_at = utc_timestamp();
  if (!fs::exists(cfg.dataset)) throw DataError("dataset '" + cfg.dataset.string() + "' not found");
  man.inputs["dataset"] = {cfg.dataset.string(), file_digest(cfg.dataset)};
  if (cfg.freebase_map) man.inputs["freebase_map"] = {cfg.freebase_map->string(), file_digest(*cfg.freebase_map)};

  result.manifest_path = dir / "manifest.json";
  std::optional<json> previous;
  if (cfg.resume && fs::exists(result.manifest_path)) {
    try {
      std::ifstream in(result.manifest_path);
      previous = json::parse(in);
    } catch (const json::exception&) {
      previous.reset();
    }
  }
  bool reuse = previous && previous->value("config_digest", "") == man.config_digest &&
               previous->value("tool_version", "") == man.tool_version;
  if (reuse)
    for (const auto& [k, v] : man.inputs) {
      const auto& prev = (*previous)["inputs"];
      reuse = reuse && prev.contains(k) && prev[k].value("fnv1a64", "") == v.digest;
    }

  // A stage is reused only if every earlier stage was and its recorded
  // outputs still match on disk.
  auto try_reuse = [&](const std::string& stage, const std::vector<std::string>& files) {
    if (!reuse) return false;
    for (const auto& s : (*previous)["stages"]) {
      if (s.value("name", "") != stage) continue;
      for (const auto& f : files) {
        const fs::path p = dir / f;
        if (!fs::exists(p) || !s["outputs"].contains(f) || s["outputs"][f].value("fnv1a64", "") != file_digest(p))
          return reuse = false;
      }
      return true;
    }
    return reuse = false;
  };
  auto record = [&](const std::string& stage, bool reused, const std::vector<std::string>& files) {
    StageRecord rec{stage, reused, {}};
    for (const auto& f : files) rec.outputs[f] = {(dir / f).string(), file_digest(dir / f)};
    man.stages.push_back(std::move(rec));
  };

  // Dataset.
  auto lfs = load_dataset(cfg.dataset);
  if (cfg.freebase_map) {
    const auto map = IdentifierMap::load(*cfg.freebase_map);
    for (auto& lf : lfs) lf.lf = map.apply(lf.lf);
  }
  std::vector<LogicalForm> exemplar_pool;
  for (const auto& lf : lfs)
    if (lf.split == Split::train && lf.reference) exemplar_pool.push_back(lf);

  // Stage 1: generate.
  const std::vector<std::string> gen_files{"candidates.jsonl"};
  std::vector<CandidateSet> sets;
  if (try_reuse("generate", gen_files)) {
    sets = load_candidates(dir / gen_files[0]);
    record("generate", true, gen_files);
  } else {
    std::unique_ptr<GenerationClient> owned;
    GenerationClient* client = client_override;
    if (!client) {
      if (cfg.generator.endpoint == "mock")
        owned = std::make_unique<MockClient>(derive_seed(cfg.seed, "mock-generator"), lfs, cfg.mock_pool_size);
      else
        owned = std::make_unique<HttpGenerationClient>(cfg.generator.endpoint, cfg.api_token, cfg.retry, cfg.model_name);
      client = owned.get();
    }
    sets = generate_candidates(lfs, exemplar_pool, cfg.generator, cfg.prompt, *client, cfg.workers);
    save_candidates(sets, dir / gen_files[0]);
    record("generate", false, gen_files);
  }

  // Stage 2: score.
  const std::vector<std::string> score_files{"scores.jsonl"};
  std::vector<QualityTable> quality;
  if (try_reuse("score", score_files)) {
    quality = load_scores(dir / score_files[0]);
    record("score", true, score_files);
  } else {
    ExternalScorerOptions opt;
    opt.timeout = cfg.scorer_timeout;
    quality = score_quality(sets, cfg.metrics, opt);
    combine_quality(quality, cfg.metrics, cfg.normalization);
    save_scores(quality, dir / score_files[0]);
    record("score", false, score_files);
  }
  if (quality.size() != sets.size()) throw DataError("scores do not cover every candidate set");

  // Partition by split.
  std::map<std::string, Split> split_of;
  for (const auto& lf : lfs) split_of[lf.id] = lf.split;
  std::vector<std::size_t> train_idx, dev_idx, test_idx;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    if (quality[i].lf_id != sets[i].lf_id()) throw DataError("score order does not match candidate order");
    switch (split_of.at(sets[i].lf_id())) {
      case Split::train: train_idx.push_back(i); break;
      case Split::dev: dev_idx.push_back(i); break;
      case Split::test: test_idx.push_back(i); break;
    }
  }
  if (train_idx.empty()) throw DataError("dataset has no train split");
  if (test_idx.empty()) throw DataError("dataset has no test split");
  if (dev_idx.empty()) {
    auto [tr, dv] = split_dev(train_idx.size(), cfg.dev_frac, derive_seed(cfg.seed, "pipeline-dev"));
    std::vector<std::size_t> t2, d2;
    for (auto k : tr) t2.push_back(train_idx[k]);
    for (auto k : dv) d2.push_back(train_idx[k]);
    train_idx = std::move(t2);
    dev_idx = std::move(d2);
  }
  auto pick_sets = [&](const std::vector<std::size_t>& idx) {
    std::vector<CandidateSet> out;
    for (auto i : idx) out.push_back(sets[i]);
    return out;
  };
  auto pick_quality = [&](const std::vector<std::size_t>& idx) {
    std::vector<QualityTable> out;
    for (auto i : idx) out.push_back(quality[i]);
    return out;
  };
  const auto train_sets = pick_sets(train_idx), dev_sets = pick_sets(dev_idx), test_sets = pick_sets(test_idx);
  const auto dev_quality = pick_quality(dev_idx), test_quality = pick_quality(test_idx);

  // Stage 3: train.
  const std::vector<std::string> train_files{"model.json"};
  RerankerModel model;
  if (try_reuse("train", train_files)) {
    model = load_model(dir / train_files[0]);
    record("train", true, train_files);
  } else {
    std::vector<std::vector<double>> tr_q, dv_q;
    for (auto i : train_idx) tr_q.push_back(quality[i].require_combined());
    for (auto i : dev_idx) dv_q.push_back(quality[i].require_combined());
    model = train(train_sets, tr_q, dev_sets, dv_q, cfg.features, cfg.train);
    save_model(model, dir / train_files[0]);
    record("train", false, train_files);
  }

  // Stage 4: select (lambda tuned on dev when needed).
  const bool tuned = cfg.strategy == Strategy::combined && !cfg.lambda;
  std::vector<std::string> select_files{"selections.jsonl"};
  for (auto b : cfg.baselines) select_files.push_back("selections." + std::string(to_string(b)) + ".jsonl");
  if (tuned) select_files.push_back("lambda.json");
  result.lambda = cfg.lambda.value_or(1.0);
  std::vector<SelectionResult> selections;
  std::map<std::string, std::vector<SelectionResult>> baseline_sel;
  if (try_reuse("select", select_files)) {
    selections = load_selections(dir / select_files[0]);
    for (std::size_t b = 0; b < cfg.baselines.size(); ++b)
      baseline_sel[std::string(to_string(cfg.baselines[b]))] = load_selections(dir / select_files[b + 1]);
    if (tuned) {
      std::ifstream in(dir / "lambda.json");
      const auto j = json::parse(in);
      LambdaTuning t;
      t.best_lambda = j.at("best_lambda").get<double>();
      t.best_objective = j.at("best_objective").get<double>();
      for (const auto& p : j.at("curve")) t.curve.emplace_back(p.at("lambda").get<double>(), p.at("objective").get<double>());
      result.lambda = t.best_lambda;
      result.tuning = t;
    }
    record("select", true, select_files);
  } else {
    if (tuned) {
      result.tuning = tune_lambda(dev_sets, model, dev_quality, cfg.lambda_cfg, cfg.lambda_objective);
      result.lambda = result.tuning->best_lambda;
      std::ofstream out(dir / "lambda.json", std::ios::trunc);
      out << to_json(*result.tuning).dump(2) << '\n';
    }
    SelectionOptions opt{cfg.strategy, &model, result.lambda, cfg.lambda_cfg.standardize_first,
                         derive_seed(cfg.seed, "select")};
    selections = select_all(test_sets, &test_quality, opt);
    save_selections(selections, test_sets, dir / select_files[0]);
    for (std::size_t b = 0; b < cfg.baselines.size(); ++b) {
      SelectionOptions bopt = opt;
      bopt.strategy = cfg.baselines[b];
      auto sel = select_all(test_sets, &test_quality, bopt);
      save_selections(sel, test_sets, dir / select_files[b + 1]);
      baseline_sel[std::string(to_string(cfg.baselines[b]))] = std::move(sel);
    }
    record("select", false, select_files);
  }

  // Stage 5: evaluate. Cheap, so always recomputed.
  const BootstrapConfig boot{cfg.bootstrap_resamples, derive_seed(cfg.seed, "bootstrap")};
  result.reports.push_back(
      evaluate_pipeline(std::string(to_string(cfg.strategy)), selections, test_quality, cfg.eval_metrics, baseline_sel, boot));
  for (const auto& [name, sel] : baseline_sel)
    result.reports.push_back(evaluate_pipeline(name, sel, test_quality, cfg.eval_metrics, {}, boot));
  {
    json reports = json::array();
    for (const auto& r : result.reports) reports.push_back(to_json(r));
    json out{{"lambda", result.lambda}, {"test_sets", test_sets.size()}, {"reports", reports}};
    std::ofstream f(dir / "report.json", std::ios::trunc);
    f << out.dump(2) << '\n';
  }
  record("evaluate", false, {"report.json"});

  man.finished_at = utc_timestamp();
  std::ofstream mf(result.manifest_path, std::ios::trunc);
  mf << to_json(man).dump(2) << '\n';
  if (!mf) throw DataError("cannot write manifest '" + result.manifest_path.string() + "'");
  return result;
}

}  // namespace lfrerank
