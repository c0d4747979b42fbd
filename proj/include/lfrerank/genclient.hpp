#pragma once

// Candidate generation: few-shot prompt construction, the generator client
// contract, seeded mock clients, sampling until n unique candidates, and the
// fixed-budget variable-size dataset builder.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lfrerank/core.hpp"
#include "lfrerank/error.hpp"
#include "lfrerank/parallel.hpp"
#include "lfrerank/random.hpp"

namespace lfrerank {

// ---------------------------------------------------------------- prompts

enum class PromptStyle {
  completion,  // "Query:/Question:" pairs, model continues the last line
  chat,        // instruction prompt asking for a numbered list of candidates
};

struct PromptTemplate {
  PromptStyle style = PromptStyle::completion;
  std::string dataset = "geo_query";  // banner name, e.g. "# geo_query Dataset:"
  std::string dataset_display = "GeoQuery";
  int num_exemplars = 15;
  int chat_candidates = 8;

  void validate() const {
    if (num_exemplars < 1) throw ConfigError("prompt.num_exemplars must be >= 1");
    if (style == PromptStyle::chat && chat_candidates < 1) throw ConfigError("prompt.chat_candidates must be >= 1");
  }
};

inline std::string build_prompt(const LogicalForm& target, const std::vector<LogicalForm>& exemplars,
                                const PromptTemplate& tmpl) {
  tmpl.validate();
  if (exemplars.size() < static_cast<std::size_t>(tmpl.num_exemplars))
    throw DataError("prompt for '" + target.id + "' needs " + std::to_string(tmpl.num_exemplars) +
                    " exemplars, only " + std::to_string(exemplars.size()) + " available");
  std::string prompt;
  const auto used = static_cast<std::size_t>(tmpl.num_exemplars);
  if (tmpl.style == PromptStyle::completion) {
    prompt += "# " + tmpl.dataset + " Dataset:\n\n";
    for (std::size_t k = 0; k < used; ++k) {
      const auto& ex = exemplars[k];
      if (ex.id == target.id) throw DataError("exemplars must not include the target '" + target.id + "'");
      prompt += "Query: " + ex.lf + "\nQuestion: " + ex.require_reference() + "\n\n";
    }
    prompt += "Query: " + target.lf + "\nQuestion:";
  } else {
    prompt += "Here are some examples of query/question pairs from the " + tmpl.dataset_display + " data set.\n\n";
    for (std::size_t k = 0; k < used; ++k) {
      const auto& ex = exemplars[k];
      if (ex.id == target.id) throw DataError("exemplars must not include the target '" + target.id + "'");
      prompt += "logical form: " + ex.lf + "\nnatural language: " + ex.require_reference() + "\n\n";
    }
    prompt += "Please generate " + std::to_string(tmpl.chat_candidates) +
              " natural language candidates for following logical form. Present your answer as a numbered list.\n";
    prompt += "logical form: " + target.lf;
  }
  return prompt;
}

// Uniform draw of `count` exemplars from `pool`, excluding the target itself.
// Order is the draw order.
inline std::vector<LogicalForm> draw_exemplars(const LogicalForm& target, const std::vector<LogicalForm>& pool,
                                               std::size_t count, Rng& rng) {
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < pool.size(); ++i)
    if (pool[i].id != target.id && pool[i].reference) eligible.push_back(i);
  if (eligible.size() < count)
    throw DataError("need " + std::to_string(count) + " exemplars for '" + target.id + "', only " +
                    std::to_string(eligible.size()) + " eligible");
  // Partial Fisher-Yates.
  for (std::size_t k = 0; k < count; ++k) std::swap(eligible[k], eligible[k + rng.index(eligible.size() - k)]);
  std::vector<LogicalForm> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) out.push_back(pool[eligible[k]]);
  return out;
}

// ---------------------------------------------------------------- client contract

struct GenerationRequest {
  std::string lf_id;
  std::string lf;
  std::string prompt;
  double temperature = 0.7;
  int max_tokens = 128;
  int n = 1;
  // Index of the first sample this request produces within its LF's stream.
  std::int64_t sample_offset = 0;
};

struct Completion {
  std::string text;
  std::vector<double> token_logprobs;
};

// Implementations must tolerate concurrent calls for distinct LFs.
class GenerationClient {
 public:
  virtual ~GenerationClient() = default;
  virtual std::vector<Completion> complete(const GenerationRequest& request) = 0;
};

inline double mean_token_logprob(const std::vector<double>& token_logprobs) {
  if (token_logprobs.empty()) throw DataError("mean_token_logprob of an empty list");
  double sum = 0.0;
  for (double x : token_logprobs) sum += x;
  return sum / static_cast<double>(token_logprobs.size());
}

// Completion-style output: keep the first line. Chat-style output: one
// candidate per numbered list item ("1. text", "2) text").
inline std::vector<std::string> extract_candidates(std::string_view raw, PromptStyle style) {
  std::vector<std::string> out;
  if (style == PromptStyle::completion) {
    raw = trim(raw);
    auto nl = raw.find('\n');
    auto first = trim(raw.substr(0, nl));
    if (!first.empty()) out.emplace_back(first);
    return out;
  }
  std::size_t pos = 0;
  while (pos <= raw.size()) {
    auto nl = raw.find('\n', pos);
    auto line = trim(raw.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
    std::size_t d = 0;
    while (d < line.size() && std::isdigit(static_cast<unsigned char>(line[d]))) ++d;
    if (d > 0 && d < line.size() && (line[d] == '.' || line[d] == ')')) {
      auto item = trim(line.substr(d + 1));
      if (item.size() >= 2 && item.front() == '"' && item.back() == '"') item = item.substr(1, item.size() - 2);
      if (!item.empty()) out.emplace_back(item);
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return out;
}

// ---------------------------------------------------------------- mock clients

// Replays a fixed script of outputs, cycling. Each LF id has its own cursor.
class ScriptedClient : public GenerationClient {
 public:
  explicit ScriptedClient(std::vector<std::string> script, double logprob = -1.0)
      : script_(std::move(script)), logprob_(logprob) {
    if (script_.empty()) throw ConfigError("scripted client needs a non-empty script");
  }

  std::vector<Completion> complete(const GenerationRequest& request) override {
    std::lock_guard lock(mu_);
    auto& cursor = cursors_[request.lf_id];
    std::vector<Completion> out;
    for (int k = 0; k < request.n; ++k) {
      out.push_back({script_[cursor % script_.size()], {logprob_}});
      ++cursor;
    }
    ++calls_;
    return out;
  }

  std::size_t calls() const {
    std::lock_guard lock(mu_);
    return calls_;
  }

 private:
  std::vector<std::string> script_;
  double logprob_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, std::size_t> cursors_;
  std::size_t calls_ = 0;
};

struct WeightedText {
  std::string text;
  double weight = 1.0;
};

// Builds a pool of plausible candidates for one LF by perturbing its
// reference: dropped, swapped, duplicated and leaked-LF-token variants. The
// reference itself carries the largest weight.
inline std::vector<WeightedText> perturbation_pool(const std::string& lf_id, const std::string& lf,
                                                   const std::optional<std::string>& reference,
                                                   std::size_t pool_size, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "pool:" + lf_id));
  std::vector<std::string> base = split_whitespace(reference ? *reference : lf);
  if (base.empty()) base = {"unknown"};
  std::vector<std::string> lf_tokens;
  for (auto& t : split_whitespace(lf))
    if (t.size() > 1 && t.find_first_of("()") == std::string::npos) lf_tokens.push_back(t);
  if (lf_tokens.empty()) lf_tokens.push_back("answer");

  auto join = [](const std::vector<std::string>& toks) {
    std::string s;
    for (const auto& t : toks) {
      if (!s.empty()) s += ' ';
      s += t;
    }
    return s;
  };

  std::vector<std::string> texts{join(base)};
  static const std::vector<std::string> fillers{"the", "all", "please", "exactly", "some"};
  for (int tries = 0; texts.size() < pool_size && tries < 200; ++tries) {
    std::vector<std::string> t = base;
    const int edits = 1 + static_cast<int>(rng.index(std::min<std::size_t>(3, texts.size())));
    for (int e = 0; e < edits; ++e) {
      switch (rng.index(5)) {
        case 0:  // drop
          if (t.size() > 1) t.erase(t.begin() + static_cast<std::ptrdiff_t>(rng.index(t.size())));
          break;
        case 1:  // swap neighbours
          if (t.size() > 1) {
            auto i = rng.index(t.size() - 1);
            std::swap(t[i], t[i + 1]);
          }
          break;
        case 2:  // duplicate
          {
            auto i = rng.index(t.size());
            t.insert(t.begin() + static_cast<std::ptrdiff_t>(i), t[i]);
          }
          break;
        case 3:  // leak an LF token
          t.insert(t.begin() + static_cast<std::ptrdiff_t>(rng.index(t.size() + 1)), lf_tokens[rng.index(lf_tokens.size())]);
          break;
        default:  // filler insertion
          t.insert(t.begin() + static_cast<std::ptrdiff_t>(rng.index(t.size() + 1)), fillers[rng.index(fillers.size())]);
          break;
      }
    }
    std::string s = join(t);
    if (std::find(texts.begin(), texts.end(), s) == texts.end()) texts.push_back(std::move(s));
  }
  std::vector<WeightedText> pool;
  for (std::size_t k = 0; k < texts.size(); ++k) {
    const double jitter = k == 0 ? 1.0 : 0.8 + 0.2 * rng.uniform();
    pool.push_back({texts[k], std::exp(-0.45 * static_cast<double>(k)) * jitter});
  }
  return pool;
}

// Seeded sampler over a per-LF weighted pool. Each sample's randomness is
// derived from (seed, lf_id, sample index), so results do not depend on call
// interleaving across threads. Token log-probabilities are a deterministic
// function of the text and its pool weight.
class MockClient : public GenerationClient {
 public:
  using PoolProvider = std::function<std::vector<WeightedText>(const GenerationRequest&)>;

  MockClient(std::uint64_t seed, PoolProvider provider) : seed_(seed), provider_(std::move(provider)) {}

  // Default pool: perturbations of each LF's reference, looked up by id.
  MockClient(std::uint64_t seed, const std::vector<LogicalForm>& lfs, std::size_t pool_size = 12) : seed_(seed) {
    auto refs = std::make_shared<std::unordered_map<std::string, std::optional<std::string>>>();
    for (const auto& lf : lfs) (*refs)[lf.id] = lf.reference;
    provider_ = [refs, pool_size, seed](const GenerationRequest& r) {
      auto it = refs->find(r.lf_id);
      std::optional<std::string> ref = it == refs->end() ? std::nullopt : it->second;
      return perturbation_pool(r.lf_id, r.lf, ref, pool_size, seed);
    };
  }

  std::vector<Completion> complete(const GenerationRequest& request) override {
    const auto pool = provider_(request);
    if (pool.empty()) return {};
    double total = 0.0;
    for (const auto& p : pool) total += p.weight;
    std::vector<Completion> out;
    out.reserve(static_cast<std::size_t>(request.n));
    for (int k = 0; k < request.n; ++k) {
      Rng rng(derive_seed(seed_, request.lf_id, static_cast<std::uint64_t>(request.sample_offset + k)));
      // Temperature reshapes the pool distribution: w^(1/T), computed relative
      // to the heaviest entry so small temperatures do not underflow.
      const double t = std::max(request.temperature, 1e-3);
      double wmax = 0.0;
      for (const auto& p : pool) wmax = std::max(wmax, p.weight);
      std::vector<double> w(pool.size());
      double z = 0.0;
      for (std::size_t i = 0; i < pool.size(); ++i) z += (w[i] = std::pow(pool[i].weight / wmax, 1.0 / t));
      double u = rng.uniform() * z;
      std::size_t pick = 0;
      for (; pick + 1 < pool.size(); ++pick) {
        if (u < w[pick]) break;
        u -= w[pick];
      }
      out.push_back({pool[pick].text, token_logprobs(pool[pick], total)});
    }
    return out;
  }

 private:
  static std::vector<double> token_logprobs(const WeightedText& item, double total) {
    const auto toks = split_whitespace(item.text);
    const std::size_t n = std::max<std::size_t>(1, toks.size());
    const double per_token = std::log(item.weight / total) / static_cast<double>(n);
    Rng rng(fnv1a64(item.text));
    std::vector<double> lp(n);
    for (auto& x : lp) x = per_token - 0.05 * rng.uniform();
    return lp;
  }

  std::uint64_t seed_;
  PoolProvider provider_;
};

// ---------------------------------------------------------------- sampling until n unique

struct GeneratorConfig {
  std::string endpoint = "mock";
  double temperature = 0.7;
  int max_attempts = 0;  // cap on samples drawn per LF; 0 means 5 * target_n
  int target_n = 8;
  int max_tokens = 128;
  std::uint64_t seed = 0;
  bool redraw_exemplars_per_attempt = false;

  int attempt_cap() const { return max_attempts > 0 ? max_attempts : 5 * target_n; }

  void validate() const {
    if (endpoint.empty()) throw ConfigError("generator.endpoint must be a URL or \"mock\"");
    if (!(temperature >= 0.0 && temperature <= 2.0)) throw ConfigError("generator.temperature must be in [0, 2]");
    if (target_n < 1) throw ConfigError("generator.target_n must be >= 1");
    if (max_attempts != 0 && max_attempts < target_n) throw ConfigError("generator.max_attempts must be >= target_n");
    if (max_tokens < 1) throw ConfigError("generator.max_tokens must be >= 1");
  }
};

namespace detail {

// Exact-match dedup on trimmed text, preserving first-seen order.
class Deduper {
 public:
  void add(std::string_view raw, double logprob) {
    std::string text(trim(raw));
    if (text.empty()) return;
    auto [it, inserted] = index_.try_emplace(text, candidates_.size());
    if (inserted) {
      candidates_.push_back({std::move(text), 1, logprob});
    } else {
      ++candidates_[it->second].raw_count;
    }
    ++drawn_;
  }
  std::size_t unique() const { return candidates_.size(); }
  std::int64_t drawn() const { return drawn_; }
  std::vector<Candidate> take() { return std::move(candidates_); }

 private:
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<Candidate> candidates_;
  std::int64_t drawn_ = 0;
};

inline double completion_logprob(const Completion& c) {
  return c.token_logprobs.empty() ? 0.0 : mean_token_logprob(c.token_logprobs);
}

}  // namespace detail

// Prompt factory receives the number of samples drawn so far.
using PromptFactory = std::function<std::string(std::int64_t drawn)>;

// Samples until target_n distinct texts are seen or the attempt cap is
// reached. Each request asks for as many samples as distinct texts are still
// missing; every returned sample is counted. A truncated result is flagged
// rather than treated as an error.
inline CandidateSet generate_until_unique(const LogicalForm& lf, const PromptFactory& prompt_for,
                                          const GeneratorConfig& cfg, GenerationClient& client,
                                          PromptStyle style = PromptStyle::completion) {
  cfg.validate();
  detail::Deduper dedup;
  const std::int64_t cap = cfg.attempt_cap();
  std::int64_t requested = 0;
  while (dedup.unique() < static_cast<std::size_t>(cfg.target_n) && requested < cap) {
    GenerationRequest req;
    req.lf_id = lf.id;
    req.lf = lf.lf;
    req.prompt = prompt_for(requested);
    req.temperature = cfg.temperature;
    req.max_tokens = cfg.max_tokens;
    req.n = static_cast<int>(std::min<std::int64_t>(cfg.target_n - static_cast<std::int64_t>(dedup.unique()),
                                                    cap - requested));
    req.sample_offset = requested;
    requested += req.n;
    for (const auto& c : client.complete(req)) {
      const double lp = detail::completion_logprob(c);
      for (const auto& text : extract_candidates(c.text, style)) {
        if (dedup.unique() >= static_cast<std::size_t>(cfg.target_n) &&
            style == PromptStyle::chat)
          break;
        dedup.add(text, lp);
      }
    }
  }
  if (dedup.unique() == 0) throw ServiceError("generator produced no candidates for '" + lf.id + "'");
  const bool truncated = dedup.unique() < static_cast<std::size_t>(cfg.target_n);
  return CandidateSet(lf.id, dedup.take(), lf.lf, lf.reference, truncated);
}

// Corpus-level generation: fixed exemplars per LF (or redrawn per request),
// LFs processed in parallel. Output order follows `lfs`.
inline std::vector<CandidateSet> generate_candidates(const std::vector<LogicalForm>& lfs,
                                                     const std::vector<LogicalForm>& exemplar_pool,
                                                     const GeneratorConfig& cfg, const PromptTemplate& tmpl,
                                                     GenerationClient& client, std::size_t workers = 1) {
  cfg.validate();
  tmpl.validate();
  std::vector<std::optional<CandidateSet>> slots(lfs.size());
  parallel_for(lfs.size(), workers, [&](std::size_t i) {
    const LogicalForm& lf = lfs[i];
    Rng rng(derive_seed(cfg.seed, "exemplars:" + lf.id));
    auto fixed = draw_exemplars(lf, exemplar_pool, static_cast<std::size_t>(tmpl.num_exemplars), rng);
    const std::string fixed_prompt = build_prompt(lf, fixed, tmpl);
    PromptFactory factory = [&](std::int64_t drawn) {
      if (!cfg.redraw_exemplars_per_attempt || drawn == 0) return fixed_prompt;
      Rng redraw(derive_seed(cfg.seed, "exemplars:" + lf.id, static_cast<std::uint64_t>(drawn)));
      return build_prompt(lf, draw_exemplars(lf, exemplar_pool, static_cast<std::size_t>(tmpl.num_exemplars), redraw),
                          tmpl);
    };
    slots[i] = generate_until_unique(lf, factory, cfg, client, tmpl.style);
  });
  std::vector<CandidateSet> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

// ---------------------------------------------------------------- fixed-budget builder

struct BudgetBuilderConfig {
  int samples_per_lf = 10;
  int min_unique = 2;
  std::optional<std::chrono::milliseconds> wall_clock_budget;

  void validate() const {
    if (min_unique < 2) throw ConfigError("budget.min_unique must be >= 2");
    if (samples_per_lf < min_unique) throw ConfigError("budget.samples_per_lf must be >= min_unique");
  }
};

struct BudgetBuildResult {
  std::vector<CandidateSet> sets;
  std::size_t lfs_attempted = 0;
  std::size_t lfs_dropped = 0;
  bool budget_exhausted = false;

  double mean_set_size() const {
    if (sets.empty()) return 0.0;
    double total = 0.0;
    for (const auto& s : sets) total += static_cast<double>(s.size());
    return total / static_cast<double>(sets.size());
  }
};

// Draws samples_per_lf samples per LF, deduplicates, and keeps sets with at
// least min_unique distinct candidates. LFs are visited in order until the
// wall-clock budget (if any) runs out.
inline BudgetBuildResult build_variable_dataset(const std::vector<LogicalForm>& lfs,
                                                const std::function<std::string(const LogicalForm&)>& prompt_for,
                                                const BudgetBuilderConfig& cfg, GenerationClient& client,
                                                double temperature = 0.7, std::size_t workers = 1) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  std::atomic<bool> exhausted{false};
  std::vector<std::optional<CandidateSet>> slots(lfs.size());
  std::vector<char> attempted(lfs.size(), 0);
  parallel_for(lfs.size(), workers, [&](std::size_t i) {
    if (cfg.wall_clock_budget && std::chrono::steady_clock::now() - start >= *cfg.wall_clock_budget) {
      exhausted = true;
      return;
    }
    attempted[i] = 1;
    const LogicalForm& lf = lfs[i];
    detail::Deduper dedup;
    GenerationRequest req;
    req.lf_id = lf.id;
    req.lf = lf.lf;
    req.prompt = prompt_for(lf);
    req.temperature = temperature;
    std::int64_t requested = 0;
    // A client may return fewer samples than asked; keep asking until the
    // per-LF sample quota is met or a request comes back empty.
    while (requested < cfg.samples_per_lf) {
      req.n = cfg.samples_per_lf - static_cast<int>(requested);
      req.sample_offset = requested;
      auto got = client.complete(req);
      if (got.empty()) break;
      for (const auto& c : got) {
        if (requested >= cfg.samples_per_lf) break;
        const auto texts = extract_candidates(c.text, PromptStyle::completion);
        dedup.add(texts.empty() ? std::string_view{} : std::string_view(texts.front()),
                  detail::completion_logprob(c));
        ++requested;
      }
    }
    if (dedup.unique() >= static_cast<std::size_t>(cfg.min_unique))
      slots[i] = CandidateSet(lf.id, dedup.take(), lf.lf, lf.reference);
  });
  BudgetBuildResult result;
  result.budget_exhausted = exhausted;
  for (std::size_t i = 0; i < lfs.size(); ++i) {
    if (!attempted[i]) continue;
    ++result.lfs_attempted;
    if (slots[i]) {
      result.sets.push_back(std::move(*slots[i]));
    } else {
      ++result.lfs_dropped;
    }
  }
  if (result.sets.empty()) throw DataError("budget builder produced no candidate sets");
  return result;
}

}  // namespace lfrerank
