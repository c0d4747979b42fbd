#pragma once

// Network and process transports: the HTTP generator client and external
// scorers speaking the line-delimited JSON scoring protocol over a child
// process's stdin/stdout or over HTTP.
//
// Scoring protocol, version 1:
//   handshake (server -> client, once): {"hello": true, "name", "kind", "protocol_version": 1}
//   request:  {"protocol_version": 1, "kind", "items": [{"candidate", "reference"?, "lf"?}, ...]}
//   response: {"scores": [real, ...]}  with one score per item, or {"error": "..."}

#include <poll.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <mutex>
#include <semaphore>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "lfrerank/error.hpp"
#include "lfrerank/genclient.hpp"
#include "lfrerank/scoring.hpp"

namespace lfrerank {

inline constexpr int kScorerProtocolVersion = 1;

struct Url {
  std::string origin;  // scheme://host[:port]
  std::string path;    // begins with '/'
};

inline Url parse_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("not a URL: '" + url + "'");
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme == "https") throw ConfigError("https is not supported by this build (no TLS): '" + url + "'");
  if (scheme != "http") throw ConfigError("unsupported URL scheme '" + scheme + "'");
  const auto path_start = url.find('/', scheme_end + 3);
  Url u;
  u.origin = url.substr(0, path_start);
  u.path = path_start == std::string::npos ? "/" : url.substr(path_start);
  if (u.origin.size() <= scheme_end + 3) throw ConfigError("URL has no host: '" + url + "'");
  return u;
}

// ---------------------------------------------------------------- scorer protocol helpers

inline nlohmann::json scorer_request(ScorerKind kind, std::span<const ScoreItem> items) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& it : items) {
    nlohmann::json j{{"candidate", it.candidate}};
    if (it.reference) j["reference"] = *it.reference;
    if (it.lf) j["lf"] = *it.lf;
    arr.push_back(std::move(j));
  }
  return {{"protocol_version", kScorerProtocolVersion}, {"kind", std::string(to_string(kind))}, {"items", std::move(arr)}};
}

inline std::vector<double> parse_scorer_response(const std::string& body, std::size_t expected, const std::string& name) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw ServiceError("scorer '" + name + "' sent malformed JSON: " + e.what());
  }
  if (j.contains("error")) throw ServiceError("scorer '" + name + "' reported: " + j["error"].dump());
  if (!j.contains("scores") || !j["scores"].is_array()) throw ServiceError("scorer '" + name + "' response lacks 'scores'");
  std::vector<double> out;
  for (const auto& v : j["scores"]) {
    if (!v.is_number()) throw ServiceError("scorer '" + name + "' returned a non-numeric score");
    out.push_back(v.get<double>());
  }
  if (out.size() != expected)
    throw ServiceError("scorer '" + name + "' returned " + std::to_string(out.size()) + " scores for " +
                       std::to_string(expected) + " items");
  return out;
}

struct Handshake {
  std::string name;
  ScorerKind kind = ScorerKind::external_reference;
  int protocol_version = 0;
};

inline Handshake parse_handshake(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    if (!j.contains("hello")) throw ServiceError("scorer handshake lacks 'hello'");
    Handshake h;
    h.name = j.at("name").get<std::string>();
    const auto kind = parse_scorer_kind(j.at("kind").get<std::string>());
    if (!kind || *kind == ScorerKind::native_overlap) throw ServiceError("scorer handshake has an invalid kind");
    h.kind = *kind;
    h.protocol_version = j.at("protocol_version").get<int>();
    if (h.protocol_version != kScorerProtocolVersion)
      throw ServiceError("scorer speaks protocol version " + std::to_string(h.protocol_version) + ", expected " +
                         std::to_string(kScorerProtocolVersion));
    return h;
  } catch (const nlohmann::json::exception& e) {
    throw ServiceError(std::string("malformed scorer handshake: ") + e.what());
  }
}

struct ExternalScorerOptions {
  std::string name;  // overrides the handshake name when set
  std::chrono::milliseconds timeout{60000};
  std::size_t max_batch = 64;
  std::size_t max_in_flight = 4;  // http only; stdio is always 1
};

// ---------------------------------------------------------------- subprocess

// Runs `/bin/sh -c command`. Requests and responses strictly alternate over
// the child's stdin/stdout; one batch is in flight at a time.
class SubprocessScorer : public Scorer {
 public:
  SubprocessScorer(const std::string& command, ExternalScorerOptions opt = {}) : opt_(std::move(opt)) {
    int to_child[2];
    int from_child[2];
    if (pipe(to_child) != 0 || pipe(from_child) != 0) throw ServiceError("pipe() failed: " + std::string(std::strerror(errno)));
    pid_ = fork();
    if (pid_ < 0) throw ServiceError("fork() failed: " + std::string(std::strerror(errno)));
    if (pid_ == 0) {
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    write_fd_ = to_child[1];
    read_fd_ = from_child[0];
    // A child that exits early must surface as an error, not SIGPIPE.
    signal(SIGPIPE, SIG_IGN);
    const auto hello = parse_handshake(read_line());
    spec_ = {opt_.name.empty() ? hello.name : opt_.name, hello.kind, ScorerTransport::subprocess};
  }

  SubprocessScorer(const SubprocessScorer&) = delete;
  SubprocessScorer& operator=(const SubprocessScorer&) = delete;

  ~SubprocessScorer() override {
    if (write_fd_ >= 0) close(write_fd_);
    if (read_fd_ >= 0) close(read_fd_);
    if (pid_ > 0) {
      for (int i = 0; i < 50; ++i) {
        if (waitpid(pid_, nullptr, WNOHANG) == pid_) return;
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
      }
      kill(pid_, SIGKILL);
      waitpid(pid_, nullptr, 0);
    }
  }

  const ScorerSpec& spec() const override { return spec_; }
  std::size_t max_batch() const override { return opt_.max_batch; }

  std::vector<double> score_batch(std::span<const ScoreItem> items) override {
    std::lock_guard lock(mu_);
    write_line(scorer_request(spec_.kind, items).dump());
    return parse_scorer_response(read_line(), items.size(), spec_.name);
  }

 private:
  void write_line(const std::string& line) {
    std::string data = line + "\n";
    std::size_t off = 0;
    while (off < data.size()) {
      const auto n = ::write(write_fd_, data.data() + off, data.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ServiceError("scorer process closed its input: " + std::string(std::strerror(errno)));
      }
      off += static_cast<std::size_t>(n);
    }
  }

  std::string read_line() {
    const auto deadline = std::chrono::steady_clock::now() + opt_.timeout;
    for (;;) {
      if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) throw ServiceError("scorer timed out");
      pollfd pfd{read_fd_, POLLIN, 0};
      const int rc = poll(&pfd, 1, static_cast<int>(left.count()));
      if (rc < 0) {
        if (errno == EINTR) continue;
        throw ServiceError("poll() failed: " + std::string(std::strerror(errno)));
      }
      if (rc == 0) throw ServiceError("scorer timed out");
      char chunk[4096];
      const auto n = ::read(read_fd_, chunk, sizeof chunk);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) throw ServiceError("scorer process exited");
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  ExternalScorerOptions opt_;
  ScorerSpec spec_;
  pid_t pid_ = -1;
  int write_fd_ = -1;
  int read_fd_ = -1;
  std::string buffer_;
  std::mutex mu_;
};

// ---------------------------------------------------------------- http scorer

// GET {base}/hello for the handshake, POST {base}/score for batches.
class HttpScorer : public Scorer {
 public:
  HttpScorer(const std::string& base_url, ExternalScorerOptions opt = {})
      : opt_(std::move(opt)), url_(parse_url(base_url)), in_flight_(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, opt_.max_in_flight))) {
    if (url_.path.back() == '/') url_.path.pop_back();
    auto cli = client();
    auto res = cli.Get(url_.path + "/hello");
    if (!res) throw ServiceError("scorer at '" + base_url + "' unreachable: " + httplib::to_string(res.error()));
    if (res->status != 200) throw ServiceError("scorer handshake failed with HTTP " + std::to_string(res->status));
    const auto hello = parse_handshake(res->body);
    spec_ = {opt_.name.empty() ? hello.name : opt_.name, hello.kind, ScorerTransport::http};
  }

  const ScorerSpec& spec() const override { return spec_; }
  std::size_t max_batch() const override { return opt_.max_batch; }

  std::vector<double> score_batch(std::span<const ScoreItem> items) override {
    in_flight_.acquire();
    struct Release {
      std::counting_semaphore<1024>& s;
      ~Release() { s.release(); }
    } release{in_flight_};
    auto cli = client();
    auto res = cli.Post(url_.path + "/score", scorer_request(spec_.kind, items).dump(), "application/json");
    if (!res) throw ServiceError("scorer '" + spec_.name + "' unreachable: " + httplib::to_string(res.error()));
    if (res->status != 200) throw ServiceError("scorer '" + spec_.name + "' returned HTTP " + std::to_string(res->status));
    return parse_scorer_response(res->body, items.size(), spec_.name);
  }

 private:
  httplib::Client client() const {
    httplib::Client cli(url_.origin);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(opt_.timeout).count();
    cli.set_read_timeout(static_cast<time_t>(std::max<long long>(1, secs)), 0);
    cli.set_connection_timeout(10, 0);
    return cli;
  }

  ExternalScorerOptions opt_;
  Url url_;
  ScorerSpec spec_;
  std::counting_semaphore<1024> in_flight_;
};

// "bleu", "bleu-smoothed", "toy-parser", or "ext:<command>" / "ext:<http url>".
inline std::unique_ptr<Scorer> make_scorer(const std::string& metric, ExternalScorerOptions opt = {}) {
  if (metric == "bleu") return std::make_unique<BleuScorer>();
  if (metric == "bleu-smoothed") return std::make_unique<BleuScorer>(4, BleuSmoothing::epsilon, "bleu-smoothed");
  if (metric == "toy-parser") return std::make_unique<ToyParserScorer>();
  if (metric.starts_with("ext:")) {
    const std::string target = metric.substr(4);
    if (target.empty()) throw ConfigError("ext: scorer needs a command or URL");
    if (target.starts_with("http://") || target.starts_with("https://")) return std::make_unique<HttpScorer>(target, opt);
    return std::make_unique<SubprocessScorer>(target, opt);
  }
  throw ConfigError("unknown metric '" + metric + "' (expected bleu, bleu-smoothed, toy-parser or ext:<cmd-or-url>)");
}

// ---------------------------------------------------------------- HTTP generator client

struct RetryPolicy {
  int max_retries = 5;
  std::chrono::milliseconds initial_backoff{500};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{30000};
};

// POSTs {prompt, temperature, max_tokens, n} and reads
// {choices: [{text, token_logprobs}]}. OpenAI-style
// choices[].logprobs.token_logprobs is accepted too. Connection failures,
// HTTP 429 and 5xx are retried with exponential backoff; other statuses fail
// immediately.
class HttpGenerationClient : public GenerationClient {
 public:
  HttpGenerationClient(const std::string& endpoint, std::string api_token = {}, RetryPolicy retry = {},
                       std::string model = {})
      : url_(parse_url(endpoint)), token_(std::move(api_token)), retry_(retry), model_(std::move(model)) {}

  std::vector<Completion> complete(const GenerationRequest& request) override {
    nlohmann::json body{{"prompt", request.prompt},
                        {"temperature", request.temperature},
                        {"max_tokens", request.max_tokens},
                        {"n", request.n}};
    if (!model_.empty()) body["model"] = model_;
    const std::string payload = body.dump();
    auto backoff = retry_.initial_backoff;
    for (int attempt = 0;; ++attempt) {
      httplib::Client cli(url_.origin);
      cli.set_read_timeout(120, 0);
      cli.set_connection_timeout(10, 0);
      httplib::Headers headers;
      if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
      auto res = cli.Post(url_.path, headers, payload, "application/json");
      std::string failure;
      if (!res) {
        failure = "connection failed: " + httplib::to_string(res.error());
      } else if (res->status == 200) {
        return parse(res->body);
      } else if (res->status == 429 || res->status >= 500) {
        failure = "HTTP " + std::to_string(res->status);
      } else {
        throw ServiceError("generator endpoint returned HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
      }
      if (attempt >= retry_.max_retries)
        throw ServiceError("generator endpoint failed after " + std::to_string(attempt + 1) + " attempts: " + failure);
      std::this_thread::sleep_for(backoff);
      backoff = std::min(retry_.max_backoff, std::chrono::milliseconds(static_cast<long long>(
                                                 static_cast<double>(backoff.count()) * retry_.multiplier)));
    }
  }

 private:
  static std::vector<Completion> parse(const std::string& body) {
    try {
      const auto j = nlohmann::json::parse(body);
      std::vector<Completion> out;
      for (const auto& c : j.at("choices")) {
        Completion comp;
        comp.text = c.at("text").get<std::string>();
        if (c.contains("token_logprobs")) {
          comp.token_logprobs = c["token_logprobs"].get<std::vector<double>>();
        } else if (c.contains("logprobs") && c["logprobs"].is_object() && c["logprobs"].contains("token_logprobs")) {
          for (const auto& v : c["logprobs"]["token_logprobs"])
            if (v.is_number()) comp.token_logprobs.push_back(v.get<double>());
        }
        out.push_back(std::move(comp));
      }
      return out;
    } catch (const nlohmann::json::exception& e) {
      throw ServiceError(std::string("malformed generator response: ") + e.what());
    }
  }

  Url url_;
  std::string token_;
  RetryPolicy retry_;
  std::string model_;
};

}  // namespace lfrerank
