#pragma once

// Domain data model: logical forms, candidate sets, quality tables, labels.

#include <cctype>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "lfrerank/error.hpp"

namespace lfrerank {

enum class Split { train, dev, test };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "train";
}

inline std::optional<Split> parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "dev") return Split::dev;
  if (s == "test") return Split::test;
  return std::nullopt;
}

inline std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

inline std::string_view trim_right(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline std::string_view trim(std::string_view s) {
  s = trim_right(s);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  return s;
}

struct LogicalForm {
  std::string id;
  std::string lf;
  std::optional<std::string> reference;
  Split split = Split::train;

  const std::string& require_reference() const {
    if (!reference) throw DataError("logical form '" + id + "' has no reference utterance");
    return *reference;
  }

  bool operator==(const LogicalForm&) const = default;
};

struct Candidate {
  std::string text;
  std::int64_t raw_count = 1;
  double gen_logprob = 0.0;

  bool operator==(const Candidate&) const = default;
};

// The n-best list for one LF. Candidate texts are distinct; the constructor
// is the only way in, so every construction path enforces that.
class CandidateSet {
 public:
  CandidateSet() = default;

  CandidateSet(std::string lf_id, std::vector<Candidate> candidates, std::string lf = {},
               std::optional<std::string> reference = std::nullopt, bool truncated = false)
      : lf_id_(std::move(lf_id)),
        lf_(std::move(lf)),
        reference_(std::move(reference)),
        candidates_(std::move(candidates)),
        truncated_(truncated) {
    if (candidates_.empty()) throw DataError("candidate set '" + lf_id_ + "' is empty");
    std::unordered_set<std::string_view> seen;
    for (const auto& c : candidates_) {
      if (c.text.empty()) throw DataError("candidate set '" + lf_id_ + "' has an empty candidate text");
      if (c.raw_count < 1)
        throw DataError("candidate set '" + lf_id_ + "' has raw_count " + std::to_string(c.raw_count) +
                        " for '" + c.text + "'");
      if (!seen.insert(c.text).second)
        throw DataError("candidate set '" + lf_id_ + "' has duplicate candidate '" + c.text + "'");
    }
  }

  const std::string& lf_id() const { return lf_id_; }
  const std::string& lf() const { return lf_; }
  const std::optional<std::string>& reference() const { return reference_; }
  const std::string& require_reference() const {
    if (!reference_) throw DataError("candidate set '" + lf_id_ + "' has no reference utterance");
    return *reference_;
  }
  const std::vector<Candidate>& candidates() const { return candidates_; }
  const Candidate& operator[](std::size_t i) const { return candidates_[i]; }
  std::size_t size() const { return candidates_.size(); }
  bool truncated() const { return truncated_; }

  std::vector<std::string> texts() const {
    std::vector<std::string> out;
    out.reserve(candidates_.size());
    for (const auto& c : candidates_) out.push_back(c.text);
    return out;
  }

  CandidateSet subset(const std::vector<std::size_t>& indices) const {
    std::vector<Candidate> picked;
    picked.reserve(indices.size());
    for (auto i : indices) picked.push_back(candidates_.at(i));
    return CandidateSet(lf_id_, std::move(picked), lf_, reference_, truncated_);
  }

  bool operator==(const CandidateSet&) const = default;

 private:
  std::string lf_id_;
  std::string lf_;
  std::optional<std::string> reference_;
  std::vector<Candidate> candidates_;
  bool truncated_ = false;
};

struct QualityTable {
  std::string lf_id;
  std::map<std::string, std::vector<double>> per_metric;
  std::optional<std::vector<double>> combined;

  void validate(std::size_t n) const {
    for (const auto& [name, scores] : per_metric) {
      if (scores.size() != n)
        throw DataError("quality table '" + lf_id + "': metric '" + name + "' has " +
                        std::to_string(scores.size()) + " scores for " + std::to_string(n) +
                        " candidates");
    }
    if (combined && combined->size() != n)
      throw DataError("quality table '" + lf_id + "': combined vector has wrong length");
  }

  const std::vector<double>& metric(const std::string& name) const {
    auto it = per_metric.find(name);
    if (it == per_metric.end()) throw DataError("quality table '" + lf_id + "' lacks metric '" + name + "'");
    return it->second;
  }

  const std::vector<double>& require_combined() const {
    if (!combined) throw DataError("quality table '" + lf_id + "' has no combined quality");
    return *combined;
  }

  bool operator==(const QualityTable&) const = default;
};

struct LabeledSet {
  std::string lf_id;
  std::vector<int> labels;

  void validate(std::size_t n) const {
    if (labels.size() != n)
      throw DataError("labels for '" + lf_id + "' have length " + std::to_string(labels.size()) +
                      ", expected " + std::to_string(n));
    for (int l : labels)
      if (l != 0 && l != 1) throw DataError("labels for '" + lf_id + "' must be 0 or 1");
  }

  bool operator==(const LabeledSet&) const = default;
};

}  // namespace lfrerank
