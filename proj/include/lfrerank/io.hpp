#pragma once

// Line-delimited JSON persistence for every record type.
//
//   dataset:    {"id", "lf", "reference"?, "split"}
//   candidates: {"lf_id", "lf", "reference"?, "truncated"?, "candidates": [{"text", "raw_count", "gen_logprob"}]}
//   labels:     {"lf_id", "labels": [0|1, ...]}
//   scores:     {"lf_id", "metric", "scores": [real, ...]}

#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "lfrerank/core.hpp"

namespace lfrerank {

using json = nlohmann::json;

namespace detail {

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "' for reading");
  return in;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  return out;
}

// Calls fn(record, line_number) for each non-blank line. Parse and field
// errors are rethrown with the line number attached.
inline void for_each_record(std::istream& in, const std::string& source,
                            const std::function<void(const json&)>& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const json record = json::parse(line);
      if (!record.is_object()) throw DataError("record is not an object");
      fn(record);
    } catch (const json::exception& e) {
      throw DataError(source + ":" + std::to_string(line_no) + ": malformed record: " + e.what());
    } catch (const DataError& e) {
      throw DataError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

inline const json& field(const json& record, const char* name) {
  auto it = record.find(name);
  if (it == record.end()) throw DataError(std::string("missing required field '") + name + "'");
  return *it;
}

inline std::string string_field(const json& record, const char* name) {
  const json& v = field(record, name);
  if (!v.is_string()) throw DataError(std::string("field '") + name + "' must be a string");
  return v.get<std::string>();
}

inline std::optional<std::string> optional_string(const json& record, const char* name) {
  auto it = record.find(name);
  if (it == record.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw DataError(std::string("field '") + name + "' must be a string");
  return it->get<std::string>();
}

inline void write_line(std::ostream& out, const json& record) {
  out << record.dump(-1, ' ', false, json::error_handler_t::strict) << '\n';
}

}  // namespace detail

// ---------------------------------------------------------------- dataset

inline json to_json(const LogicalForm& lf) {
  json j{{"id", lf.id}, {"lf", lf.lf}};
  if (lf.reference) j["reference"] = *lf.reference;
  j["split"] = std::string(to_string(lf.split));
  return j;
}

inline LogicalForm logical_form_from_json(const json& j) {
  LogicalForm lf;
  lf.id = detail::string_field(j, "id");
  lf.lf = detail::string_field(j, "lf");
  lf.reference = detail::optional_string(j, "reference");
  const std::string split = detail::string_field(j, "split");
  auto parsed = parse_split(split);
  if (!parsed) throw DataError("invalid split '" + split + "' (expected train, dev or test)");
  lf.split = *parsed;
  if (lf.id.empty()) throw DataError("empty id");
  if (trim(lf.lf).empty()) throw DataError("empty lf for id '" + lf.id + "'");
  return lf;
}

// Reads all records, rejecting duplicate ids across the whole stream, and
// keeps those matching `split` (all records when unset).
inline std::vector<LogicalForm> read_dataset(std::istream& in, std::optional<Split> split,
                                             const std::string& source = "<dataset>") {
  std::vector<LogicalForm> out;
  std::unordered_set<std::string> ids;
  detail::for_each_record(in, source, [&](const json& j) {
    LogicalForm lf = logical_form_from_json(j);
    if (!ids.insert(lf.id).second) throw DataError("duplicate id '" + lf.id + "'");
    if (!split || lf.split == *split) out.push_back(std::move(lf));
  });
  return out;
}

inline std::vector<LogicalForm> load_dataset(const std::filesystem::path& path,
                                             std::optional<Split> split = std::nullopt) {
  auto in = detail::open_in(path);
  return read_dataset(in, split, path.string());
}

inline void save_dataset(const std::vector<LogicalForm>& lfs, const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  for (const auto& lf : lfs) detail::write_line(out, to_json(lf));
}

// ---------------------------------------------------------------- candidates

inline json to_json(const CandidateSet& set) {
  json cands = json::array();
  for (const auto& c : set.candidates())
    cands.push_back({{"text", c.text}, {"raw_count", c.raw_count}, {"gen_logprob", c.gen_logprob}});
  json j{{"lf_id", set.lf_id()}, {"lf", set.lf()}};
  if (set.reference()) j["reference"] = *set.reference();
  if (set.truncated()) j["truncated"] = true;
  j["candidates"] = std::move(cands);
  return j;
}

inline CandidateSet candidate_set_from_json(const json& j) {
  const std::string lf_id = detail::string_field(j, "lf_id");
  std::string lf = j.contains("lf") ? detail::string_field(j, "lf") : std::string{};
  const json& arr = detail::field(j, "candidates");
  if (!arr.is_array()) throw DataError("field 'candidates' must be an array");
  std::vector<Candidate> cands;
  for (const json& c : arr) {
    Candidate cand;
    cand.text = detail::string_field(c, "text");
    const json& count = detail::field(c, "raw_count");
    if (!count.is_number_integer()) throw DataError("raw_count must be an integer");
    cand.raw_count = count.get<std::int64_t>();
    const json& lp = detail::field(c, "gen_logprob");
    if (!lp.is_number()) throw DataError("gen_logprob must be a number");
    cand.gen_logprob = lp.get<double>();
    cands.push_back(std::move(cand));
  }
  const bool truncated = j.value("truncated", false);
  return CandidateSet(lf_id, std::move(cands), std::move(lf), detail::optional_string(j, "reference"),
                      truncated);
}

inline void write_candidates(const std::vector<CandidateSet>& sets, std::ostream& out) {
  for (const auto& s : sets) detail::write_line(out, to_json(s));
}

inline std::vector<CandidateSet> read_candidates(std::istream& in, const std::string& source = "<candidates>") {
  std::vector<CandidateSet> out;
  detail::for_each_record(in, source, [&](const json& j) { out.push_back(candidate_set_from_json(j)); });
  return out;
}

inline void save_candidates(const std::vector<CandidateSet>& sets, const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  write_candidates(sets, out);
  if (!out) throw DataError("write to '" + path.string() + "' failed");
}

inline std::vector<CandidateSet> load_candidates(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  return read_candidates(in, path.string());
}

// ---------------------------------------------------------------- labels

inline json to_json(const LabeledSet& l) { return json{{"lf_id", l.lf_id}, {"labels", l.labels}}; }

inline LabeledSet labeled_set_from_json(const json& j) {
  LabeledSet l;
  l.lf_id = detail::string_field(j, "lf_id");
  const json& arr = detail::field(j, "labels");
  if (!arr.is_array()) throw DataError("field 'labels' must be an array");
  for (const json& v : arr) {
    if (!v.is_number_integer()) throw DataError("labels must be integers");
    const int x = v.get<int>();
    if (x != 0 && x != 1) throw DataError("labels must be 0 or 1");
    l.labels.push_back(x);
  }
  return l;
}

inline std::vector<LabeledSet> load_labels(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  std::vector<LabeledSet> out;
  detail::for_each_record(in, path.string(), [&](const json& j) { out.push_back(labeled_set_from_json(j)); });
  return out;
}

inline void save_labels(const std::vector<LabeledSet>& labels, const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  for (const auto& l : labels) detail::write_line(out, to_json(l));
}

// ---------------------------------------------------------------- scores

// One line per (lf_id, metric). The combined vector is written under the
// metric name "combined".
inline void write_scores(const std::vector<QualityTable>& tables, std::ostream& out) {
  for (const auto& t : tables) {
    for (const auto& [metric, scores] : t.per_metric)
      detail::write_line(out, {{"lf_id", t.lf_id}, {"metric", metric}, {"scores", scores}});
    if (t.combined) detail::write_line(out, {{"lf_id", t.lf_id}, {"metric", "combined"}, {"scores", *t.combined}});
  }
}

inline void save_scores(const std::vector<QualityTable>& tables, const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  write_scores(tables, out);
}

// Groups score lines by lf_id, in first-seen order.
inline std::vector<QualityTable> read_scores(std::istream& in, const std::string& source = "<scores>") {
  std::vector<QualityTable> out;
  std::map<std::string, std::size_t> index;
  detail::for_each_record(in, source, [&](const json& j) {
    const std::string lf_id = detail::string_field(j, "lf_id");
    const std::string metric = detail::string_field(j, "metric");
    const json& arr = detail::field(j, "scores");
    if (!arr.is_array()) throw DataError("field 'scores' must be an array");
    std::vector<double> scores;
    for (const json& v : arr) {
      if (!v.is_number()) throw DataError("scores must be numbers");
      scores.push_back(v.get<double>());
    }
    auto [it, inserted] = index.try_emplace(lf_id, out.size());
    if (inserted) out.push_back(QualityTable{lf_id, {}, std::nullopt});
    QualityTable& t = out[it->second];
    if (metric == "combined") {
      if (t.combined) throw DataError("duplicate combined scores for '" + lf_id + "'");
      t.combined = std::move(scores);
    } else if (!t.per_metric.emplace(metric, std::move(scores)).second) {
      throw DataError("duplicate metric '" + metric + "' for '" + lf_id + "'");
    }
  });
  return out;
}

inline std::vector<QualityTable> load_scores(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  return read_scores(in, path.string());
}

}  // namespace lfrerank
