#pragma once

// Terminal labeling session for metric-alignment evaluation sets.

#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lfrerank/core.hpp"
#include "lfrerank/io.hpp"

namespace lfrerank {

inline constexpr const char* kAnnotationCriteria =
    "Label each candidate 1 (correct) or 0 (incorrect):\n"
    "  (i)   omits a piece of information in the reference -> 0\n"
    "  (ii)  inserts or substitutes information not in the reference -> 0\n"
    "  (iii) markedly less fluent than the other candidates -> 0\n"
    "  (iv)  contains LF-only terms (e.g. ?x0) that should not appear -> 0\n"
    "  (v)   otherwise -> 1\n";

struct AnnotationSummary {
  std::vector<LabeledSet> labeled;  // labeled in this session
  std::size_t skipped = 0;          // already present in the store
  bool interrupted = false;         // quit or end of input before the last set
};

namespace detail {

inline std::optional<std::vector<int>> parse_label_line(const std::string& line, std::size_t n) {
  std::istringstream in(line);
  std::vector<int> labels;
  std::string tok;
  while (in >> tok) {
    if (tok != "0" && tok != "1") return std::nullopt;
    labels.push_back(tok == "1" ? 1 : 0);
  }
  if (labels.size() != n) return std::nullopt;
  return labels;
}

}  // namespace detail

// Shows each unlabeled set (LF, reference, numbered candidates) and reads
// one line of n space-separated 0/1 labels. Malformed lines are re-prompted;
// "q" or end of input ends the session. Each completed set is appended to
// `store` immediately, and sets already in the store are skipped.
inline AnnotationSummary annotate(const std::vector<CandidateSet>& sets, std::istream& in, std::ostream& out,
                                  const std::filesystem::path& store) {
  std::set<std::string> done;
  if (std::filesystem::exists(store))
    for (const auto& l : load_labels(store)) done.insert(l.lf_id);

  if (store.has_parent_path()) std::filesystem::create_directories(store.parent_path());
  std::ofstream sink(store, std::ios::app);
  if (!sink) throw DataError("cannot append to label store '" + store.string() + "'");

  AnnotationSummary summary;
  out << kAnnotationCriteria;
  std::size_t position = 0;
  for (const auto& set : sets) {
    ++position;
    if (done.count(set.lf_id())) {
      ++summary.skipped;
      continue;
    }
    out << "\n[" << position << "/" << sets.size() << "] " << set.lf_id() << "\n";
    out << "LF:        " << set.lf() << "\n";
    out << "Reference: " << set.require_reference() << "\n";
    for (std::size_t i = 0; i < set.size(); ++i) out << "  " << (i + 1) << ". " << set[i].text << "\n";
    for (;;) {
      out << "labels (" << set.size() << " values of 0/1, q to quit)> " << std::flush;
      std::string line;
      if (!std::getline(in, line) || trim(line) == "q") {
        summary.interrupted = true;
        return summary;
      }
      auto labels = detail::parse_label_line(line, set.size());
      if (!labels) {
        out << "expected exactly " << set.size() << " labels, each 0 or 1\n";
        continue;
      }
      LabeledSet l{set.lf_id(), std::move(*labels)};
      detail::write_line(sink, to_json(l));
      sink.flush();
      if (!sink) throw DataError("write to label store '" + store.string() + "' failed");
      done.insert(l.lf_id);
      summary.labeled.push_back(std::move(l));
      break;
    }
  }
  return summary;
}

}  // namespace lfrerank
