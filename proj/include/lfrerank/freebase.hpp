#pragma once

// Freebase identifier shortening for CFQ-style SPARQL logical forms.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lfrerank/core.hpp"
#include "lfrerank/error.hpp"

namespace lfrerank {

class IdentifierMap {
 public:
  IdentifierMap() = default;

  explicit IdentifierMap(std::vector<std::pair<std::string, std::string>> entries) {
    for (auto& [key, value] : entries) add(std::move(key), std::move(value));
  }

  void add(std::string key, std::string value) {
    if (key.empty()) throw DataError("identifier map key must be non-empty");
    auto pos = std::find_if(entries_.begin(), entries_.end(),
                            [&](const auto& e) { return e.first.size() < key.size(); });
    entries_.insert(pos, {std::move(key), std::move(value)});
  }

  // Tab-separated "key<TAB>value" lines; '#' starts a comment line.
  static IdentifierMap load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open identifier map '" + path.string() + "'");
    IdentifierMap map;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty() || line[0] == '#') continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos)
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected key<TAB>value");
      map.add(line.substr(0, tab), std::string(trim(std::string_view(line).substr(tab + 1))));
    }
    return map;
  }

  std::size_t size() const { return entries_.size(); }

  // Scans left to right; at each position the longest matching key wins.
  // Unknown text passes through unchanged.
  std::string apply(std::string_view lf) const {
    std::string out;
    out.reserve(lf.size());
    std::size_t i = 0;
    while (i < lf.size()) {
      const auto* match = longest_match(lf.substr(i));
      if (match) {
        out += match->second;
        i += match->first.size();
      } else {
        out += lf[i++];
      }
    }
    return out;
  }

 private:
  const std::pair<std::string, std::string>* longest_match(std::string_view rest) const {
    // entries_ is sorted by key length, longest first.
    for (const auto& e : entries_)
      if (rest.starts_with(e.first)) return &e;
    return nullptr;
  }

  std::vector<std::pair<std::string, std::string>> entries_;
};

inline std::string map_freebase_ids(std::string_view lf, const IdentifierMap& table) { return table.apply(lf); }

}  // namespace lfrerank
