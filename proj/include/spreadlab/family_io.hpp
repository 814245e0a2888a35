#pragma once

/**
 * @file family_io.hpp
 * @brief Text format for weighted set families.
 *
 *   # comment
 *   N=6
 *   0 1
 *   2 3 w=0.25
 *   - w=0.5        (the empty set; a line holding only "w=..." also works)
 *
 * One set per line, elements as space-separated decimal integers in 0..N-1,
 * optional trailing w=<weight>. Either every set line carries a weight or
 * none does; without weights the measure is uniform. Blank lines and text
 * after '#' are ignored. The header N=<int> must precede the first set.
 */

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "spreadlab/measure.hpp"
#include "spreadlab/setcore.hpp"

namespace spreadlab {

namespace detail {
inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(std::string_view token, int line_no, const char* what) {
  T value{};
  const auto* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ArgumentError("line " + std::to_string(line_no) + ": bad " + what + " '" + std::string(token) + "'");
  }
  return value;
}
}  // namespace detail

inline DiscreteMeasure parse_family(std::string_view text) {
  std::optional<Universe> universe;
  std::vector<std::pair<SubsetMask, double>> items;
  int weighted = 0;
  int unweighted = 0;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;

    if (line.starts_with("N=")) {
      if (universe) throw ArgumentError("line " + std::to_string(line_no) + ": duplicate N= header");
      universe = Universe(detail::parse_number<int>(detail::trim(line.substr(2)), line_no, "universe size"));
      continue;
    }
    if (!universe) throw ArgumentError("line " + std::to_string(line_no) + ": set before N= header");

    SubsetMask set(*universe);
    std::optional<double> weight;
    std::istringstream tokens{std::string(line)};
    std::string tok;
    while (tokens >> tok) {
      if (weight) throw ArgumentError("line " + std::to_string(line_no) + ": tokens after w=");
      if (tok.starts_with("w=")) {
        weight = detail::parse_number<double>(std::string_view(tok).substr(2), line_no, "weight");
      } else if (tok == "-") {
        continue;
      } else {
        const int e = detail::parse_number<int>(tok, line_no, "element");
        if (e < 0 || e >= universe->size()) {
          throw ArgumentError("line " + std::to_string(line_no) + ": element " + tok + " outside 0.." +
                              std::to_string(universe->size() - 1));
        }
        set.insert(e);
      }
    }
    (weight ? weighted : unweighted)++;
    items.emplace_back(set, weight.value_or(1.0));
  }
  if (!universe) throw ArgumentError("family file has no N= header");
  if (items.empty()) throw ArgumentError("family file has no sets");
  if (weighted > 0 && unweighted > 0) throw ArgumentError("family file mixes weighted and unweighted sets");
  return DiscreteMeasure(*universe, items);
}

inline DiscreteMeasure read_family_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open family file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_family(buf.str());
}

/// Serializes with explicit weights (17 significant digits).
inline std::string format_family(const DiscreteMeasure& m) {
  std::string out = "N=" + std::to_string(m.universe().size()) + "\n";
  char wbuf[64];
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto elems = m.support()[i].elements();
    if (elems.empty()) out += "-";
    for (std::size_t j = 0; j < elems.size(); ++j) {
      if (j > 0) out += ' ';
      out += std::to_string(elems[j]);
    }
    std::snprintf(wbuf, sizeof wbuf, " w=%.17g\n", m.weights()[i]);
    out += wbuf;
  }
  return out;
}

}  // namespace spreadlab
