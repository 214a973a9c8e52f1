#pragma once

// Minimal CSV reading: comma separated, optional double-quoted fields with
// "" escapes, no embedded newlines. Blank lines are ignored.

#include <charconv>
#include <cstddef>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "pktimg/error.hpp"

namespace pktimg {

struct CsvRow {
  std::size_t line = 0;  // 1-based line number in the source
  std::vector<std::string> cells;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string> split_csv_line(std::string_view line, std::size_t line_no) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"' && trim(cur).empty()) {
      cur.clear();
      quoted = was_quoted = true;
    } else if (ch == ',') {
      cells.emplace_back(was_quoted ? cur : std::string(trim(cur)));
      cur.clear();
      was_quoted = false;
    } else {
      cur += ch;
    }
  }
  if (quoted) throw ConfigError("line " + std::to_string(line_no) + ": unterminated quote");
  cells.emplace_back(was_quoted ? cur : std::string(trim(cur)));
  return cells;
}

}  // namespace detail

inline std::vector<CsvRow> parse_csv(const std::string& text) {
  std::vector<CsvRow> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    rows.push_back(CsvRow{line_no, detail::split_csv_line(line, line_no)});
  }
  return rows;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = detail::trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

}  // namespace pktimg
