#pragma once

// Minimal CSV reading shared by the loaders. Fields are comma separated; double
// quotes may wrap a field containing commas.

#include "weightflow/core.hpp"

#include <charconv>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace weightflow::csv {

std::vector<std::string> split_line(std::string_view line);

struct Table {
  std::string source;
  std::vector<std::string> header;
  /// Rows with their 1-based line numbers in the file.
  std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;

  /// Column position by name; throws DataError when required and absent.
  std::optional<std::size_t> column(std::string_view name, bool required = true) const;
};

Table read(const std::filesystem::path& path);
Table parse(std::string_view text, std::string source);

inline std::optional<double> parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace weightflow::csv
