#include "weightflow/core.hpp"

#include <charconv>
#include <cstdio>

namespace weightflow {

namespace {

std::string describe(const std::string& what, const std::string& source, std::size_t line) {
  if (source.empty()) return what;
  if (line == 0) return source + ": " + what;
  return source + ":" + std::to_string(line) + ": " + what;
}

bool parse_int(std::string_view s, int& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

}  // namespace

DataError::DataError(const std::string& what, std::string source, std::size_t line)
    : Error(describe(what, source, line)), source_(std::move(source)), line_(line) {}

Date::Date(std::chrono::year_month_day ymd)
    : days_(static_cast<std::int32_t>(std::chrono::sys_days(ymd).time_since_epoch().count())) {}

Date Date::parse(std::string_view iso) {
  int y = 0, m = 0, d = 0;
  if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-' || !parse_int(iso.substr(0, 4), y) ||
      !parse_int(iso.substr(5, 2), m) || !parse_int(iso.substr(8, 2), d)) {
    throw DataError("invalid date '" + std::string(iso) + "' (expected YYYY-MM-DD)");
  }
  std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                                  std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) throw DataError("invalid calendar date '" + std::string(iso) + "'");
  return Date(ymd);
}

std::chrono::year_month_day Date::ymd() const {
  return std::chrono::year_month_day{std::chrono::sys_days{std::chrono::days{days_}}};
}

std::string Date::iso() const {
  const auto ymd = this->ymd();
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

std::int32_t Date::iso_week_key() const {
  // Monday-based weeks: shift so that 1970-01-05 (a Monday) starts a bucket.
  const std::int32_t shifted = days_ - 4;
  return shifted >= 0 ? shifted / 7 : -((-shifted + 6) / 7);
}

std::int32_t Date::month_key() const {
  const auto ymd = this->ymd();
  return static_cast<int>(ymd.year()) * 12 + static_cast<int>(static_cast<unsigned>(ymd.month())) - 1;
}

}  // namespace weightflow
