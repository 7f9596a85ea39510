#pragma once

#include "weightflow/market_data.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

namespace wf_test {

using namespace weightflow;

/// `n` consecutive weekdays starting on Monday 2021-01-04.
inline std::vector<Date> weekdays(Index n) {
  std::vector<Date> out;
  Date d = Date::parse("2021-01-04");
  while (static_cast<Index>(out.size()) < n) {
    const unsigned wd = std::chrono::weekday(std::chrono::sys_days(d.ymd())).c_encoding();
    if (wd != 0 && wd != 6) out.push_back(d);
    d = Date(d.days() + 1);
  }
  return out;
}

/// Panel from a [date x asset] close matrix; symbols default to A, B, C, ...
inline MarketPanel make_panel(const MatrixXd& close, std::vector<std::string> symbols = {},
                              const MatrixXd& open = MatrixXd()) {
  MarketPanel p;
  if (symbols.empty()) {
    for (Index j = 0; j < close.cols(); ++j) symbols.push_back(std::string(1, static_cast<char>('A' + j)));
  }
  p.calendar = TradingCalendar(weekdays(close.rows()));
  p.assets = std::move(symbols);
  p.close = close;
  p.open = open;
  p.returns = compute_returns(close);
  p.validate();
  return p;
}

/// Geometric random walks with iid normal daily returns.
inline MatrixXd random_prices(std::mt19937_64& rng, Index rows, Index cols, double vol = 0.01,
                              double drift = 0.0003) {
  std::normal_distribution<double> z(drift, vol);
  MatrixXd p(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    double x = 100.0;
    for (Index t = 0; t < rows; ++t) {
      if (t > 0) x *= 1.0 + z(rng);
      p(t, j) = x;
    }
  }
  return p;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("weightflow_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream(path, std::ios::binary) << text;
}

}  // namespace wf_test
