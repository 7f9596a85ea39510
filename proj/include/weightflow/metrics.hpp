#pragma once

#include "weightflow/backtest.hpp"

#include <nlohmann/json.hpp>

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace weightflow {

/// Performance summary of one equity curve. Ratios whose denominator is zero
/// are left empty rather than reported as infinities.
struct MetricsReport {
  std::string strategy;
  double cumulative_return = 1.0;  ///< P_n / P_0
  double annualized_return = 0.0;
  double annualized_volatility = 0.0;
  std::optional<double> sharpe;
  std::optional<double> sortino;
  std::optional<double> calmar;
  double max_drawdown = 0.0;  ///< <= 0
  Index max_drawdown_duration = 0;  ///< trading days
  std::optional<double> average_turnover;  ///< per rebalance, one-sided
  double win_rate = 0.0;
  Index periods = 0;
};

/// Metrics of an equity series with at least two points. `rf` is annual.
MetricsReport compute_metrics(std::span<const double> equity, double periods_per_year = 252.0, double rf = 0.0);
/// Prepends ledger.initial_equity as P_0 and averages turnover over rebalance days.
MetricsReport compute_metrics(const EquityLedger& ledger, double periods_per_year = 252.0, double rf = 0.0);

/// Worst peak-to-trough loss. `longest` counts rows from a peak to the row that
/// regains it, or to the last row if it never does; zero without any dip.
struct Drawdown {
  double max = 0.0;
  Index longest = 0;
};
Drawdown drawdown(std::span<const double> equity);

/// Column order of the comparison table.
const std::vector<std::string>& metrics_columns();
std::vector<std::string> metrics_row(const MetricsReport& report);

void write_metrics_csv(const std::vector<MetricsReport>& reports, std::ostream& out);
nlohmann::ordered_json to_json(const MetricsReport& report);
MetricsReport metrics_from_json(const nlohmann::json& j);

/// Reads a metrics CSV written by write_metrics_csv.
std::vector<MetricsReport> read_metrics_csv(const std::filesystem::path& path);

}  // namespace weightflow
