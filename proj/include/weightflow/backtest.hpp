#pragma once

#include "weightflow/pipeline.hpp"

#include <exception>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace weightflow {

/// When a target decided on row t is traded.
///  - kClose: at the close of t; the new weights earn r_{t+1}.
///  - kNextOpen: at the open of t+1; the old weights earn the overnight gap.
enum class FillTiming { kClose, kNextOpen };

FillTiming parse_fill_timing(const std::string& name);
const char* to_string(FillTiming timing);

struct BacktestOptions {
  /// Proportional cost per side (0.001 = 10 bps).
  double cost_rate = 0.001;
  FillTiming fill_timing = FillTiming::kClose;
  double initial_equity = 1.0;
  /// Last panel row of the horizon; defaults to PipelineSpec::end or the panel end.
  std::optional<Index> last_row;
};

/// Daily accounting of one backtest. Row k describes the close of dates[k]:
/// equity after that day's trades and returns, the weights then held, and
/// the traded fraction and fee of any rebalance executed that day.
struct EquityLedger {
  std::string spec_id;
  double initial_equity = 1.0;
  std::vector<Date> dates;
  std::vector<double> equity;
  /// Same weights with no costs charged.
  std::vector<double> gross_equity;
  std::vector<double> turnover;
  std::vector<double> cost;
  std::vector<char> rebalanced;
  std::vector<std::map<std::string, double>> weights;
  std::vector<std::string> notes;
  /// Set when the run stopped early (a loss of 100% or more).
  bool halted = false;

  std::size_t size() const { return dates.size(); }
};

/// One day of drift. Missing returns count as zero (the asset is frozen at
/// its last price) and are reported through `frozen`.
/// Throws RuntimeError when the portfolio return is <= -1.
std::map<std::string, double> drift_weights(const std::map<std::string, double>& previous,
                                            const std::map<std::string, double>& returns,
                                            std::vector<std::string>* frozen = nullptr);

/// ½Σ|w - h| over assets plus ½|cash_w - cash_h|.
double one_sided_turnover(const std::map<std::string, double>& target, const std::map<std::string, double>& held);
/// Σ|w - h| over assets: the traded notional as a fraction of equity.
double traded_fraction(const std::map<std::string, double>& target, const std::map<std::string, double>& held);

EquityLedger run_backtest(const WeightTrajectory& trajectory, const MarketPanel& panel, const BacktestOptions& options);

/// Runs the pipeline of `spec` and backtests it at `spec.cost_rate`.
EquityLedger run_backtest(const PipelineSpec& spec, const MarketPanel& panel, FillTiming timing = FillTiming::kClose,
                          double initial_equity = 1.0);

struct AblationResult {
  std::string spec_id;
  std::optional<EquityLedger> ledger;
  std::string error;
  std::exception_ptr exception;
};

/// Backtests every spec on the same panel, in parallel. A failing spec is
/// recorded with its error and the rest still run. Results keep input order.
std::vector<AblationResult> ablation_grid(const std::vector<PipelineSpec>& specs, const MarketPanel& panel,
                                          FillTiming timing = FillTiming::kClose, double initial_equity = 1.0);

/// `date,equity,turnover,cost`
void write_ledger_csv(const EquityLedger& ledger, std::ostream& out);
/// `date,equity` for the cost-free curve.
void write_gross_csv(const EquityLedger& ledger, std::ostream& out);

}  // namespace weightflow
