#pragma once

#include "weightflow/backtest.hpp"
#include "weightflow/execution/broker.hpp"
#include "weightflow/execution/journal.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace weightflow::execution {

/// Pre-trade limits. Notional and exposure limits are fractions of equity.
struct GuardrailConfig {
  double max_order_notional = 1.0;
  double max_gross_exposure = 1.0;
  /// Oldest usable price, in trading days.
  Index max_price_age = 5;
  double max_symbol_weight = 1.0;
  /// Drawdown from the session peak that liquidates everything.
  double kill_switch_drawdown = 0.5;
  /// Smallest order worth sending, in currency.
  double min_order_notional = 0.0;

  void validate() const;
};

GuardrailConfig parse_guardrail_config(const nlohmann::json& j);
nlohmann::ordered_json to_json(const GuardrailConfig& config);

struct GuardrailEvent {
  std::string rule;
  std::string symbol;
  double requested = 0.0;
  double allowed = 0.0;
};

struct GuardedTarget {
  std::map<std::string, double> weights;
  std::vector<GuardrailEvent> triggers;
  /// Symbols left untouched because their price is too old.
  std::set<std::string> frozen;
  bool kill = false;
};

/// Applies the weight-level guardrails in order: kill switch, per-symbol cap,
/// gross cap, stale prices. `age` holds each symbol's price age in trading
/// days; symbols without an entry count as fresh. `current` are the weights
/// the book holds now, kept for stale symbols.
GuardedTarget guard_target(const std::map<std::string, double>& target, const std::map<std::string, double>& current,
                           const std::map<std::string, Index>& age, double equity, double peak_equity,
                           bool already_killed, const GuardrailConfig& guards);

struct OrderPlan {
  std::vector<Order> orders;
  std::vector<GuardrailEvent> triggers;
};

struct SizingOptions {
  std::uint64_t first_order_id = 1;
  bool integer_shares = false;
  std::set<std::string> skip;
};

/// Orders moving `positions` to `weights` of `equity` at `prices`: sells first,
/// then buys, each group by symbol. Orders at or below the minimum notional
/// are dropped; orders above the notional cap are clipped with a trigger.
OrderPlan size_orders(const std::map<std::string, double>& weights, const Positions& positions, const PriceMap& prices,
                      double equity, const GuardrailConfig& guards, const SizingOptions& options = {});

/// Guardrails plus sizing at a single equity level.
OrderPlan weights_to_orders(const WeightVector& target, const Positions& positions, const PriceMap& prices,
                            double equity, const GuardrailConfig& guards, const SizingOptions& options = {});

struct ReconciliationReport {
  std::string date;
  double tracking_error = 0.0;
  std::map<std::string, double> gaps;  ///< target - realized
  double rejection_rate = 0.0;
  std::uint64_t guardrail_triggers = 0;
};

/// L1 distance between target and realized weights over the union of symbols.
ReconciliationReport reconcile(const std::map<std::string, double>& target, const Positions& positions,
                               const PriceMap& prices, double equity, const SessionCounters& counters = {});

struct PaperOptions {
  FillTiming fill_timing = FillTiming::kClose;
  double initial_equity = 1.0;
  bool integer_shares = false;
  std::filesystem::path journal;
  /// Continue the journal instead of starting over.
  bool resume = false;
  /// Simulated crash: stop right after the record with this seq is written.
  std::optional<std::uint64_t> kill_after;
  /// Extra material folded into the config digest (e.g. the seed source).
  std::string digest_salt;
};

/// Thrown when a kill was injected; the journal is left as a crash would leave it.
class SessionKilled : public RuntimeError {
 public:
  explicit SessionKilled(std::uint64_t seq);
  std::uint64_t seq() const { return seq_; }

 private:
  std::uint64_t seq_;
};

struct PaperSessionResult {
  SessionState state;
  EquityLedger ledger;
  std::vector<ReconciliationReport> reconciliation;
  std::vector<std::string> notes;
  std::uint64_t records_written = 0;
};

/// Runs the strategy through the simulated broker, journaling every step.
PaperSessionResult run_paper_session(const PipelineSpec& spec, const MarketPanel& panel, const BrokerSimConfig& broker,
                                     const GuardrailConfig& guards, const PaperOptions& options);

/// Daily marked-to-market equity rebuilt from journal records alone.
EquityLedger session_ledger(const std::vector<JournalRecord>& records, const MarketPanel& panel,
                            const std::string& spec_id, Index first_row, Index last_row, double initial_equity);

/// Reconciliation rows taken from the rebalance checkpoints.
std::vector<ReconciliationReport> reconciliation_history(const std::vector<JournalRecord>& records);

/// `date,tracking_error_l1,rejection_rate,guardrail_triggers`
void write_reconciliation_csv(const std::vector<ReconciliationReport>& rows, std::ostream& out);

}  // namespace weightflow::execution
