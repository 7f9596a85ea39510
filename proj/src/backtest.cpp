#include "weightflow/backtest.hpp"

#include <cmath>
#include <future>
#include <ostream>
#include <set>

namespace weightflow {

FillTiming parse_fill_timing(const std::string& name) {
  if (name == "close") return FillTiming::kClose;
  if (name == "next_open") return FillTiming::kNextOpen;
  throw ConfigError("fill_timing must be 'close' or 'next_open', got '" + name + "'");
}

const char* to_string(FillTiming timing) { return timing == FillTiming::kClose ? "close" : "next_open"; }

std::map<std::string, double> drift_weights(const std::map<std::string, double>& previous,
                                            const std::map<std::string, double>& returns,
                                            std::vector<std::string>* frozen) {
  double growth = 1.0;
  std::map<std::string, double> grown;
  for (const auto& [sym, w] : previous) {
    auto it = returns.find(sym);
    double r = it == returns.end() ? kMissing : it->second;
    if (is_missing(r)) {
      if (frozen) frozen->push_back(sym);
      r = 0.0;
    }
    grown[sym] = w * (1.0 + r);
    growth += w * r;
  }
  if (!(growth > 0.0)) {
    throw RuntimeError("portfolio return of " + format_double(growth - 1.0) + " wipes out equity");
  }
  for (auto& [sym, w] : grown) w /= growth;
  return grown;
}

double traded_fraction(const std::map<std::string, double>& target, const std::map<std::string, double>& held) {
  std::set<std::string> symbols;
  for (const auto& [s, w] : target) symbols.insert(s);
  for (const auto& [s, w] : held) symbols.insert(s);
  double total = 0.0;
  for (const auto& s : symbols) {
    const auto a = target.find(s);
    const auto b = held.find(s);
    total += std::abs((a == target.end() ? 0.0 : a->second) - (b == held.end() ? 0.0 : b->second));
  }
  return total;
}

double one_sided_turnover(const std::map<std::string, double>& target, const std::map<std::string, double>& held) {
  double cash_target = 1.0;
  double cash_held = 1.0;
  for (const auto& [s, w] : target) cash_target -= w;
  for (const auto& [s, w] : held) cash_held -= w;
  return 0.5 * traded_fraction(target, held) + 0.5 * std::abs(cash_target - cash_held);
}

namespace {

/// Per-asset simple return between two price rows of a panel matrix.
std::map<std::string, double> period_returns(const MarketPanel& panel, const std::map<std::string, double>& held,
                                             const MatrixXd& from, Index from_row, const MatrixXd& to, Index to_row) {
  std::map<std::string, double> r;
  for (const auto& [sym, w] : held) {
    const Index j = *panel.asset_index(sym);
    const double a = from(from_row, j);
    const double b = to(to_row, j);
    r[sym] = is_missing(a) || is_missing(b) ? kMissing : b / a - 1.0;
  }
  return r;
}

std::map<std::string, double> close_returns(const MarketPanel& panel, const std::map<std::string, double>& held,
                                            Index row) {
  std::map<std::string, double> r;
  for (const auto& [sym, w] : held) r[sym] = panel.returns(row, *panel.asset_index(sym));
  return r;
}

double portfolio_return(const std::map<std::string, double>& held, const std::map<std::string, double>& r) {
  double total = 0.0;
  for (const auto& [sym, w] : held) {
    const double x = r.at(sym);
    if (!is_missing(x)) total += w * x;
  }
  return total;
}

}  // namespace

EquityLedger run_backtest(const WeightTrajectory& trajectory, const MarketPanel& panel,
                          const BacktestOptions& options) {
  if (!(options.cost_rate >= 0.0)) throw ConfigError("cost rate must be non-negative");
  if (!(options.initial_equity > 0.0)) throw ConfigError("initial equity must be positive");
  if (options.fill_timing == FillTiming::kNextOpen && !panel.has_open()) {
    throw DataError("next_open fills need open prices in the panel");
  }
  EquityLedger ledger;
  ledger.spec_id = trajectory.spec_id;
  ledger.initial_equity = options.initial_equity;
  if (trajectory.records.empty()) return ledger;

  std::map<Index, const RebalanceRecord*> by_row;
  for (const auto& rec : trajectory.records) {
    if (rec.row < 0 || rec.row >= panel.num_dates() || panel.calendar[rec.row] != rec.date) {
      throw DataError("rebalance date " + rec.date.iso() + " is not in the panel calendar");
    }
    by_row[rec.row] = &rec;
  }
  const Index first = by_row.begin()->first;
  const Index last = options.last_row.value_or(panel.num_dates() - 1);
  if (last < by_row.rbegin()->first) throw DataError("horizon ends before the last rebalance");

  const bool at_open = options.fill_timing == FillTiming::kNextOpen;
  double equity = options.initial_equity;
  double gross = options.initial_equity;
  std::map<std::string, double> held;
  const RebalanceRecord* pending = nullptr;

  auto trade = [&](const RebalanceRecord& rec, double& turnover, double& fee) {
    const auto& target = rec.final.weights;
    turnover = one_sided_turnover(target, held);
    fee = options.cost_rate * traded_fraction(target, held) * equity;
    equity -= fee;
    held.clear();
    for (const auto& [s, w] : target) {
      if (w != 0.0) held[s] = w;
    }
  };

  auto grow = [&](const std::map<std::string, double>& r, Date d) {
    std::vector<std::string> frozen;
    const double pr = portfolio_return(held, r);
    held = drift_weights(held, r, &frozen);
    equity *= 1.0 + pr;
    gross *= 1.0 + pr;
    for (const auto& s : frozen) ledger.notes.push_back(d.iso() + ": no return for " + s + ", held at last price");
  };

  for (Index t = first; t <= last; ++t) {
    const Date d = panel.calendar[t];
    double turnover = 0.0;
    double fee = 0.0;
    bool traded = false;
    try {
      if (t > first) {
        if (at_open && pending) {
          grow(period_returns(panel, held, panel.close, t - 1, panel.open, t), d);
          trade(*pending, turnover, fee);
          traded = true;
          pending = nullptr;
          grow(period_returns(panel, held, panel.open, t, panel.close, t), d);
        } else {
          grow(close_returns(panel, held, t), d);
        }
      }
    } catch (const RuntimeError& e) {
      ledger.halted = true;
      ledger.notes.push_back(d.iso() + ": halted, " + e.what());
      break;
    }
    if (auto it = by_row.find(t); it != by_row.end()) {
      if (at_open) {
        pending = it->second;
      } else {
        trade(*it->second, turnover, fee);
        traded = true;
      }
    }
    ledger.dates.push_back(d);
    ledger.equity.push_back(equity);
    ledger.gross_equity.push_back(gross);
    ledger.turnover.push_back(turnover);
    ledger.cost.push_back(fee);
    ledger.rebalanced.push_back(traded ? 1 : 0);
    ledger.weights.push_back(held);
  }
  if (pending) ledger.notes.push_back(pending->date.iso() + ": target decided on the last row was never traded");
  return ledger;
}

EquityLedger run_backtest(const PipelineSpec& spec, const MarketPanel& panel, FillTiming timing,
                          double initial_equity) {
  BacktestOptions options;
  options.cost_rate = spec.cost_rate;
  options.fill_timing = timing;
  options.initial_equity = initial_equity;
  if (spec.end) options.last_row = panel.calendar.last_at_or_before(*spec.end);
  return run_backtest(run_pipeline(spec, panel), panel, options);
}

std::vector<AblationResult> ablation_grid(const std::vector<PipelineSpec>& specs, const MarketPanel& panel,
                                          FillTiming timing, double initial_equity) {
  std::vector<std::future<EquityLedger>> jobs;
  jobs.reserve(specs.size());
  for (const auto& spec : specs) {
    jobs.push_back(std::async(std::launch::async, [&spec, &panel, timing, initial_equity] {
      return run_backtest(spec, panel, timing, initial_equity);
    }));
  }
  std::vector<AblationResult> results;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    AblationResult r;
    r.spec_id = specs[i].id;
    try {
      r.ledger = jobs[i].get();
    } catch (const std::exception& e) {
      r.error = e.what();
      r.exception = std::current_exception();
    }
    results.push_back(std::move(r));
  }
  return results;
}

void write_ledger_csv(const EquityLedger& ledger, std::ostream& out) {
  out << "date,equity,turnover,cost\n";
  for (std::size_t k = 0; k < ledger.size(); ++k) {
    out << ledger.dates[k].iso() << ',' << format_double(ledger.equity[k]) << ','
        << format_double(ledger.turnover[k]) << ',' << format_double(ledger.cost[k]) << '\n';
  }
}

void write_gross_csv(const EquityLedger& ledger, std::ostream& out) {
  out << "date,equity\n";
  for (std::size_t k = 0; k < ledger.size(); ++k) {
    out << ledger.dates[k].iso() << ',' << format_double(ledger.gross_equity[k]) << '\n';
  }
}

}  // namespace weightflow
