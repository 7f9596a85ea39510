#include "weightflow/metrics.hpp"

#include "csv.hpp"

#include <cmath>
#include <ostream>

namespace weightflow {

Drawdown drawdown(std::span<const double> equity) {
  Drawdown dd;
  if (equity.empty()) return dd;
  double peak = equity[0];
  std::size_t peak_at = 0;
  for (std::size_t t = 0; t < equity.size(); ++t) {
    if (equity[t] >= peak) {
      // Peak to recovery, counted only when some day in between was under water.
      if (t - peak_at > 1) dd.longest = std::max<Index>(dd.longest, static_cast<Index>(t - peak_at));
      peak = equity[t];
      peak_at = t;
    }
    dd.max = std::min(dd.max, equity[t] / peak - 1.0);
  }
  dd.longest = std::max<Index>(dd.longest, static_cast<Index>(equity.size() - 1 - peak_at));
  return dd;
}

MetricsReport compute_metrics(std::span<const double> equity, double periods_per_year, double rf) {
  if (equity.size() < 2) throw RuntimeError("metrics need at least two equity points");
  for (double p : equity) {
    if (!(p > 0.0)) throw RuntimeError("metrics need a strictly positive equity curve");
  }
  const auto n = static_cast<Index>(equity.size() - 1);
  VectorXd d(n);
  for (Index t = 0; t < n; ++t) d(t) = equity[t + 1] / equity[t] - 1.0;

  MetricsReport m;
  m.periods = n;
  m.cumulative_return = equity.back() / equity.front();
  m.annualized_return = std::pow(m.cumulative_return, periods_per_year / static_cast<double>(n)) - 1.0;

  const double mean = d.mean();
  const double sd = n > 1 ? std::sqrt((d.array() - mean).square().sum() / static_cast<double>(n - 1)) : 0.0;
  const double root = std::sqrt(periods_per_year);
  m.annualized_volatility = sd * root;
  const double excess = mean - rf / periods_per_year;
  if (sd > 0.0) m.sharpe = excess / sd * root;
  const double downside = std::sqrt((d.array() - rf / periods_per_year).min(0.0).square().mean());
  if (downside > 0.0) m.sortino = excess / downside * root;

  const Drawdown dd = drawdown(equity);
  m.max_drawdown = dd.max;
  m.max_drawdown_duration = dd.longest;
  if (dd.max < 0.0) m.calmar = m.annualized_return / std::abs(dd.max);
  m.win_rate = static_cast<double>((d.array() > 0.0).count()) / static_cast<double>(n);
  return m;
}

MetricsReport compute_metrics(const EquityLedger& ledger, double periods_per_year, double rf) {
  // The curve starts from the configured P_0 so the entry cost is part of the first period.
  std::vector<double> curve;
  curve.reserve(ledger.size() + 1);
  curve.push_back(ledger.initial_equity);
  curve.insert(curve.end(), ledger.equity.begin(), ledger.equity.end());
  MetricsReport m = compute_metrics(std::span<const double>(curve), periods_per_year, rf);
  m.strategy = ledger.spec_id;
  double total = 0.0;
  int count = 0;
  for (std::size_t k = 0; k < ledger.size(); ++k) {
    if (ledger.rebalanced[k]) {
      total += ledger.turnover[k];
      ++count;
    }
  }
  if (count > 0) m.average_turnover = total / count;
  return m;
}

const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> columns{
      "strategy", "cum_return", "ann_return", "ann_vol",      "sharpe",   "sortino", "calmar",
      "max_dd",   "dd_days",    "dd_months",  "avg_turnover", "win_rate", "periods"};
  return columns;
}

namespace {

std::string opt(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

}  // namespace

std::vector<std::string> metrics_row(const MetricsReport& m) {
  return {m.strategy,
          format_double(m.cumulative_return),
          format_double(m.annualized_return),
          format_double(m.annualized_volatility),
          opt(m.sharpe),
          opt(m.sortino),
          opt(m.calmar),
          format_double(m.max_drawdown),
          std::to_string(m.max_drawdown_duration),
          format_double(static_cast<double>(m.max_drawdown_duration) / 21.0),
          opt(m.average_turnover),
          format_double(m.win_rate),
          std::to_string(m.periods)};
}

void write_metrics_csv(const std::vector<MetricsReport>& reports, std::ostream& out) {
  const auto& cols = metrics_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const auto& r : reports) {
    const auto row = metrics_row(r);
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << '\n';
  }
}

nlohmann::ordered_json to_json(const MetricsReport& m) {
  auto opt_json = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(); };
  nlohmann::ordered_json j;
  j["strategy"] = m.strategy;
  j["cum_return"] = m.cumulative_return;
  j["ann_return"] = m.annualized_return;
  j["ann_vol"] = m.annualized_volatility;
  j["sharpe"] = opt_json(m.sharpe);
  j["sortino"] = opt_json(m.sortino);
  j["calmar"] = opt_json(m.calmar);
  j["max_dd"] = m.max_drawdown;
  j["dd_days"] = m.max_drawdown_duration;
  j["dd_months"] = static_cast<double>(m.max_drawdown_duration) / 21.0;
  j["avg_turnover"] = opt_json(m.average_turnover);
  j["win_rate"] = m.win_rate;
  j["periods"] = m.periods;
  return j;
}

MetricsReport metrics_from_json(const nlohmann::json& j) {
  auto opt_num = [&](const char* key) -> std::optional<double> {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
  };
  try {
    MetricsReport m;
    m.strategy = j.at("strategy").get<std::string>();
    m.cumulative_return = j.at("cum_return").get<double>();
    m.annualized_return = j.at("ann_return").get<double>();
    m.annualized_volatility = j.at("ann_vol").get<double>();
    m.sharpe = opt_num("sharpe");
    m.sortino = opt_num("sortino");
    m.calmar = opt_num("calmar");
    m.max_drawdown = j.at("max_dd").get<double>();
    m.max_drawdown_duration = j.at("dd_days").get<Index>();
    m.average_turnover = opt_num("avg_turnover");
    m.win_rate = j.at("win_rate").get<double>();
    m.periods = j.value("periods", Index{0});
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed metrics record: ") + e.what());
  }
}

std::vector<MetricsReport> read_metrics_csv(const std::filesystem::path& path) {
  const csv::Table table = csv::read(path);
  std::vector<std::size_t> idx;
  for (const auto& name : metrics_columns()) idx.push_back(*table.column(name, true));
  std::vector<MetricsReport> out;
  for (const auto& [line, fields] : table.rows) {
    if (fields.size() != table.header.size()) {
      throw DataError("wrong number of fields", table.source, line);
    }
    auto opt_num = [&](std::size_t col) -> std::optional<double> {
      const auto& f = fields[idx[col]];
      if (f.empty()) return std::nullopt;
      auto v = csv::parse_double(f);
      if (!v) throw DataError("bad number '" + f + "'", table.source, line);
      return v;
    };
    auto num = [&](std::size_t col) {
      auto v = opt_num(col);
      if (!v) throw DataError("missing value in column " + metrics_columns()[col], table.source, line);
      return *v;
    };
    MetricsReport m;
    m.strategy = fields[idx[0]];
    m.cumulative_return = num(1);
    m.annualized_return = num(2);
    m.annualized_volatility = num(3);
    m.sharpe = opt_num(4);
    m.sortino = opt_num(5);
    m.calmar = opt_num(6);
    m.max_drawdown = num(7);
    m.max_drawdown_duration = static_cast<Index>(num(8));
    m.average_turnover = opt_num(10);
    m.win_rate = num(11);
    m.periods = static_cast<Index>(num(12));
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace weightflow
