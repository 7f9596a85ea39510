#include "weightflow/allocation.hpp"

#include "csv.hpp"

#include <algorithm>
#include <cmath>

namespace weightflow {

CovarianceEstimate estimate_moments(const History& history, const CandidateSet& candidates, Index window,
                                    double shrinkage, Diagnostics* diagnostics) {
  if (window < 2) throw ConfigError("estimation window must be at least 2");
  if (!(shrinkage >= 0.0 && shrinkage <= 1.0)) throw ConfigError("shrinkage must lie in [0, 1]");
  const Index last = history.now();
  const Index first = std::max<Index>(0, last - window + 1);
  const Index min_obs = std::max<Index>(2, window / 2);

  CovarianceEstimate est;
  est.window = window;
  est.shrinkage = shrinkage;
  std::vector<Index> columns;
  for (const auto& sym : candidates.symbols()) {
    const auto j = history.asset_index(sym);
    Index count = 0;
    if (j) {
      for (Index i = first; i <= last; ++i) count += is_missing(history.ret(i, *j)) ? 0 : 1;
    }
    if (count >= min_obs) {
      est.assets.push_back(sym);
      columns.push_back(*j);
    } else {
      est.dropped.push_back(sym);
      if (diagnostics) {
        diagnostics->warn("estimate_moments: dropped " + sym + " (" + std::to_string(count) +
                          " returns in window, need " + std::to_string(min_obs) + ")");
      }
    }
  }
  if (est.assets.size() < 2) {
    throw RuntimeError("estimate_moments: fewer than two assets with enough history on " +
                       history.date().iso());
  }

  std::vector<Index> rows;
  for (Index i = first; i <= last; ++i) {
    bool complete = true;
    for (Index j : columns) complete = complete && !is_missing(history.ret(i, j));
    if (complete) rows.push_back(i);
  }
  if (rows.size() < 2) {
    throw RuntimeError("estimate_moments: fewer than two jointly observed rows on " + history.date().iso());
  }
  MatrixXd sample(static_cast<Index>(rows.size()), static_cast<Index>(columns.size()));
  for (Index r = 0; r < sample.rows(); ++r) {
    for (Index c = 0; c < sample.cols(); ++c) {
      sample(r, c) = history.ret(rows[static_cast<std::size_t>(r)], columns[static_cast<std::size_t>(c)]);
    }
  }
  auto [mu, sigma] = sample_moments(sample);
  est.mu = std::move(mu);
  est.sigma = shrink_to_diagonal(sigma, shrinkage);
  est.observations = sample.rows();
  return est;
}

WeightVector allocate_equal(const CandidateSet& candidates, Date date) {
  WeightVector w = WeightVector::all_cash(date);
  if (candidates.empty()) return w;
  const double each = 1.0 / static_cast<double>(candidates.size());
  for (const auto& sym : candidates.symbols()) w.weights[sym] = each;
  return w;
}

namespace {

WeightVector solve_allocation(const CovarianceEstimate& est, const MatrixXd& Q, const VectorXd& b,
                              double cap, Date date, QpDiagnostics* info) {
  if (est.assets.empty()) throw RuntimeError("empty covariance estimate");
  QpOptions options;
  options.cap = cap;
  const auto result = solve_capped_simplex_qp<double>(Q, b, options);
  if (info) *info = {result.objective, result.kkt_residual, result.iterations};
  WeightVector w = WeightVector::all_cash(date);
  for (std::size_t i = 0; i < est.assets.size(); ++i) w.weights[est.assets[i]] = result.weights(static_cast<Index>(i));
  return w.prune();
}

}  // namespace

WeightVector allocate_min_variance(const CovarianceEstimate& est, double cap, Date date, QpDiagnostics* info) {
  const MatrixXd Q = 2.0 * est.sigma;
  return solve_allocation(est, Q, VectorXd::Zero(est.mu.size()), cap, date, info);
}

WeightVector allocate_mean_variance(const CovarianceEstimate& est, double risk_aversion, double cap, Date date,
                                    QpDiagnostics* info) {
  if (!(risk_aversion > 0.0)) throw ConfigError("risk aversion must be positive");
  const MatrixXd Q = 2.0 * risk_aversion * est.sigma;
  return solve_allocation(est, Q, est.mu, cap, date, info);
}

// ---------------------------------------------------------------- external weights

ExternalWeights::ExternalWeights(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  const auto date_col = *table.column("date");
  const auto sym_col = *table.column("symbol");
  const auto w_col = *table.column("weight");
  for (const auto& [line, fields] : table.rows) {
    if (fields.size() != table.header.size()) throw DataError("malformed row", table.source, line);
    Date d;
    try {
      d = Date::parse(fields[date_col]);
    } catch (const DataError& e) {
      throw DataError(e.what(), table.source, line);
    }
    auto w = csv::parse_double(fields[w_col]);
    if (!w || !std::isfinite(*w)) throw DataError("malformed weight '" + fields[w_col] + "'", table.source, line);
    if (!rows_[d].emplace(fields[sym_col], *w).second) {
      throw DataError("duplicate weight for (" + d.iso() + ", " + fields[sym_col] + ")", table.source, line);
    }
  }
}

WeightVector ExternalWeights::allocate(Date t, const CandidateSet& candidates, Date* source_date) const {
  auto it = rows_.upper_bound(t);
  if (it == rows_.begin()) throw RuntimeError("external weights: no rows dated on or before " + t.iso());
  --it;
  if (source_date) *source_date = it->first;
  WeightVector w = WeightVector::all_cash(t);
  double total = 0.0;
  for (const auto& [sym, raw] : it->second) {
    if (!candidates.contains(sym)) continue;
    const double v = std::clamp(raw, 0.0, 1.0);
    if (v > 0.0) {
      w.weights[sym] = v;
      total += v;
    }
  }
  // Scale down only; a file that leaves part of the book in cash keeps it.
  if (total > 1.0) {
    for (auto& [sym, v] : w.weights) v /= total;
  }
  return w;
}

// ---------------------------------------------------------------- rotation

WeightVector allocate_residual_momentum(const History& history, const GroupSpec& groups,
                                        const CandidateSet& candidates, Index beta_window,
                                        Index momentum_window) {
  std::map<std::string, std::vector<std::string>> active;
  for (const auto& sym : candidates.symbols()) {
    active[groups.group_of(sym).value_or(sym)].push_back(sym);
  }
  WeightVector w = WeightVector::all_cash(history.date());
  if (active.empty()) return w;
  const auto bench = history.asset_index(groups.benchmark);
  if (!bench) throw RuntimeError("benchmark " + groups.benchmark + " not in panel");
  const auto bench_returns = history.return_history(*bench);
  const double group_share = 1.0 / static_cast<double>(active.size());

  for (const auto& [name, members] : active) {
    std::vector<double> scores;
    double total = 0.0;
    for (const auto& sym : members) {
      double s = 0.0;
      if (const auto j = history.asset_index(sym)) {
        // Missing momentum counts as zero, which excludes the asset unless the
        // whole group falls back to equal weights.
        s = std::max(residual_momentum(history.return_history(*j), bench_returns, beta_window,
                                       momentum_window).value_or(0.0),
                     0.0);
      }
      scores.push_back(s);
      total += s;
    }
    for (std::size_t i = 0; i < members.size(); ++i) {
      const double inner = total > 0.0 ? scores[i] / total : 1.0 / static_cast<double>(members.size());
      if (inner > 0.0) w.weights[members[i]] = group_share * inner;
    }
  }
  return w;
}

}  // namespace weightflow
