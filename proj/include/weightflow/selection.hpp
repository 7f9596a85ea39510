#pragma once

#include "weightflow/history.hpp"
#include "weightflow/market_data.hpp"
#include "weightflow/weights.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace weightflow {

/// Disjoint named asset groups rotated against a benchmark.
struct GroupSpec {
  std::map<std::string, std::vector<std::string>> groups;
  std::string benchmark;
  int max_active = 2;

  /// Throws ConfigError unless groups are disjoint, exclude the benchmark and
  /// 1 <= max_active <= group count.
  void validate() const;
  /// Name of the group holding `symbol`, if any.
  std::optional<std::string> group_of(const std::string& symbol) const;
};

/// The ceil(q * n) highest scores among non-missing entries; ties go to the
/// lexicographically smaller symbol.
CandidateSet select_top_quantile(const std::map<std::string, double>& scores, double q);

/// Keeps `previous` unless `t` is an event date or `previous` is empty.
CandidateSet refresh_on_event(const CandidateSet& previous, const EventDates& events, Date t,
                              const std::function<CandidateSet()>& recompute);

/// Annualized mean/stdev of active returns (asset - benchmark) over the last
/// `window` rows of the aligned series. Rows with either side missing are
/// skipped. Missing when fewer than two pairs remain or active risk is zero.
std::optional<double> information_ratio(const Eigen::Ref<const VectorXd>& asset_returns,
                                        const Eigen::Ref<const VectorXd>& benchmark_returns,
                                        Index window, double annualization = 252.0);

/// Sum over the last `momentum_window` rows of asset - beta * benchmark, with
/// beta = cov / var estimated over the last `beta_window` rows.
std::optional<double> residual_momentum(const Eigen::Ref<const VectorXd>& asset_returns,
                                        const Eigen::Ref<const VectorXd>& benchmark_returns,
                                        Index beta_window, Index momentum_window);

/// Equal-weight return series of a group's members (mean over members with a
/// return on that row).
VectorXd group_return_series(const History& history, const std::vector<std::string>& members);

/// Union of the top `groups.max_active` groups ranked by group information
/// ratio; groups whose IR is missing are skipped.
CandidateSet select_rotation_groups(const GroupSpec& groups, const History& history, Index ir_window);

}  // namespace weightflow
