#pragma once

#include "weightflow/market_data.hpp"

#include <optional>
#include <string>

namespace weightflow {

/// Read-only view of a panel truncated at row `now`. Every accessor refuses
/// rows after `now` with LookaheadError, so stages that only see a History
/// cannot peek at the future.
class History {
 public:
  History(const MarketPanel& panel, Index now);

  Index now() const { return now_; }
  Date date() const { return panel_->calendar[now_]; }
  Date date_at(Index row) const;
  const std::vector<std::string>& assets() const { return panel_->assets; }
  std::optional<Index> asset_index(std::string_view symbol) const { return panel_->asset_index(symbol); }

  double close(Index row, Index asset) const;
  double ret(Index row, Index asset) const;
  /// Closing prices / returns of one asset for rows [0, now].
  Eigen::Ref<const VectorXd> close_history(Index asset) const;
  Eigen::Ref<const VectorXd> return_history(Index asset) const;

  /// True when the asset has a price at `now` (universe membership).
  bool tradable(Index asset) const { return !is_missing(panel_->close(now_, asset)); }

  bool has_scores() const { return panel_->scores.has_value(); }
  /// Most recent score at or before `now`.
  std::optional<double> latest_score(Index asset) const;

  bool has_aux(const std::string& name) const { return panel_->aux.count(name) > 0; }
  std::optional<double> aux(const std::string& name) const;
  Eigen::Ref<const VectorXd> aux_history(const std::string& name) const;

 private:
  void check_row(Index row) const;

  const MarketPanel* panel_;
  Index now_;
};

}  // namespace weightflow
