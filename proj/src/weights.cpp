#include "weightflow/history.hpp"
#include "weightflow/weights.hpp"

#include <algorithm>
#include <cmath>

namespace weightflow {

double WeightVector::gross() const {
  double s = 0.0;
  for (const auto& [sym, w] : weights) s += w;
  return s;
}

double WeightVector::operator[](const std::string& symbol) const {
  auto it = weights.find(symbol);
  return it == weights.end() ? 0.0 : it->second;
}

WeightVector& WeightVector::prune() {
  std::erase_if(weights, [](const auto& kv) { return kv.second == 0.0; });
  return *this;
}

CandidateSet::CandidateSet(std::vector<std::string> symbols) : symbols_(std::move(symbols)) {
  std::sort(symbols_.begin(), symbols_.end());
  symbols_.erase(std::unique(symbols_.begin(), symbols_.end()), symbols_.end());
}

bool CandidateSet::contains(const std::string& symbol) const {
  return std::binary_search(symbols_.begin(), symbols_.end(), symbol);
}

std::optional<std::string> check_feasible(const WeightVector& w, const FeasibilityLimits& limits) {
  double gross = 0.0;
  for (const auto& [sym, v] : w.weights) {
    if (!std::isfinite(v)) return "non-finite weight for " + sym;
    if (limits.long_only && v < 0.0) return "negative weight " + format_double(v) + " for " + sym;
    gross += limits.long_only ? v : std::abs(v);
  }
  if (gross > limits.gross_cap + limits.tolerance) {
    return "gross exposure " + format_double(gross) + " exceeds cap " + format_double(limits.gross_cap);
  }
  return std::nullopt;
}

WeightVector restrict_weights(const WeightVector& w, const CandidateSet& candidates, bool renormalize) {
  WeightVector out = WeightVector::all_cash(w.date);
  double kept = 0.0;
  for (const auto& [sym, v] : w.weights) {
    if (candidates.contains(sym) && v != 0.0) {
      out.weights[sym] = v;
      kept += v;
    }
  }
  if (renormalize && kept > 0.0) {
    const double scale = w.gross() / kept;
    for (auto& [sym, v] : out.weights) v *= scale;
  }
  return out;
}

// ---------------------------------------------------------------- History

History::History(const MarketPanel& panel, Index now) : panel_(&panel), now_(now) {
  if (now < 0 || now >= panel.num_dates()) throw RuntimeError("history row out of range");
}

void History::check_row(Index row) const {
  if (row > now_) {
    throw LookaheadError("lookahead: row " + std::to_string(row) + " (" +
                         panel_->calendar[std::min(row, panel_->num_dates() - 1)].iso() +
                         ") read while computing " + date().iso());
  }
  if (row < 0) throw RuntimeError("history row out of range");
}

Date History::date_at(Index row) const {
  check_row(row);
  return panel_->calendar[row];
}

double History::close(Index row, Index asset) const {
  check_row(row);
  return panel_->close(row, asset);
}

double History::ret(Index row, Index asset) const {
  check_row(row);
  return panel_->returns(row, asset);
}

Eigen::Ref<const VectorXd> History::close_history(Index asset) const {
  return panel_->close.col(asset).head(now_ + 1);
}

Eigen::Ref<const VectorXd> History::return_history(Index asset) const {
  return panel_->returns.col(asset).head(now_ + 1);
}

std::optional<double> History::latest_score(Index asset) const {
  if (!panel_->scores) return std::nullopt;
  for (Index i = now_; i >= 0; --i) {
    const double s = (*panel_->scores)(i, asset);
    if (!is_missing(s)) return s;
  }
  return std::nullopt;
}

std::optional<double> History::aux(const std::string& name) const {
  auto it = panel_->aux.find(name);
  if (it == panel_->aux.end()) return std::nullopt;
  const double v = it->second(now_);
  if (is_missing(v)) return std::nullopt;
  return v;
}

Eigen::Ref<const VectorXd> History::aux_history(const std::string& name) const {
  auto it = panel_->aux.find(name);
  if (it == panel_->aux.end()) throw RuntimeError("unknown aux series '" + name + "'");
  return it->second.head(now_ + 1);
}

}  // namespace weightflow
