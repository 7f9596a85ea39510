#pragma once

#include "weightflow/core.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace weightflow {

/// Target fraction of equity per asset at a rebalance date. Cash is implicit:
/// 1 - gross(). This is the only thing stages hand to each other, to the
/// backtester and to the executor.
struct WeightVector {
  Date date;
  std::map<std::string, double> weights;

  WeightVector() = default;
  WeightVector(Date d, std::map<std::string, double> w) : date(d), weights(std::move(w)) {}

  static WeightVector all_cash(Date d) { return WeightVector(d, {}); }

  double gross() const;
  double cash() const { return 1.0 - gross(); }
  /// Weight of a symbol, zero when absent.
  double operator[](const std::string& symbol) const;
  /// Drops exact zeros so equal allocations compare equal.
  WeightVector& prune();

  friend bool operator==(const WeightVector&, const WeightVector&) = default;
};

/// Sorted, duplicate-free subset of the tradable universe.
class CandidateSet {
 public:
  CandidateSet() = default;
  explicit CandidateSet(std::vector<std::string> symbols);

  const std::vector<std::string>& symbols() const { return symbols_; }
  bool contains(const std::string& symbol) const;
  bool empty() const { return symbols_.empty(); }
  std::size_t size() const { return symbols_.size(); }

  friend bool operator==(const CandidateSet&, const CandidateSet&) = default;

 private:
  std::vector<std::string> symbols_;
};

struct FeasibilityLimits {
  double gross_cap = 1.0;
  bool long_only = true;
  double tolerance = 1e-10;
};

/// Describes the first violated weight invariant, or nullopt when feasible.
std::optional<std::string> check_feasible(const WeightVector& w, const FeasibilityLimits& limits);

/// Zeros weights outside `candidates`. With `renormalize`, survivors are scaled
/// back to the original gross sum; otherwise the freed mass becomes cash.
WeightVector restrict_weights(const WeightVector& w, const CandidateSet& candidates, bool renormalize);

/// Collects non-fatal warnings raised while computing a rebalance.
struct Diagnostics {
  std::vector<std::string> notes;
  void warn(std::string message) { notes.push_back(std::move(message)); }
};

}  // namespace weightflow
