#include "weightflow/selection.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace weightflow {

void GroupSpec::validate() const {
  if (groups.empty()) throw ConfigError("group spec has no groups");
  if (benchmark.empty()) throw ConfigError("group spec needs a benchmark symbol");
  std::set<std::string> seen;
  for (const auto& [name, members] : groups) {
    if (members.empty()) throw ConfigError("group '" + name + "' is empty");
    for (const auto& sym : members) {
      if (sym == benchmark) throw ConfigError("benchmark " + benchmark + " listed in group '" + name + "'");
      if (!seen.insert(sym).second) throw ConfigError("symbol " + sym + " appears in more than one group");
    }
  }
  if (max_active < 1 || max_active > static_cast<int>(groups.size())) {
    throw ConfigError("max_active must lie in [1, number of groups]");
  }
}

std::optional<std::string> GroupSpec::group_of(const std::string& symbol) const {
  for (const auto& [name, members] : groups) {
    if (std::find(members.begin(), members.end(), symbol) != members.end()) return name;
  }
  return std::nullopt;
}

CandidateSet select_top_quantile(const std::map<std::string, double>& scores, double q) {
  if (!(q > 0.0 && q <= 1.0)) throw ConfigError("quantile must lie in (0, 1]");
  std::vector<std::pair<std::string, double>> valid;
  for (const auto& [sym, s] : scores) {
    if (!is_missing(s)) valid.emplace_back(sym, s);
  }
  if (valid.empty()) throw RuntimeError("top-quantile selection: all scores missing");
  // Guard against q * n landing a hair above an integer, e.g. 0.1 * 30.
  const auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(valid.size()) - 1e-9));
  std::stable_sort(valid.begin(), valid.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> chosen;
  for (std::size_t i = 0; i < std::max<std::size_t>(k, 1); ++i) chosen.push_back(valid[i].first);
  return CandidateSet(std::move(chosen));
}

CandidateSet refresh_on_event(const CandidateSet& previous, const EventDates& events, Date t,
                              const std::function<CandidateSet()>& recompute) {
  if (previous.empty() || events.contains(t)) return recompute();
  return previous;
}

std::optional<double> information_ratio(const Eigen::Ref<const VectorXd>& asset_returns,
                                        const Eigen::Ref<const VectorXd>& benchmark_returns,
                                        Index window, double annualization) {
  const Index n = std::min(asset_returns.size(), benchmark_returns.size());
  const Index start = std::max<Index>(0, n - window);
  std::vector<double> active;
  for (Index i = start; i < n; ++i) {
    const double a = asset_returns(asset_returns.size() - n + i);
    const double b = benchmark_returns(benchmark_returns.size() - n + i);
    if (!is_missing(a) && !is_missing(b)) active.push_back(a - b);
  }
  if (active.size() < 2) return std::nullopt;
  const Eigen::Map<const VectorXd> x(active.data(), static_cast<Index>(active.size()));
  const double mean = x.mean();
  const double var = (x.array() - mean).square().sum() / static_cast<double>(x.size() - 1);
  const double sd = std::sqrt(var);
  // Active returns that are constant up to rounding carry no risk.
  if (!(sd > 1e-14 * std::max(1.0, std::abs(mean)))) return std::nullopt;
  return mean / sd * std::sqrt(annualization);
}

std::optional<double> residual_momentum(const Eigen::Ref<const VectorXd>& asset_returns,
                                        const Eigen::Ref<const VectorXd>& benchmark_returns,
                                        Index beta_window, Index momentum_window) {
  const Index n = std::min(asset_returns.size(), benchmark_returns.size());
  if (beta_window < 2 || momentum_window < 1 || n < std::max(beta_window, momentum_window)) {
    return std::nullopt;
  }
  auto a = [&](Index i) { return asset_returns(asset_returns.size() - n + i); };
  auto b = [&](Index i) { return benchmark_returns(benchmark_returns.size() - n + i); };

  std::vector<double> xs, ys;
  for (Index i = n - beta_window; i < n; ++i) {
    if (!is_missing(a(i)) && !is_missing(b(i))) {
      xs.push_back(b(i));
      ys.push_back(a(i));
    }
  }
  if (static_cast<Index>(xs.size()) < std::max<Index>(2, beta_window / 2)) return std::nullopt;
  const Eigen::Map<const VectorXd> x(xs.data(), static_cast<Index>(xs.size()));
  const Eigen::Map<const VectorXd> y(ys.data(), static_cast<Index>(ys.size()));
  const double mx = x.mean(), my = y.mean();
  const double var = (x.array() - mx).square().sum();
  // A constant benchmark leaves only rounding noise in var.
  if (!(var > 1e-14 * x.squaredNorm())) return std::nullopt;
  const double beta = ((x.array() - mx) * (y.array() - my)).sum() / var;

  double total = 0.0;
  for (Index i = n - momentum_window; i < n; ++i) {
    if (is_missing(a(i)) || is_missing(b(i))) return std::nullopt;
    total += a(i) - beta * b(i);
  }
  return total;
}

VectorXd group_return_series(const History& history, const std::vector<std::string>& members) {
  const Index len = history.now() + 1;
  VectorXd sum = VectorXd::Zero(len);
  Eigen::VectorXi count = Eigen::VectorXi::Zero(len);
  for (const auto& sym : members) {
    const auto j = history.asset_index(sym);
    if (!j) continue;
    const auto r = history.return_history(*j);
    for (Index i = 0; i < len; ++i) {
      if (!is_missing(r(i))) {
        sum(i) += r(i);
        ++count(i);
      }
    }
  }
  VectorXd out(len);
  for (Index i = 0; i < len; ++i) out(i) = count(i) > 0 ? sum(i) / count(i) : kMissing;
  return out;
}

CandidateSet select_rotation_groups(const GroupSpec& groups, const History& history, Index ir_window) {
  const auto bench = history.asset_index(groups.benchmark);
  if (!bench) throw RuntimeError("benchmark " + groups.benchmark + " not in panel");
  const auto bench_returns = history.return_history(*bench);

  std::vector<std::pair<std::string, double>> ranked;
  for (const auto& [name, members] : groups.groups) {
    const VectorXd group_returns = group_return_series(history, members);
    if (auto ir = information_ratio(group_returns, bench_returns, ir_window)) ranked.emplace_back(name, *ir);
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) {
    if (x.second != y.second) return x.second > y.second;
    return x.first < y.first;
  });
  std::vector<std::string> chosen;
  for (std::size_t g = 0; g < ranked.size() && g < static_cast<std::size_t>(groups.max_active); ++g) {
    const auto& members = groups.groups.at(ranked[g].first);
    chosen.insert(chosen.end(), members.begin(), members.end());
  }
  return CandidateSet(std::move(chosen));
}

}  // namespace weightflow
