#include "weightflow/timing.hpp"

#include <algorithm>
#include <cmath>

namespace weightflow {

void KamaParams::validate() const {
  if (!(fast > 0.0 && fast < slow)) throw ConfigError("KAMA requires 0 < fast < slow");
  if (er_window < 1) throw ConfigError("KAMA efficiency-ratio window must be >= 1");
}

VectorXd kama_series(const Eigen::Ref<const VectorXd>& prices, const KamaParams& params) {
  params.validate();
  const Index n = prices.size();
  const Index w = params.er_window;
  const double fast_sc = 2.0 / (params.fast + 1.0);
  const double slow_sc = 2.0 / (params.slow + 1.0);
  VectorXd out = VectorXd::Constant(n, kMissing);

  Index run_start = 0;  // first row of the current gap-free run
  bool seeded = false;
  double kama = 0.0;
  for (Index t = 0; t < n; ++t) {
    if (is_missing(prices(t))) {
      run_start = t + 1;
      seeded = false;
      continue;
    }
    if (t - run_start < w) continue;
    if (!seeded) {
      kama = prices(t);
      seeded = true;
      out(t) = kama;
      continue;
    }
    const double change = std::abs(prices(t) - prices(t - w));
    double volatility = 0.0;
    for (Index i = t - w + 1; i <= t; ++i) volatility += std::abs(prices(i) - prices(i - 1));
    const double er = volatility > 0.0 ? change / volatility : 0.0;
    const double sc = std::pow(er * (fast_sc - slow_sc) + slow_sc, 2);
    kama += sc * (prices(t) - kama);
    out(t) = kama;
  }
  return out;
}

VectorXd kama_signal(const Eigen::Ref<const VectorXd>& prices, const KamaParams& params) {
  const VectorXd kama = kama_series(prices, params);
  VectorXd signal(prices.size());
  for (Index t = 0; t < prices.size(); ++t) {
    signal(t) = is_missing(kama(t)) ? kMissing : (prices(t) > kama(t) ? 1.0 : 0.0);
  }
  return signal;
}

std::optional<int> tsmom_signal(const Eigen::Ref<const VectorXd>& returns, Index lookback, Index t) {
  if (lookback < 1) throw ConfigError("TSMOM lookback must be >= 1");
  if (t >= returns.size() || t - lookback + 1 < 1) return std::nullopt;
  double growth = 1.0;
  for (Index i = t - lookback + 1; i <= t; ++i) {
    if (is_missing(returns(i))) return std::nullopt;
    growth *= 1.0 + returns(i);
  }
  return growth - 1.0 > 0.0 ? 1 : 0;
}

WeightVector apply_timing(const WeightVector& base, const std::map<std::string, int>& signals) {
  WeightVector out = WeightVector::all_cash(base.date);
  for (const auto& [sym, w] : base.weights) {
    auto it = signals.find(sym);
    const int s = it == signals.end() ? 0 : it->second;
    if (s != 0 && s != 1) throw RuntimeError("timing signal for " + sym + " is not in {0, 1}");
    if (s == 1 && w != 0.0) out.weights[sym] = w;
  }
  return out;
}

void OverlayParams::validate() const {
  if (!(vix_target > 0.0)) throw ConfigError("overlay vix_target must be positive");
  if (!(floor >= 0.0 && floor <= 1.0)) throw ConfigError("overlay floor must lie in [0, 1]");
}

double overlay_scale(std::optional<double> vix, const OverlayParams& params) {
  if (!vix || !(*vix > 0.0)) return 1.0;
  if (params.mode == OverlayMode::kThreshold) return *vix <= params.vix_target ? 1.0 : params.floor;
  return std::clamp(params.vix_target / *vix, params.floor, 1.0);
}

WeightVector apply_vix_overlay(const WeightVector& timing, std::optional<double> vix,
                               const OverlayParams& params, Diagnostics* diagnostics) {
  if (!vix && diagnostics) diagnostics->warn("vix overlay: VIX missing on " + timing.date.iso() + ", scale 1");
  const double s = overlay_scale(vix, params);
  WeightVector out = timing;
  if (s == 1.0) return out;
  for (auto& [sym, w] : out.weights) w *= s;
  return out.prune();
}

}  // namespace weightflow
