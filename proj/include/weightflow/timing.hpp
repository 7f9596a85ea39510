#pragma once

#include "weightflow/weights.hpp"

#include <map>
#include <optional>
#include <string>

namespace weightflow {

/// Kaufman adaptive moving average parameters.
struct KamaParams {
  Index er_window = 10;
  double fast = 2.0;
  double slow = 30.0;

  void validate() const;
};

/// KAMA of a price series. Output row t is missing until er_window valid
/// prices precede it; the recursion is seeded with the price at the first
/// computable row. A missing price breaks the series and reseeds after it.
VectorXd kama_series(const Eigen::Ref<const VectorXd>& prices, const KamaParams& params = {});

/// 1 where price > KAMA, 0 otherwise, missing where KAMA is missing.
VectorXd kama_signal(const Eigen::Ref<const VectorXd>& prices, const KamaParams& params = {});

/// Time-series momentum at row t: 1 when the compounded return over the last
/// `lookback` returns ending at t is positive, 0 otherwise; missing when any of
/// those returns is missing or t < lookback.
std::optional<int> tsmom_signal(const Eigen::Ref<const VectorXd>& returns, Index lookback, Index t);

/// w_timing[i] = w_base[i] * signal[i]; absent signals count as 0 and the
/// freed mass goes to cash.
WeightVector apply_timing(const WeightVector& base, const std::map<std::string, int>& signals);

enum class OverlayMode { kScale, kThreshold };

struct OverlayParams {
  double vix_target = 20.0;
  OverlayMode mode = OverlayMode::kScale;
  double floor = 0.0;

  void validate() const;
};

/// Exposure multiplier: clamp(target / vix, floor, 1) in scale mode; 1 when
/// vix <= target else floor in threshold mode. Missing vix gives 1.
double overlay_scale(std::optional<double> vix, const OverlayParams& params);

/// Multiplies every weight by the same overlay scale.
WeightVector apply_vix_overlay(const WeightVector& timing, std::optional<double> vix,
                               const OverlayParams& params, Diagnostics* diagnostics = nullptr);

}  // namespace weightflow
