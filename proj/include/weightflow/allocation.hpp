#pragma once

#include "weightflow/history.hpp"
#include "weightflow/qp.hpp"
#include "weightflow/selection.hpp"
#include "weightflow/weights.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace weightflow {

/// Sample mean and covariance (n - 1 denominator) of the rows of `returns`.
template <typename Scalar>
std::pair<VectorX<Scalar>, MatrixX<Scalar>> sample_moments(const MatrixX<Scalar>& returns) {
  const Index t = returns.rows();
  if (t < 2) throw RuntimeError("sample moments need at least two observations");
  VectorX<Scalar> mu = returns.colwise().mean().transpose();
  const MatrixX<Scalar> centered = returns.rowwise() - mu.transpose();
  MatrixX<Scalar> cov = (centered.transpose() * centered) / static_cast<Scalar>(t - 1);
  cov = Scalar(0.5) * (cov + cov.transpose()).eval();
  return {std::move(mu), std::move(cov)};
}

/// sigma <- (1 - lambda) * sigma + lambda * diag(sigma).
template <typename Scalar>
MatrixX<Scalar> shrink_to_diagonal(const MatrixX<Scalar>& sigma, Scalar lambda) {
  MatrixX<Scalar> out = (Scalar(1) - lambda) * sigma;
  out.diagonal() = sigma.diagonal();
  return out;
}

struct CovarianceEstimate {
  std::vector<std::string> assets;
  VectorXd mu;
  MatrixXd sigma;
  Index window = 0;
  double shrinkage = 0.0;
  /// Rows actually used (all surviving assets observed).
  Index observations = 0;
  std::vector<std::string> dropped;
};

/// Moments over the trailing `window` return rows ending at the history's
/// current row. Candidates with fewer than max(2, window/2) returns in the
/// window are dropped; the remaining assets use rows where all are observed.
CovarianceEstimate estimate_moments(const History& history, const CandidateSet& candidates, Index window,
                                    double shrinkage, Diagnostics* diagnostics = nullptr);

WeightVector allocate_equal(const CandidateSet& candidates, Date date);

struct QpDiagnostics {
  double objective = 0.0;
  double kkt_residual = 0.0;
  int iterations = 0;
};

/// argmin w'Sigma w on the capped simplex.
WeightVector allocate_min_variance(const CovarianceEstimate& est, double cap, Date date,
                                   QpDiagnostics* info = nullptr);

/// argmax w'mu - gamma w'Sigma w on the capped simplex.
WeightVector allocate_mean_variance(const CovarianceEstimate& est, double risk_aversion, double cap,
                                    Date date, QpDiagnostics* info = nullptr);

/// Precomputed weights loaded from a `date,symbol,weight` file (e.g. produced
/// by an external learning-based allocator).
class ExternalWeights {
 public:
  explicit ExternalWeights(const std::filesystem::path& path);
  ExternalWeights(std::map<Date, std::map<std::string, double>> rows) : rows_(std::move(rows)) {}

  /// Uses the latest row set dated <= t, restricted to candidates, clipped to
  /// [0, 1] and scaled down to gross 1 when the survivors exceed it. Throws when no row is dated <= t.
  WeightVector allocate(Date t, const CandidateSet& candidates, Date* source_date = nullptr) const;

 private:
  std::map<Date, std::map<std::string, double>> rows_;
};

/// Rotation intra-group allocation: each active group gets an equal share;
/// inside a group weights are proportional to max(residual momentum, 0), or
/// equal when no member has positive momentum.
WeightVector allocate_residual_momentum(const History& history, const GroupSpec& groups,
                                        const CandidateSet& candidates, Index beta_window,
                                        Index momentum_window);

}  // namespace weightflow
