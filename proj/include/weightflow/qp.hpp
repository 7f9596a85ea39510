#pragma once

// Convex quadratic programs over the capped simplex
//
//   minimize   1/2 w'Qw - b'w
//   subject to sum(w) = 1,  0 <= w_i <= cap
//
// solved by accelerated projected gradient with an active-set polish step.
// Q must be symmetric positive semidefinite.

#include "weightflow/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace weightflow {

/// Thrown when the constraints are infeasible or the solver misses its tolerance.
class SolverError : public RuntimeError {
 public:
  SolverError(const std::string& what, double residual = 0.0) : RuntimeError(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

template <typename Scalar>
struct QpResult {
  VectorX<Scalar> weights;
  Scalar objective{};
  /// Infinity norm of w - proj(w - grad / L): zero exactly at a KKT point.
  Scalar kkt_residual{};
  int iterations = 0;
};

struct QpOptions {
  double cap = 1.0;
  double tolerance = 1e-8;
  int max_iterations = 200000;
};

/// Euclidean projection of v onto {sum(w) = 1, 0 <= w <= cap}.
template <typename Derived>
VectorX<typename Derived::Scalar> project_capped_simplex(const Eigen::MatrixBase<Derived>& v,
                                                         typename Derived::Scalar cap) {
  using Scalar = typename Derived::Scalar;
  const Index n = v.size();
  if (n == 0 || cap * static_cast<Scalar>(n) < Scalar(1) - Scalar(1e-12)) {
    throw SolverError("capped simplex is empty (cap * n < 1)");
  }
  // sum_i clamp(v_i - tau, 0, cap) is non-increasing and piecewise linear in
  // tau with breakpoints at v_i and v_i - cap; locate the segment holding 1.
  auto mass = [&](Scalar tau) {
    Scalar s(0);
    for (Index i = 0; i < n; ++i) s += std::clamp(v(i) - tau, Scalar(0), cap);
    return s;
  };
  std::vector<Scalar> knots;
  knots.reserve(static_cast<std::size_t>(2 * n));
  for (Index i = 0; i < n; ++i) {
    knots.push_back(v(i));
    knots.push_back(v(i) - cap);
  }
  std::sort(knots.begin(), knots.end());
  // mass(knots.front()) = min(n * cap, ...) >= 1 and mass(knots.back()) = 0.
  std::size_t lo = 0, hi = knots.size() - 1;
  while (hi - lo > 1) {
    const std::size_t mid = (lo + hi) / 2;
    if (mass(knots[mid]) >= Scalar(1)) lo = mid; else hi = mid;
  }
  const Scalar t0 = knots[lo], t1 = knots[hi];
  const Scalar m0 = mass(t0), m1 = mass(t1);
  Scalar tau = t0;
  if (m0 != m1) tau = t0 + (m0 - Scalar(1)) * (t1 - t0) / (m0 - m1);
  VectorX<Scalar> w(n);
  for (Index i = 0; i < n; ++i) w(i) = std::clamp(v(i) - tau, Scalar(0), cap);
  // Remove the last rounding error from the equality constraint on a free coordinate.
  const Scalar err = w.sum() - Scalar(1);
  if (err != Scalar(0)) {
    for (Index i = 0; i < n; ++i) {
      const Scalar candidate = w(i) - err;
      if (w(i) > Scalar(0) && w(i) < cap && candidate >= Scalar(0) && candidate <= cap) {
        w(i) = candidate;
        break;
      }
    }
  }
  return w;
}

namespace detail {

template <typename Scalar>
Scalar qp_objective(const MatrixX<Scalar>& Q, const VectorX<Scalar>& b, const VectorX<Scalar>& w) {
  return Scalar(0.5) * w.dot(Q * w) - b.dot(w);
}

template <typename Scalar>
Scalar qp_residual(const MatrixX<Scalar>& Q, const VectorX<Scalar>& b, const VectorX<Scalar>& w,
                   Scalar step, Scalar cap) {
  const VectorX<Scalar> grad = Q * w - b;
  return (w - project_capped_simplex(w - step * grad, cap)).cwiseAbs().maxCoeff();
}

/// Solves the equality-constrained subproblem on the free coordinates implied
/// by `w` and returns the candidate if it is feasible.
template <typename Scalar>
bool polish(const MatrixX<Scalar>& Q, const VectorX<Scalar>& b, Scalar cap, VectorX<Scalar>& w) {
  const Index n = w.size();
  const Scalar eps = Scalar(1e-10);
  std::vector<Index> free_idx;
  VectorX<Scalar> fixed = VectorX<Scalar>::Zero(n);
  for (Index i = 0; i < n; ++i) {
    if (w(i) <= eps) {
      fixed(i) = Scalar(0);
    } else if (w(i) >= cap - eps) {
      fixed(i) = cap;
    } else {
      free_idx.push_back(i);
    }
  }
  const Index m = static_cast<Index>(free_idx.size());
  if (m == 0) return false;
  // [Q_FF  1][w_F]   [b_F - Q_F,fixed w_fixed]
  // [1'    0][-nu] = [1 - sum(w_fixed)        ]
  MatrixX<Scalar> K = MatrixX<Scalar>::Zero(m + 1, m + 1);
  VectorX<Scalar> rhs(m + 1);
  const VectorX<Scalar> q_fixed = Q * fixed;
  for (Index a = 0; a < m; ++a) {
    for (Index c = 0; c < m; ++c) K(a, c) = Q(free_idx[a], free_idx[c]);
    K(a, m) = Scalar(1);
    K(m, a) = Scalar(1);
    rhs(a) = b(free_idx[a]) - q_fixed(free_idx[a]);
  }
  rhs(m) = Scalar(1) - fixed.sum();
  const VectorX<Scalar> sol = K.completeOrthogonalDecomposition().solve(rhs);
  VectorX<Scalar> candidate = fixed;
  for (Index a = 0; a < m; ++a) {
    if (!(sol(a) >= -eps && sol(a) <= cap + eps)) return false;
    candidate(free_idx[a]) = std::clamp(sol(a), Scalar(0), cap);
  }
  if (std::abs(candidate.sum() - Scalar(1)) > Scalar(1e-9)) return false;
  w = project_capped_simplex(candidate, cap);
  return true;
}

}  // namespace detail

/// Minimizes 1/2 w'Qw - b'w over the capped simplex to `options.tolerance`
/// in KKT residual. Starts from the uniform point so symmetric problems keep
/// symmetric solutions even when Q is singular.
template <typename Scalar>
QpResult<Scalar> solve_capped_simplex_qp(const MatrixX<Scalar>& Q, const VectorX<Scalar>& b,
                                         const QpOptions& options = {}) {
  const Index n = b.size();
  if (Q.rows() != n || Q.cols() != n) throw SolverError("QP dimension mismatch");
  const Scalar cap = static_cast<Scalar>(options.cap);
  if (n == 0 || cap * static_cast<Scalar>(n) < Scalar(1) - Scalar(1e-12)) {
    throw SolverError("infeasible constraints: cap * n < 1");
  }
  if (!Q.allFinite() || !b.allFinite()) throw SolverError("QP data is not finite");

  const Scalar lipschitz = std::max(Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>>(
                                        Q, Eigen::EigenvaluesOnly).eigenvalues().cwiseAbs().maxCoeff(),
                                    std::numeric_limits<Scalar>::min());
  const Scalar step = Scalar(1) / lipschitz;
  const Scalar tol = static_cast<Scalar>(options.tolerance);

  QpResult<Scalar> result;
  VectorX<Scalar> w = project_capped_simplex(VectorX<Scalar>::Constant(n, Scalar(1) / n), cap);
  VectorX<Scalar> y = w, w_prev = w;
  Scalar momentum(1);
  for (int it = 1; it <= options.max_iterations; ++it) {
    w_prev = w;
    w = project_capped_simplex(y - step * (Q * y - b), cap);
    const Scalar next = (Scalar(1) + std::sqrt(Scalar(1) + Scalar(4) * momentum * momentum)) / Scalar(2);
    y = w + ((momentum - Scalar(1)) / next) * (w - w_prev);
    momentum = next;
    // Restart acceleration when the objective goes up.
    if (detail::qp_objective(Q, b, w) > detail::qp_objective(Q, b, w_prev)) {
      y = w;
      momentum = Scalar(1);
    }
    if (it % 25 == 0 || it == options.max_iterations) {
      VectorX<Scalar> polished = w;
      if (detail::polish(Q, b, cap, polished) &&
          detail::qp_residual(Q, b, polished, step, cap) <= tol &&
          detail::qp_objective(Q, b, polished) <= detail::qp_objective(Q, b, w) + tol * tol) {
        w = polished;
      }
      const Scalar residual = detail::qp_residual(Q, b, w, step, cap);
      if (residual <= tol) {
        result.weights = w;
        result.objective = detail::qp_objective(Q, b, w);
        result.kkt_residual = residual;
        result.iterations = it;
        return result;
      }
    }
  }
  const Scalar residual = detail::qp_residual(Q, b, w, step, cap);
  throw SolverError("QP did not converge; KKT residual " + std::to_string(static_cast<double>(residual)),
                    static_cast<double>(residual));
}

}  // namespace weightflow
