#pragma once

#include <optional>

#include "expr.hpp"
#include "linalg.hpp"

namespace daeopt {

/// Damped Newton on the sub-block [offset, offset+dim) of `point`, driving
/// map(point) to zero. Returns the solved block or nullopt on non-convergence.
inline std::optional<Vector> solve_block_newton(const VectorFunction& map, Vector point,
                                                int offset, int dim, int max_iter = 30,
                                                double tol = 1e-10) {
  if (dim == 0) {
    const Vector r = map.eval(point);
    if (r.lpNorm<Eigen::Infinity>() <= tol) return Vector(0);
    return std::nullopt;
  }
  double res_norm = std::numeric_limits<double>::infinity();
  for (int it = 0; it < max_iter; ++it) {
    Vector r;
    try {
      r = map.eval(point);
    } catch (const EvalDomainError&) {
      return std::nullopt;
    }
    res_norm = r.lpNorm<Eigen::Infinity>();
    if (res_norm <= tol) return point.segment(offset, dim);
    Matrix j;
    try {
      j = map.jacobian(point);
    } catch (const EvalDomainError&) {
      return std::nullopt;
    }
    const Matrix jb = j.middleCols(offset, dim);
    LeastSquaresResult ls = least_squares(jb, -r);
    Vector step = ls.solution;
    if (!step.allFinite()) return std::nullopt;
    // Damping: halve until the residual improves.
    double alpha = 1.0;
    bool moved = false;
    for (int h = 0; h < 10; ++h) {
      Vector trial = point;
      trial.segment(offset, dim) += alpha * step;
      try {
        const double trial_norm = map.eval(trial).lpNorm<Eigen::Infinity>();
        if (trial_norm < res_norm) {
          point = trial;
          moved = true;
          break;
        }
      } catch (const EvalDomainError&) {
        // shrink and retry
      }
      alpha *= 0.5;
    }
    if (!moved) return std::nullopt;
  }
  try {
    if (map.eval(point).lpNorm<Eigen::Infinity>() <= tol) return point.segment(offset, dim);
  } catch (const EvalDomainError&) {
  }
  return std::nullopt;
}

}  // namespace daeopt
