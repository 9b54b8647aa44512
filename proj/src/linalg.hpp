#pragma once

#include <Eigen/Core>

#include "expr.hpp"

namespace daeopt {

/// Numerical rank: singular values below rel_tol * sigma_max count as zero.
int numerical_rank(const Matrix& m, double rel_tol = 1e-8);

struct LeastSquaresResult {
  Vector solution;       // minimum-norm when rank deficient
  double residual_norm;  // |A x - b|_2
};

LeastSquaresResult least_squares(const Matrix& a, const Vector& b);

/// Orthonormal basis of the null space of m (columns), same threshold rule.
Matrix null_space(const Matrix& m, double rel_tol = 1e-8);

}  // namespace daeopt
