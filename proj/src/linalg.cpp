#include "linalg.hpp"

#include <Eigen/SVD>

namespace daeopt {

int numerical_rank(const Matrix& m, double rel_tol) {
  if (m.rows() == 0 || m.cols() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(m);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0) return 0;
  const double cutoff = rel_tol * sv[0];
  int r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv[i] > cutoff && sv[i] > 0.0) ++r;
  }
  return r;
}

LeastSquaresResult least_squares(const Matrix& a, const Vector& b) {
  if (a.rows() == 0) throw InputError("least_squares: empty matrix");
  if (a.rows() != b.size()) throw InputError("least_squares: dimension mismatch");
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(1e-12);
  LeastSquaresResult r;
  r.solution = svd.solve(b);
  r.residual_norm = (a * r.solution - b).norm();
  return r;
}

Matrix null_space(const Matrix& m, double rel_tol) {
  const Eigen::Index n = m.cols();
  if (m.rows() == 0) return Matrix::Identity(n, n);
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double cutoff = sv.size() > 0 ? rel_tol * sv[0] : 0.0;
  int r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv[i] > cutoff && sv[i] > 0.0) ++r;
  }
  return svd.matrixV().rightCols(n - r);
}

}  // namespace daeopt
