#include "lp.hpp"

#include <cmath>
#include <limits>

#include "linalg.hpp"

namespace daeopt {

namespace {

constexpr double kPivotTol = 1e-9;
constexpr double kReducedCostTol = 1e-9;
constexpr int kMaxPivots = 20000;

/// Dense tableau kept in canonical form (basis columns = identity).
class Tableau {
 public:
  Tableau(Matrix rows, Vector rhs, std::vector<int> basis, int num_real_cols)
      : t_(std::move(rows)), rhs_(std::move(rhs)), basis_(std::move(basis)),
        num_real_cols_(num_real_cols) {}

  int rows() const { return static_cast<int>(t_.rows()); }
  int cols() const { return static_cast<int>(t_.cols()); }
  const std::vector<int>& basis() const { return basis_; }
  double rhs(int r) const { return rhs_[r]; }

  // Maximize obj over the tableau with Bland's rule.
  // allowed(j) == false bars column j from entering.
  template <typename Allowed>
  LpStatus maximize(const Vector& obj, const Allowed& allowed) {
    for (int iter = 0; iter < kMaxPivots; ++iter) {
      int entering = -1;
      for (int j = 0; j < cols(); ++j) {
        if (!allowed(j) || is_basic(j)) continue;
        if (reduced_cost(obj, j) > kReducedCostTol) {
          entering = j;
          break;  // Bland: smallest index
        }
      }
      if (entering < 0) return LpStatus::kOptimal;

      int leave_row = -1;
      double best_ratio = std::numeric_limits<double>::infinity();
      for (int r = 0; r < rows(); ++r) {
        const double a = t_(r, entering);
        if (a > kPivotTol) {
          const double ratio = rhs_[r] / a;
          if (ratio < best_ratio - 1e-12 ||
              (ratio < best_ratio + 1e-12 &&
               (leave_row < 0 || basis_[r] < basis_[leave_row]))) {
            best_ratio = ratio;
            leave_row = r;
          }
        }
      }
      if (leave_row < 0) return LpStatus::kUnbounded;
      pivot(leave_row, entering);
    }
    throw std::runtime_error("simplex did not terminate");
  }

  double reduced_cost(const Vector& obj, int j) const {
    double z = 0.0;
    for (int r = 0; r < rows(); ++r) z += obj[basis_[r]] * t_(r, j);
    return obj[j] - z;
  }

  double objective_value(const Vector& obj) const {
    double v = 0.0;
    for (int r = 0; r < rows(); ++r) v += obj[basis_[r]] * rhs_[r];
    return v;
  }

  bool is_basic(int j) const {
    for (int r = 0; r < rows(); ++r) {
      if (basis_[r] == j) return true;
    }
    return false;
  }

  void pivot(int r, int j) {
    const double piv = t_(r, j);
    t_.row(r) /= piv;
    rhs_[r] /= piv;
    for (int i = 0; i < rows(); ++i) {
      if (i == r) continue;
      const double f = t_(i, j);
      if (f != 0.0) {
        t_.row(i) -= f * t_.row(r);
        rhs_[i] -= f * rhs_[r];
      }
    }
    basis_[r] = j;
  }

  // Pivot a basic artificial out of row r onto any allowed column; returns
  // false when the whole row is zero there (redundant row).
  template <typename Allowed>
  bool pivot_out(int r, const Allowed& allowed) {
    for (int j = 0; j < cols(); ++j) {
      if (!allowed(j)) continue;
      if (std::abs(t_(r, j)) > kPivotTol) {
        pivot(r, j);
        return true;
      }
    }
    return false;
  }

  void drop_row(int r) {
    const int m = rows();
    Matrix nt(m - 1, cols());
    Vector nr(m - 1);
    std::vector<int> nb;
    nb.reserve(static_cast<size_t>(m) - 1);
    int k = 0;
    for (int i = 0; i < m; ++i) {
      if (i == r) continue;
      nt.row(k) = t_.row(i);
      nr[k] = rhs_[i];
      nb.push_back(basis_[i]);
      ++k;
    }
    t_ = std::move(nt);
    rhs_ = std::move(nr);
    basis_ = std::move(nb);
  }

  double value_of(int j) const {
    for (int r = 0; r < rows(); ++r) {
      if (basis_[r] == j) return rhs_[r];
    }
    return 0.0;
  }

 private:
  Matrix t_;
  Vector rhs_;
  std::vector<int> basis_;
  int num_real_cols_;
};

struct StandardForm {
  // Row = a^T zs (+ slack) (+ artificial) = rhs, all columns >= 0.
  Matrix rows;          // m x ncols (split vars + slacks + artificials)
  Vector rhs;           // >= 0
  std::vector<int> basis;
  int n = 0;            // original variable count (split: columns 2n)
  int num_slacks = 0;
  int num_art = 0;
  std::vector<int> row_sign;        // +1 kept, -1 flipped
  std::vector<int> row_kind;        // 0 = user ineq, 1 = upper bound, 2 = lower bound, 3 = eq
  std::vector<int> row_ref;         // index into the kind's original list
};

StandardForm build_standard_form(const LpProblem& p) {
  const int n = p.num_vars();
  struct Row {
    Vector a;
    double b;
    bool eq;
    int kind;
    int ref;
  };
  std::vector<Row> rows;
  for (int i = 0; i < p.ineq_a.rows(); ++i)
    rows.push_back({p.ineq_a.row(i).transpose(), p.ineq_b[i], false, 0, i});
  if (p.upper.size() > 0) {
    for (int i = 0; i < n; ++i) {
      if (std::isfinite(p.upper[i])) {
        Vector e = Vector::Zero(n);
        e[i] = 1.0;
        rows.push_back({e, p.upper[i], false, 1, i});
      }
    }
  }
  if (p.lower.size() > 0) {
    for (int i = 0; i < n; ++i) {
      if (std::isfinite(p.lower[i])) {
        Vector e = Vector::Zero(n);
        e[i] = -1.0;
        rows.push_back({e, -p.lower[i], false, 2, i});
      }
    }
  }
  for (int i = 0; i < p.eq_a.rows(); ++i)
    rows.push_back({p.eq_a.row(i).transpose(), p.eq_b[i], true, 3, i});

  const int m = static_cast<int>(rows.size());
  int num_slacks = 0;
  for (const auto& r : rows) num_slacks += r.eq ? 0 : 1;

  StandardForm sf;
  sf.n = n;
  sf.num_slacks = num_slacks;

  // First pass: flip rows to rhs >= 0, decide which need artificials.
  std::vector<int> slack_col(m, -1), art_col(m, -1);
  int col = 2 * n;
  int slack_idx = 0;
  std::vector<double> sign(m, 1.0);
  for (int r = 0; r < m; ++r) {
    if (!rows[r].eq) slack_col[r] = col + slack_idx++;
  }
  col += num_slacks;
  int num_art = 0;
  for (int r = 0; r < m; ++r) {
    sign[r] = rows[r].b < 0 ? -1.0 : 1.0;
    const bool slack_is_basis = !rows[r].eq && sign[r] > 0;
    if (!slack_is_basis) art_col[r] = col + num_art++;
  }
  sf.num_art = num_art;
  const int ncols = 2 * n + num_slacks + num_art;

  sf.rows = Matrix::Zero(m, ncols);
  sf.rhs = Vector::Zero(m);
  sf.basis.assign(static_cast<size_t>(m), -1);
  for (int r = 0; r < m; ++r) {
    const double s = sign[r];
    for (int j = 0; j < n; ++j) {
      const double a = s * rows[r].a[j];
      sf.rows(r, j) = a;
      sf.rows(r, n + j) = -a;
    }
    if (slack_col[r] >= 0) sf.rows(r, slack_col[r]) = s;
    if (art_col[r] >= 0) sf.rows(r, art_col[r]) = 1.0;
    sf.rhs[r] = s * rows[r].b;
    sf.basis[static_cast<size_t>(r)] = art_col[r] >= 0 ? art_col[r] : slack_col[r];
    sf.row_sign.push_back(static_cast<int>(s));
    sf.row_kind.push_back(rows[r].kind);
    sf.row_ref.push_back(rows[r].ref);
  }
  return sf;
}

}  // namespace

void LpProblem::validate() const {
  const int n = num_vars();
  if (ineq_a.rows() != ineq_b.size() || (ineq_a.rows() > 0 && ineq_a.cols() != n))
    throw InputError("lp: inequality block dimension mismatch");
  if (eq_a.rows() != eq_b.size() || (eq_a.rows() > 0 && eq_a.cols() != n))
    throw InputError("lp: equality block dimension mismatch");
  if (lower.size() > 0 && lower.size() != n) throw InputError("lp: lower bound size mismatch");
  if (upper.size() > 0 && upper.size() != n) throw InputError("lp: upper bound size mismatch");
}

LpResult lp_solve(const LpProblem& p) {
  p.validate();
  const int n = p.num_vars();
  StandardForm sf = build_standard_form(p);
  const int ncols = static_cast<int>(sf.rows.cols());
  const int art_begin = ncols - sf.num_art;

  Tableau tab(sf.rows, sf.rhs, sf.basis, ncols);

  // Canonicalize: rows with artificial basis are already identity there; rows
  // with slack basis may carry sign -1 only when flipped, which cannot happen
  // for basis slacks by construction.

  LpResult res;

  if (sf.num_art > 0) {
    Vector phase1 = Vector::Zero(ncols);
    for (int j = art_begin; j < ncols; ++j) phase1[j] = -1.0;
    const LpStatus st = tab.maximize(phase1, [](int) { return true; });
    (void)st;  // phase 1 is always bounded
    if (tab.objective_value(phase1) < -1e-7) {
      res.status = LpStatus::kInfeasible;
      return res;
    }
    // Drive leftover artificials out of the basis; a row whose artificial
    // cannot leave is redundant and gets dropped.
    int r = 0;
    while (r < tab.rows()) {
      if (tab.basis()[static_cast<size_t>(r)] >= art_begin) {
        if (!tab.pivot_out(r, [&](int j) { return j < art_begin; })) {
          tab.drop_row(r);
          continue;
        }
      }
      ++r;
    }
  }

  Vector phase2 = Vector::Zero(ncols);
  for (int j = 0; j < n; ++j) {
    phase2[j] = p.objective[j];
    phase2[n + j] = -p.objective[j];
  }
  const LpStatus st = tab.maximize(phase2, [&](int j) { return j < art_begin; });
  if (st == LpStatus::kUnbounded) {
    res.status = LpStatus::kUnbounded;
    return res;
  }

  res.status = LpStatus::kOptimal;
  res.point = Vector::Zero(n);
  for (int j = 0; j < n; ++j) res.point[j] = tab.value_of(j) - tab.value_of(n + j);
  res.objective = p.objective.size() > 0 ? p.objective.dot(res.point) : 0.0;

  // Dual recovery: with final basis columns B, solve R_B^T y = c_B in least
  // squares over the original standard-form rows (dropped rows were redundant
  // combinations of survivors, the min-norm solution spreads them a valid dual).
  {
    const int m0 = static_cast<int>(sf.rows.rows());
    const int mb = tab.rows();
    Matrix rb(m0, mb);
    Vector cb(mb);
    for (int r = 0; r < mb; ++r) {
      const int j = tab.basis()[static_cast<size_t>(r)];
      rb.col(r) = sf.rows.col(j);
      cb[r] = phase2[j];
    }
    Vector y = Vector::Zero(m0);
    if (mb > 0) {
      LeastSquaresResult ls = least_squares(rb.transpose(), cb);
      y = ls.solution;
    }
    // Undo row sign normalization.
    for (int r = 0; r < m0; ++r) y[r] *= sf.row_sign[static_cast<size_t>(r)];

    res.dual_ineq = Vector::Zero(p.ineq_a.rows());
    res.dual_eq = Vector::Zero(p.eq_a.rows());
    res.dual_upper = Vector::Zero(n);
    res.dual_lower = Vector::Zero(n);
    for (int r = 0; r < m0; ++r) {
      const int ref = sf.row_ref[static_cast<size_t>(r)];
      switch (sf.row_kind[static_cast<size_t>(r)]) {
        case 0:
          res.dual_ineq[ref] = y[r];
          break;
        case 1:
          res.dual_upper[ref] = y[r];
          break;
        case 2:
          res.dual_lower[ref] = y[r];
          break;
        case 3:
          res.dual_eq[ref] = y[r];
          break;
      }
    }
  }
  return res;
}

ConeTriviality cone_coordinates_trivial(const Matrix& ineq, const Matrix& eq,
                                        const std::vector<int>& coords, double nonzero_tol) {
  const int n = static_cast<int>(ineq.cols() > 0 ? ineq.cols() : eq.cols());
  ConeTriviality out;
  if (n == 0) return out;

  LpProblem lp;
  lp.ineq_a = ineq;
  lp.ineq_b = Vector::Zero(ineq.rows());
  lp.eq_a = eq;
  lp.eq_b = Vector::Zero(eq.rows());
  lp.lower = Vector::Constant(n, -1.0);
  lp.upper = Vector::Constant(n, 1.0);

  for (int i : coords) {
    for (int s = 0; s < 2; ++s) {
      Vector c = Vector::Zero(n);
      c[i] = s == 0 ? 1.0 : -1.0;
      lp.objective = c;
      LpResult r = lp_solve(lp);
      if (r.status == LpStatus::kOptimal && r.objective > nonzero_tol) {
        out.trivial = false;
        out.witness = r.point;
        return out;
      }
    }
  }
  return out;
}

ConeTriviality cone_is_trivial(const Matrix& ineq, const Matrix& eq, double nonzero_tol) {
  const int n = static_cast<int>(ineq.cols() > 0 ? ineq.cols() : eq.cols());
  std::vector<int> coords;
  coords.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) coords.push_back(i);
  return cone_coordinates_trivial(ineq, eq, coords, nonzero_tol);
}

}  // namespace daeopt
