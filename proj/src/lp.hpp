#pragma once

#include <optional>
#include <vector>

#include "expr.hpp"

namespace daeopt {

/// Dense LP: maximize objective^T z subject to ineq_a z <= ineq_b,
/// eq_a z = eq_b and optional per-variable bounds (+-inf for none).
struct LpProblem {
  Vector objective;
  Matrix ineq_a;
  Vector ineq_b;
  Matrix eq_a;
  Vector eq_b;
  Vector lower;  // empty = unbounded below
  Vector upper;  // empty = unbounded above

  int num_vars() const { return static_cast<int>(objective.size()); }
  void validate() const;
};

enum class LpStatus { kOptimal, kInfeasible, kUnbounded };

struct LpResult {
  LpStatus status = LpStatus::kInfeasible;
  Vector point;
  double objective = 0.0;
  // Duals at optimality (maximization convention: ineq/bound duals >= 0).
  Vector dual_ineq;
  Vector dual_eq;
  Vector dual_upper;
  Vector dual_lower;
};

/// Two-phase dense tableau simplex with Bland's rule. Deterministic.
LpResult lp_solve(const LpProblem& p);

struct ConeTriviality {
  bool trivial = true;
  Vector witness;  // nonzero member when trivial == false
};

/// Is {z : ineq z <= 0, eq z = 0} = {0}?  Certified by per-coordinate
/// max/min LPs under the box normalization |z_i| <= 1.
ConeTriviality cone_is_trivial(const Matrix& ineq, const Matrix& eq, double nonzero_tol = 1e-7);

/// Same question asked only of the selected coordinates: do all members have
/// z_i = 0 for every i in coords?  Witness has |z_i| > tol for some i in coords.
ConeTriviality cone_coordinates_trivial(const Matrix& ineq, const Matrix& eq,
                                        const std::vector<int>& coords,
                                        double nonzero_tol = 1e-7);

}  // namespace daeopt
