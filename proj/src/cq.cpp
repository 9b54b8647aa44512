#include "cq.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SVD>

#include "linalg.hpp"
#include "lp.hpp"
#include "newton.hpp"
#include "rng.hpp"

namespace daeopt {

std::string to_string(CqStatus s) {
  switch (s) {
    case CqStatus::kCertified:
      return "certified";
    case CqStatus::kRefuted:
      return "refuted";
    case CqStatus::kCandidateRefuted:
      return "candidate-refuted";
    case CqStatus::kInconclusive:
      return "inconclusive";
  }
  return "?";
}

const CqVerdict* CqLadderReport::find(const std::string& name) const {
  for (const auto& v : verdicts) {
    if (v.name == name) return &v;
  }
  return nullptr;
}

namespace {

struct SystemAtPoint {
  Matrix jac;       // m x n
  Vector value;     // map(point)
  Vector u;         // control block of the point
  int m = 0;
  int n = 0;
  int u_offset = 0;
  int u_dim = 0;
};

SystemAtPoint evaluate_system(const ConstraintSystem& sys, const Vector& point,
                              const CqOptions& opts) {
  sys.validate();
  if (point.size() != sys.layout.total_dim())
    throw InputError("cq: point dimension does not match the system layout");
  SystemAtPoint at;
  at.jac = sys.map.jacobian(point);
  at.value = sys.map.eval(point);
  at.m = sys.map.output_dim();
  at.n = sys.layout.total_dim();
  const int cb = sys.control_block();
  at.u_offset = sys.block_offset(cb);
  at.u_dim = sys.block_dim(cb);
  at.u = point.segment(at.u_offset, at.u_dim);

  if (!sys.target.contains(at.value, opts.feas_tol).inside)
    throw InputError("cq: point is infeasible (map value misses the target set)");
  if (!sys.control_set.contains(at.u, opts.feas_tol).inside)
    throw InputError("cq: point is infeasible (control outside the control set)");
  return at;
}

/// H-representation of the multiplier system over z = (lambda, eta):
///   lambda in target-cone piece, eta in control-cone piece,
///   (J^T lambda)_c = 0 on zero slots (and alpha slots when pinned),
///   (J^T lambda)_c + eta_c = 0 on the control slot.
struct MultSystem {
  Matrix ineq;
  Matrix eq;
  int m = 0;
  int eta_dim = 0;
};

MultSystem build_mult_system(const ConstraintSystem& sys, const SystemAtPoint& at,
                             const PolyCone& lambda_cone, const PolyCone& eta_cone,
                             bool pin_alpha, const Matrix& extra_lambda_ineq) {
  MultSystem ms;
  ms.m = at.m;
  ms.eta_dim = at.u_dim;
  const int nz = ms.m + ms.eta_dim;

  const Matrix& la = lambda_cone.h_ineq();
  const Matrix& le = lambda_cone.h_eq();
  const Matrix& ea = eta_cone.h_ineq();
  const Matrix& ee = eta_cone.h_eq();

  std::vector<int> pinned = sys.zero_coordinates();
  if (pin_alpha) {
    for (int c : sys.alpha_coordinates()) pinned.push_back(c);
  }
  std::sort(pinned.begin(), pinned.end());

  const Eigen::Index n_ineq = la.rows() + ea.rows() + extra_lambda_ineq.rows();
  const Eigen::Index n_eq =
      le.rows() + ee.rows() + static_cast<Eigen::Index>(pinned.size()) + at.u_dim;
  ms.ineq = Matrix::Zero(n_ineq, nz);
  ms.eq = Matrix::Zero(n_eq, nz);

  Eigen::Index r = 0;
  ms.ineq.block(r, 0, la.rows(), ms.m) = la;
  r += la.rows();
  ms.ineq.block(r, ms.m, ea.rows(), ms.eta_dim) = ea;
  r += ea.rows();
  ms.ineq.block(r, 0, extra_lambda_ineq.rows(), ms.m) = extra_lambda_ineq;

  r = 0;
  ms.eq.block(r, 0, le.rows(), ms.m) = le;
  r += le.rows();
  ms.eq.block(r, ms.m, ee.rows(), ms.eta_dim) = ee;
  r += ee.rows();
  for (int c : pinned) {
    ms.eq.block(r, 0, 1, ms.m) = at.jac.col(c).transpose();
    ++r;
  }
  for (int k = 0; k < at.u_dim; ++k) {
    ms.eq.block(r, 0, 1, ms.m) = at.jac.col(at.u_offset + k).transpose();
    ms.eq(r, ms.m + k) = 1.0;
    ++r;
  }
  return ms;
}

double max_violation(const MultSystem& ms, const Vector& z) {
  double v = 0.0;
  for (int i = 0; i < ms.ineq.rows(); ++i) v = std::max(v, ms.ineq.row(i).dot(z));
  for (int i = 0; i < ms.eq.rows(); ++i) v = std::max(v, std::abs(ms.eq.row(i).dot(z)));
  return v;
}

struct PieceCombos {
  ConeUnion target_cones;
  ConeUnion control_cones;
  bool outer = false;
};

PieceCombos limiting_combos(const ConstraintSystem& sys, const SystemAtPoint& at,
                            const CqOptions& opts) {
  PieceCombos pc;
  pc.target_cones = limiting_normal_cone_outer(sys.target, at.value, opts.feas_tol);
  pc.control_cones = limiting_normal_cone_outer(sys.control_set, at.u, opts.feas_tol);
  pc.outer = !pc.target_cones.exact || !pc.control_cones.exact;
  const size_t combos = pc.target_cones.pieces.size() * pc.control_cones.pieces.size();
  if (combos > static_cast<size_t>(opts.piece_cap) * static_cast<size_t>(opts.piece_cap))
    throw CapError("cq: too many set pieces to enumerate");
  return pc;
}

std::vector<int> lambda_coords(int m) {
  std::vector<int> c(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) c[i] = i;
  return c;
}

/// Triviality of the lambda part over every piece combination. Returns a
/// certified verdict or a (candidate-)refutation with a validated witness.
CqVerdict triviality_battery(const std::string& name, const ConstraintSystem& sys,
                             const SystemAtPoint& at, const PieceCombos& pc, bool pin_alpha,
                             const Matrix& extra_lambda_ineq, const CqOptions& opts) {
  CqVerdict v;
  v.name = name;
  std::optional<Vector> candidate;
  for (const auto& tc : pc.target_cones.pieces) {
    for (const auto& cc : pc.control_cones.pieces) {
      MultSystem ms = build_mult_system(sys, at, tc, cc, pin_alpha, extra_lambda_ineq);
      ConeTriviality t = cone_coordinates_trivial(ms.ineq, ms.eq, lambda_coords(at.m), opts.tol);
      if (!t.trivial) {
        const double viol = max_violation(ms, t.witness);
        Vector lambda = t.witness.head(at.m);
        if (viol <= opts.witness_tol && lambda.lpNorm<Eigen::Infinity>() >= 1e-6) {
          if (!pc.outer) {
            v.status = CqStatus::kRefuted;
            v.witness_multiplier = lambda;
            return v;
          }
          if (!candidate) candidate = lambda;
        } else {
          v.notes.push_back("discarded a witness that failed re-validation");
        }
      }
    }
  }
  if (candidate) {
    v.status = CqStatus::kCandidateRefuted;
    v.witness_multiplier = *candidate;
    v.notes.push_back("witness found only via outer-approximated normal cones");
    return v;
  }
  v.status = CqStatus::kCertified;
  return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// Definition 2.5 battery

CqVerdict check_nnamcq(const ConstraintSystem& sys, const Vector& point, const CqOptions& opts) {
  SystemAtPoint at = evaluate_system(sys, point, opts);
  PieceCombos pc = limiting_combos(sys, at, opts);
  return triviality_battery("NNAMCQ", sys, at, pc, /*pin_alpha=*/true, Matrix(0, at.m), opts);
}

CqVerdict check_mfc(const ConstraintSystem& sys, const Vector& point, const CqOptions& opts) {
  SystemAtPoint at = evaluate_system(sys, point, opts);
  PieceCombos pc = limiting_combos(sys, at, opts);
  return triviality_battery("MFC", sys, at, pc, /*pin_alpha=*/false, Matrix(0, at.m), opts);
}

CqVerdict check_wbcq(const ConstraintSystem& sys, const Vector& point, const CqOptions& opts) {
  SystemAtPoint at = evaluate_system(sys, point, opts);
  PieceCombos pc = limiting_combos(sys, at, opts);
  CqVerdict v;
  v.name = "WBCQ";
  const std::vector<int> alpha = sys.alpha_coordinates();
  if (alpha.empty()) {
    v.status = CqStatus::kCertified;
    v.notes.push_back("no state slot: the implication is vacuous");
    return v;
  }
  std::optional<std::pair<Vector, Vector>> candidate;  // (alpha, lambda)
  const int nz = at.m + at.u_dim;
  for (const auto& tc : pc.target_cones.pieces) {
    for (const auto& cc : pc.control_cones.pieces) {
      MultSystem ms = build_mult_system(sys, at, tc, cc, /*pin_alpha=*/false, Matrix(0, at.m));
      LpProblem lp;
      lp.ineq_a = ms.ineq;
      lp.ineq_b = Vector::Zero(ms.ineq.rows());
      lp.eq_a = ms.eq;
      lp.eq_b = Vector::Zero(ms.eq.rows());
      lp.lower = Vector::Constant(nz, -1.0);
      lp.upper = Vector::Constant(nz, 1.0);
      for (int c : alpha) {
        for (int s = 0; s < 2; ++s) {
          Vector obj = Vector::Zero(nz);
          obj.head(at.m) = (s == 0 ? 1.0 : -1.0) * at.jac.col(c);
          lp.objective = obj;
          LpResult r = lp_solve(lp);
          if (r.status == LpStatus::kOptimal && r.objective > opts.tol) {
            Vector lambda = r.point.head(at.m);
            Vector alpha_val(alpha.size());
            for (size_t k = 0; k < alpha.size(); ++k)
              alpha_val[static_cast<Eigen::Index>(k)] = at.jac.col(alpha[k]).dot(lambda);
            if (max_violation(ms, r.point) <= opts.witness_tol) {
              if (!pc.outer) {
                v.status = CqStatus::kRefuted;
                v.witness_multiplier = lambda;
                v.witness_alpha = alpha_val;
                return v;
              }
              if (!candidate) candidate = {alpha_val, lambda};
            }
          }
        }
      }
    }
  }
  if (candidate) {
    v.status = CqStatus::kCandidateRefuted;
    v.witness_alpha = candidate->first;
    v.witness_multiplier = candidate->second;
    v.notes.push_back("witness found only via outer-approximated normal cones");
    return v;
  }
  v.status = CqStatus::kCertified;
  return v;
}

CqVerdict check_ccq(const ConstraintSystem& sys, const Vector& point, const CqOptions& opts) {
  CqVerdict mfc = check_mfc(sys, point, opts);
  CqVerdict v;
  v.name = "CCQ";
  if (mfc.status == CqStatus::kRefuted || mfc.status == CqStatus::kCandidateRefuted) {
    v.status = mfc.status;
    v.witness_multiplier = mfc.witness_multiplier;
    v.notes.push_back("refuted through the MFC premise (a nonzero multiplier with beta = 0)");
    return v;
  }
  SystemAtPoint at = evaluate_system(sys, point, opts);
  if (at.m > 12) {
    v.status = CqStatus::kInconclusive;
    v.notes.push_back("sign-pattern enumeration cap exceeded");
    return v;
  }
  ConeUnion target_cones = limiting_normal_cone_outer(sys.target, at.value, opts.feas_tol);
  PolyCone u_clarke = clarke_normal_cone(sys.control_set, at.u, opts.feas_tol);

  // Coordinates entering the norm bound: every non-alpha slot.
  std::vector<int> normed = sys.zero_coordinates();
  {
    for (int k = 0; k < at.u_dim; ++k) normed.push_back(at.u_offset + k);
    std::sort(normed.begin(), normed.end());
  }
  const int kn = static_cast<int>(normed.size());
  const int nz = at.m + at.u_dim + kn;  // (lambda, eta, t)

  double best = 0.0;
  for (const auto& tc : target_cones.pieces) {
    MultSystem base = build_mult_system(sys, at, tc, u_clarke, /*pin_alpha=*/false,
                                        Matrix(0, at.m));
    // Strip the linking equalities for the normed slots: here the slot values
    // are bounded, not pinned. Rebuild: keep only cone rows.
    const Matrix& la = tc.h_ineq();
    const Matrix& le = tc.h_eq();
    const Matrix& ea = u_clarke.h_ineq();
    const Matrix& ee = u_clarke.h_eq();

    for (uint64_t pattern = 0; pattern < (uint64_t{1} << at.m); ++pattern) {
      LpProblem lp;
      const Eigen::Index n_ineq = la.rows() + ea.rows() + 2 * kn + 1 + at.m;
      const Eigen::Index n_eq = le.rows() + ee.rows();
      lp.ineq_a = Matrix::Zero(n_ineq, nz);
      lp.ineq_b = Vector::Zero(n_ineq);
      lp.eq_a = Matrix::Zero(n_eq, nz);
      lp.eq_b = Vector::Zero(n_eq);
      Eigen::Index r = 0;
      lp.ineq_a.block(r, 0, la.rows(), at.m) = la;
      r += la.rows();
      lp.ineq_a.block(r, at.m, ea.rows(), at.u_dim) = ea;
      r += ea.rows();
      for (int k = 0; k < kn; ++k) {
        const int c = normed[static_cast<size_t>(k)];
        // value v_c = (J^T lambda)_c (+ eta when c is the control slot)
        Vector row = Vector::Zero(nz);
        row.head(at.m) = at.jac.col(c);
        if (c >= at.u_offset && c < at.u_offset + at.u_dim) row[at.m + (c - at.u_offset)] = 1.0;
        lp.ineq_a.row(r) = row.transpose();
        lp.ineq_a(r, at.m + at.u_dim + k) = -1.0;
        ++r;
        lp.ineq_a.row(r) = -row.transpose();
        lp.ineq_a(r, at.m + at.u_dim + k) = -1.0;
        ++r;
      }
      for (int k = 0; k < kn; ++k) lp.ineq_a(r, at.m + at.u_dim + k) = 1.0;
      lp.ineq_b[r] = 1.0;
      ++r;
      for (int i = 0; i < at.m; ++i) {
        const double s = (pattern >> i) & 1 ? -1.0 : 1.0;
        lp.ineq_a(r, i) = -s;  // s * lambda_i >= 0
        ++r;
      }
      Eigen::Index re = 0;
      lp.eq_a.block(re, 0, le.rows(), at.m) = le;
      re += le.rows();
      lp.eq_a.block(re, at.m, ee.rows(), at.u_dim) = ee;

      lp.objective = Vector::Zero(nz);
      for (int i = 0; i < at.m; ++i) lp.objective[i] = (pattern >> i) & 1 ? -1.0 : 1.0;
      lp.lower = Vector::Constant(nz, -std::numeric_limits<double>::infinity());
      for (int k = 0; k < kn; ++k) lp.lower[at.m + at.u_dim + k] = 0.0;
      lp.upper = Vector::Constant(nz, std::numeric_limits<double>::infinity());

      LpResult res = lp_solve(lp);
      if (res.status == LpStatus::kUnbounded) {
        v.status = CqStatus::kInconclusive;
        v.notes.push_back("modulus program unbounded despite the MFC certificate");
        return v;
      }
      if (res.status == LpStatus::kOptimal) best = std::max(best, res.objective);
    }
  }
  v.status = CqStatus::kCertified;
  v.modulus = best;
  if (!target_cones.exact)
    v.notes.push_back("modulus computed over outer-approximated normal cones");
  return v;
}

CqVerdict check_linear_cq(const ConstraintSystem& sys) {
  CqVerdict v;
  v.name = "Linear CQ";
  const std::vector<bool> aff = sys.map.is_affine();
  for (size_t i = 0; i < aff.size(); ++i) {
    if (!aff[i]) {
      v.status = CqStatus::kRefuted;
      v.notes.push_back("component " + std::to_string(i) + " of the constraint map is not affine");
      return v;
    }
  }
  v.status = CqStatus::kCertified;
  return v;
}

// ---------------------------------------------------------------------------
// FOSCMS / SOSCMS

namespace {

struct CriticalFaceContext {
  Matrix w;  // inequality rows of the critical cone (over d)
  Matrix e;  // equality rows
};

std::optional<Vector> face_representative(const CriticalFaceContext& cc, uint64_t mask, int n,
                                          double tol) {
  const int w_rows = static_cast<int>(cc.w.rows());
  std::vector<int> tight, strict;
  for (int i = 0; i < w_rows; ++i) {
    if ((mask >> i) & 1)
      tight.push_back(i);
    else
      strict.push_back(i);
  }
  const Eigen::Index n_eq = cc.e.rows() + static_cast<Eigen::Index>(tight.size());
  if (strict.empty()) {
    // Subspace face: sweep coordinates for any nonzero direction.
    LpProblem lp;
    lp.eq_a = Matrix::Zero(n_eq, n);
    lp.eq_b = Vector::Zero(n_eq);
    lp.eq_a.topRows(cc.e.rows()) = cc.e;
    for (size_t k = 0; k < tight.size(); ++k)
      lp.eq_a.row(cc.e.rows() + static_cast<Eigen::Index>(k)) = cc.w.row(tight[k]);
    lp.ineq_a = Matrix(0, n);
    lp.ineq_b = Vector(0);
    lp.lower = Vector::Constant(n, -1.0);
    lp.upper = Vector::Constant(n, 1.0);
    for (int c = 0; c < n; ++c) {
      for (int s = 0; s < 2; ++s) {
        lp.objective = Vector::Zero(n);
        lp.objective[c] = s == 0 ? 1.0 : -1.0;
        LpResult r = lp_solve(lp);
        if (r.status == LpStatus::kOptimal && r.objective > tol) return r.point;
      }
    }
    return std::nullopt;
  }
  // Maximize the slack of the strict rows.
  LpProblem lp;
  const int nv = n + 1;
  lp.objective = Vector::Zero(nv);
  lp.objective[n] = 1.0;
  lp.eq_a = Matrix::Zero(n_eq, nv);
  lp.eq_b = Vector::Zero(n_eq);
  lp.eq_a.topLeftCorner(cc.e.rows(), n) = cc.e;
  for (size_t k = 0; k < tight.size(); ++k)
    lp.eq_a.block(cc.e.rows() + static_cast<Eigen::Index>(k), 0, 1, n) = cc.w.row(tight[k]);
  lp.ineq_a = Matrix::Zero(static_cast<Eigen::Index>(strict.size()), nv);
  lp.ineq_b = Vector::Zero(static_cast<Eigen::Index>(strict.size()));
  for (size_t k = 0; k < strict.size(); ++k) {
    lp.ineq_a.block(static_cast<Eigen::Index>(k), 0, 1, n) = cc.w.row(strict[k]);
    lp.ineq_a(static_cast<Eigen::Index>(k), n) = 1.0;
  }
  lp.lower = Vector::Constant(nv, -1.0);
  lp.lower[n] = 0.0;
  lp.upper = Vector::Constant(nv, 1.0);
  LpResult r = lp_solve(lp);
  if (r.status != LpStatus::kOptimal || r.objective <= tol) return std::nullopt;
  Vector d = r.point.head(n);
  if (d.lpNorm<Eigen::Infinity>() <= tol) return std::nullopt;
  return d;
}

CqVerdict metric_subregularity_battery(const std::string& name, const ConstraintSystem& sys,
                                       const Vector& point, bool second_order,
                                       const CqOptions& opts) {
  CqVerdict v;
  v.name = name;
  SystemAtPoint at = evaluate_system(sys, point, opts);
  if (at.n > opts.dim_cap) {
    v.status = CqStatus::kInconclusive;
    v.notes.push_back("critical-cone dimension cap exceeded (" + std::to_string(at.n) + " > " +
                      std::to_string(opts.dim_cap) + ")");
    return v;
  }
  const auto target_at = sys.target.contains(at.value, opts.feas_tol);
  const auto control_at = sys.control_set.contains(at.u, opts.feas_tol);
  const bool sets_outer = target_at.active.size() > 1 || control_at.active.size() > 1;

  std::optional<std::pair<Vector, Vector>> candidate;  // (d, lambda)
  bool any_outer_note = false;

  for (const auto& tp : target_at.active) {
    PolyCone t_tan = tangent_cone(sys.target.pieces[static_cast<size_t>(tp.piece)], at.value,
                                  opts.feas_tol);
    for (const auto& up : control_at.active) {
      PolyCone u_tan = tangent_cone(sys.control_set.pieces[static_cast<size_t>(up.piece)], at.u,
                                    opts.feas_tol);
      CriticalFaceContext cc;
      const Matrix& ta = t_tan.h_ineq();
      const Matrix& te = t_tan.h_eq();
      const Matrix& ua = u_tan.h_ineq();
      const Matrix& ue = u_tan.h_eq();
      cc.w = Matrix::Zero(ta.rows() + ua.rows(), at.n);
      cc.e = Matrix::Zero(te.rows() + ue.rows(), at.n);
      cc.w.topRows(ta.rows()) = ta * at.jac;
      cc.w.block(ta.rows(), at.u_offset, ua.rows(), at.u_dim) = ua;
      cc.e.topRows(te.rows()) = te * at.jac;
      cc.e.block(te.rows(), at.u_offset, ue.rows(), at.u_dim) = ue;

      const int w_rows = static_cast<int>(cc.w.rows());
      if (w_rows >= 63 || (uint64_t{1} << w_rows) > static_cast<uint64_t>(opts.subset_cap)) {
        v.status = CqStatus::kInconclusive;
        v.notes.push_back("active-set subset cap exceeded");
        return v;
      }
      for (uint64_t mask = 0; mask < (uint64_t{1} << w_rows); ++mask) {
        std::optional<Vector> rep = face_representative(cc, mask, at.n, opts.tol);
        if (!rep) continue;
        const Vector d = *rep;
        const Vector jd = at.jac * d;
        const Vector du = d.segment(at.u_offset, at.u_dim);

        ConeUnion t_dir = directional_normal_cone_union(sys.target, at.value, jd, opts.feas_tol);
        ConeUnion u_dir = directional_normal_cone_union(sys.control_set, at.u, du, opts.feas_tol);
        if (t_dir.pieces.empty() || u_dir.pieces.empty()) continue;
        const bool outer = sets_outer || !t_dir.exact || !u_dir.exact;

        Matrix extra(0, at.m);
        if (second_order) {
          const Vector q = sys.map.hessian_quadratic_form(point, d);
          extra = Matrix::Zero(1, at.m);
          extra.row(0) = -q.transpose();  // sum_i lambda_i q_i >= 0
        }
        for (const auto& tdc : t_dir.pieces) {
          for (const auto& udc : u_dir.pieces) {
            MultSystem ms = build_mult_system(sys, at, tdc, udc, /*pin_alpha=*/true, extra);
            ConeTriviality t =
                cone_coordinates_trivial(ms.ineq, ms.eq, lambda_coords(at.m), opts.tol);
            if (!t.trivial) {
              Vector lambda = t.witness.head(at.m);
              if (max_violation(ms, t.witness) <= opts.witness_tol &&
                  lambda.lpNorm<Eigen::Infinity>() >= 1e-6) {
                if (!outer) {
                  v.status = CqStatus::kRefuted;
                  v.witness_multiplier = lambda;
                  v.witness_direction = d;
                  return v;
                }
                if (!candidate) candidate = {d, lambda};
                any_outer_note = true;
              }
            }
          }
        }
      }
    }
  }
  if (candidate) {
    v.status = CqStatus::kCandidateRefuted;
    v.witness_direction = candidate->first;
    v.witness_multiplier = candidate->second;
    v.notes.push_back("witness found only via outer-approximated directional cones");
    return v;
  }
  v.status = CqStatus::kCertified;
  if (any_outer_note) v.notes.push_back("outer-approximated pieces were involved");
  return v;
}

}  // namespace

CqVerdict check_foscms(const ConstraintSystem& sys, const Vector& point, const CqOptions& opts) {
  return metric_subregularity_battery("FOSCMS", sys, point, /*second_order=*/false, opts);
}

CqVerdict check_soscms(const ConstraintSystem& sys, const Vector& point, const CqOptions& opts) {
  return metric_subregularity_battery("SOSCMS", sys, point, /*second_order=*/true, opts);
}

// ---------------------------------------------------------------------------
// Sampled rank conditions

namespace {

/// 'z' pinned coordinate (equality row), 'n'/'p' one-sided, 'f' free.
std::string target_kinds_or_throw(const ConstraintSystem& sys, const std::string& who,
                                  bool inequalities_allowed) {
  auto kinds = sys.target.product_kinds();
  if (!kinds)
    throw InputError(who + ": target set must be a product of {0} and half-line factors");
  for (char c : *kinds) {
    if (c == 'z') continue;
    if ((c == 'n' || c == 'p') && inequalities_allowed) continue;
    throw InputError(who + ": unsupported target factor");
  }
  return *kinds;
}

void require_free_controls(const ConstraintSystem& sys, const std::string& who) {
  auto kinds = sys.control_set.product_kinds();
  bool free_set = sys.control_set.tag == SetTag::kWholeSpace;
  if (!free_set && kinds) {
    free_set = std::all_of(kinds->begin(), kinds->end(), [](char c) { return c == 'f'; });
  }
  if (!free_set) throw InputError(who + ": requires an unconstrained control set");
}

std::vector<int> greedy_row_basis(const Matrix& rows, double tol = 1e-9) {
  std::vector<int> basis;
  Matrix acc(0, rows.cols());
  for (int i = 0; i < rows.rows(); ++i) {
    Matrix trial(acc.rows() + 1, rows.cols());
    trial.topRows(acc.rows()) = acc;
    trial.row(acc.rows()) = rows.row(i);
    if (numerical_rank(trial, tol) > numerical_rank(acc, tol)) {
      basis.push_back(i);
      acc = trial;
    }
  }
  return basis;
}

}  // namespace

CqVerdict check_rcpld(const ConstraintSystem& sys, const Vector& point, double delta, int samples,
                      const CqOptions& opts) {
  require_free_controls(sys, "RCPLD");
  const std::string kinds = target_kinds_or_throw(sys, "RCPLD", /*inequalities_allowed=*/true);
  SystemAtPoint at = evaluate_system(sys, point, opts);

  CqVerdict v;
  v.name = "RCPLD";
  v.notes.push_back("sampled: " + std::to_string(samples) + " points, radius " +
                    std::to_string(delta));

  std::vector<int> eq_idx, active_ineq;
  for (int i = 0; i < at.m; ++i) {
    const char k = kinds[static_cast<size_t>(i)];
    if (k == 'z') {
      eq_idx.push_back(i);
    } else {
      // one-sided factor: active iff the map value sits on the boundary
      if (std::abs(at.value[i]) <= opts.feas_tol) active_ineq.push_back(i);
    }
  }

  Matrix eq_grads(static_cast<Eigen::Index>(eq_idx.size()), at.n);
  for (size_t k = 0; k < eq_idx.size(); ++k) eq_grads.row(static_cast<Eigen::Index>(k)) = at.jac.row(eq_idx[k]);
  const int base_rank = numerical_rank(eq_grads);
  const std::vector<int> basis_rows = greedy_row_basis(eq_grads);

  Rng rng(opts.seed);
  std::vector<Vector> sample_points;
  std::vector<Matrix> sample_jacs;
  for (int s = 0; s < samples; ++s) {
    Vector pt = point + rng.ball(at.n, delta);
    try {
      sample_jacs.push_back(sys.map.jacobian(pt));
      sample_points.push_back(pt);
    } catch (const EvalDomainError&) {
      continue;
    }
  }

  // (a) constant rank of the equality gradient family.
  for (size_t s = 0; s < sample_points.size(); ++s) {
    Matrix g(static_cast<Eigen::Index>(eq_idx.size()), at.n);
    for (size_t k = 0; k < eq_idx.size(); ++k) g.row(static_cast<Eigen::Index>(k)) = sample_jacs[s].row(eq_idx[k]);
    if (numerical_rank(g) != base_rank) {
      v.status = CqStatus::kRefuted;
      v.witness_point = sample_points[s];
      v.notes.push_back("equality gradient rank changes within the sampled ball");
      return v;
    }
  }

  // (b) positively combinable subsets must stay dependent over the ball.
  if (active_ineq.size() > 16) {
    v.status = CqStatus::kInconclusive;
    v.notes.push_back("too many active inequality factors to enumerate");
    return v;
  }
  for (uint64_t mask = 0; mask < (uint64_t{1} << active_ineq.size()); ++mask) {
    std::vector<int> fam_rows;
    for (int b : basis_rows) fam_rows.push_back(eq_idx[static_cast<size_t>(b)]);
    for (size_t k = 0; k < active_ineq.size(); ++k) {
      if ((mask >> k) & 1) fam_rows.push_back(active_ineq[k]);
    }
    if (fam_rows.empty()) continue;
    const size_t n_ineq_members = fam_rows.size() - basis_rows.size();

    // Does a nonzero combination with nonnegative inequality weights vanish?
    Matrix cols(at.n, static_cast<Eigen::Index>(fam_rows.size()));
    for (size_t k = 0; k < fam_rows.size(); ++k) {
      double sgn = 1.0;
      if (k >= basis_rows.size()) {
        const char kind = kinds[static_cast<size_t>(fam_rows[k])];
        sgn = kind == 'p' ? -1.0 : 1.0;  // boundary multiplier sign normalization
      }
      cols.col(static_cast<Eigen::Index>(k)) = sgn * at.jac.row(fam_rows[k]).transpose();
    }
    Matrix sign_rows = Matrix::Zero(static_cast<Eigen::Index>(n_ineq_members),
                                    static_cast<Eigen::Index>(fam_rows.size()));
    for (size_t k = 0; k < n_ineq_members; ++k)
      sign_rows(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(basis_rows.size() + k)) = -1.0;
    // cols * w = sum_k w_k grad_k; a nonzero w with nonnegative inequality
    // weights makes the family positively combinable.
    ConeTriviality t = cone_is_trivial(sign_rows, cols, opts.tol);
    if (t.trivial) continue;

    for (size_t s = 0; s < sample_points.size(); ++s) {
      Matrix fam(static_cast<Eigen::Index>(fam_rows.size()), at.n);
      for (size_t k = 0; k < fam_rows.size(); ++k)
        fam.row(static_cast<Eigen::Index>(k)) = sample_jacs[s].row(fam_rows[k]);
      if (numerical_rank(fam) == static_cast<int>(fam_rows.size())) {
        v.status = CqStatus::kRefuted;
        v.witness_point = sample_points[s];
        v.witness_multiplier = t.witness;
        v.notes.push_back("a positively combinable family becomes independent in the ball");
        return v;
      }
    }
  }
  v.status = CqStatus::kCertified;
  return v;
}

CqVerdict check_crcq(const ConstraintSystem& sys, const Vector& point, double delta, int samples,
                     const CqOptions& opts) {
  require_free_controls(sys, "CRCQ");
  const std::string kinds = target_kinds_or_throw(sys, "CRCQ", /*inequalities_allowed=*/false);
  (void)kinds;
  SystemAtPoint at = evaluate_system(sys, point, opts);

  CqVerdict v;
  v.name = "CRCQ";
  v.notes.push_back("sampled: " + std::to_string(samples) + " points, radius " +
                    std::to_string(delta));
  const int base_rank = numerical_rank(at.jac);
  Rng rng(opts.seed);
  for (int s = 0; s < samples; ++s) {
    Vector pt = point + rng.ball(at.n, delta);
    Matrix j;
    try {
      j = sys.map.jacobian(pt);
    } catch (const EvalDomainError&) {
      continue;
    }
    if (numerical_rank(j) != base_rank) {
      v.status = CqStatus::kRefuted;
      v.witness_point = pt;
      v.notes.push_back("Jacobian rank changes within the sampled ball");
      return v;
    }
  }
  v.status = CqStatus::kCertified;
  return v;
}

CqVerdict falsify_quasinormality(const ConstraintSystem& sys, const Vector& point, int samples,
                                 const CqOptions& opts) {
  CqVerdict v;
  v.name = "quasinormality";
  v.notes.push_back("refutation-only sampled search");
  SystemAtPoint at = evaluate_system(sys, point, opts);
  PieceCombos pc = limiting_combos(sys, at, opts);

  // A quasinormality violation needs an abnormal multiplier first.
  CqVerdict ab = triviality_battery("NNAMCQ", sys, at, pc, /*pin_alpha=*/true, Matrix(0, at.m),
                                    opts);
  if (ab.status == CqStatus::kCertified) {
    v.status = CqStatus::kInconclusive;
    v.notes.push_back("no abnormal multiplier exists; the violation premise is empty");
    return v;
  }
  if (!ab.witness_multiplier) {
    v.status = CqStatus::kInconclusive;
    return v;
  }

  std::vector<Vector> lambdas = {*ab.witness_multiplier, -*ab.witness_multiplier};
  Rng rng(opts.seed ^ 0x51f15eedULL);
  for (const Vector& lambda : lambdas) {
    bool all_levels = true;
    Vector last_point;
    for (int level = 0; level < 6 && all_levels; ++level) {
      const double radius = opts.delta * std::pow(0.5, level);
      bool found = false;
      for (int s = 0; s < samples && !found; ++s) {
        Vector pt = point + rng.ball(at.n, radius);
        if (!sys.control_set.contains(pt.segment(at.u_offset, at.u_dim), opts.feas_tol).inside)
          continue;
        Vector val;
        try {
          val = sys.map.eval(pt);
        } catch (const EvalDomainError&) {
          continue;
        }
        bool ok = true;
        for (int i = 0; i < at.m && ok; ++i) {
          if (std::abs(lambda[i]) > 1e-9) {
            ok = lambda[i] * (val[i] - at.value[i]) > 1e-14;
          }
        }
        if (ok) {
          found = true;
          last_point = pt;
        }
      }
      all_levels = found;
    }
    if (all_levels) {
      v.status = CqStatus::kRefuted;
      v.witness_multiplier = lambda;
      v.witness_point = last_point;
      v.notes.push_back("sampled sequence with sign-consistent constraint violations found");
      return v;
    }
  }
  v.status = CqStatus::kInconclusive;
  v.notes.push_back("no violating sequence found at the sampled radii");
  return v;
}

// ---------------------------------------------------------------------------
// Ladder

CqLadderReport check_calmness_sufficient(const ConstraintSystem& sys, const Vector& point,
                                         const CqOptions& opts) {
  CqLadderReport rep;
  auto guard = [&](const std::string& name, auto&& fn) {
    try {
      rep.verdicts.push_back(fn());
    } catch (const InputError& e) {
      CqVerdict v;
      v.name = name;
      v.status = CqStatus::kInconclusive;
      v.notes.push_back(std::string("not applicable: ") + e.what());
      rep.verdicts.push_back(std::move(v));
    } catch (const CapError& e) {
      CqVerdict v;
      v.name = name;
      v.status = CqStatus::kInconclusive;
      v.notes.push_back(std::string("cap: ") + e.what());
      rep.verdicts.push_back(std::move(v));
    }
  };

  guard("Linear CQ", [&] { return check_linear_cq(sys); });
  guard("CCQ", [&] { return check_ccq(sys, point, opts); });
  guard("MFC", [&] { return check_mfc(sys, point, opts); });
  guard("NNAMCQ", [&] { return check_nnamcq(sys, point, opts); });
  guard("WBCQ", [&] { return check_wbcq(sys, point, opts); });
  guard("quasinormality", [&] { return falsify_quasinormality(sys, point, opts.samples, opts); });
  guard("FOSCMS", [&] { return check_foscms(sys, point, opts); });
  guard("SOSCMS", [&] { return check_soscms(sys, point, opts); });
  guard("RCPLD", [&] { return check_rcpld(sys, point, opts.delta, opts.samples, opts); });
  guard("CRCQ", [&] { return check_crcq(sys, point, opts.delta, opts.samples, opts); });

  const CqVerdict* wbcq = rep.find("WBCQ");
  static const char* kSufficient[] = {"Linear CQ", "NNAMCQ", "FOSCMS", "SOSCMS", "RCPLD", "CRCQ"};
  if (wbcq && wbcq->certified()) {
    for (const char* name : kSufficient) {
      const CqVerdict* v = rep.find(name);
      if (v && v->certified()) {
        rep.calmness_sufficient = true;
        rep.via = name;
        break;
      }
    }
  }
  if (!rep.calmness_sufficient)
    rep.notes.push_back("no calmness-sufficient condition established at this point");
  return rep;
}

IndexOneReport check_index_one(const ControlProblem& p, const Vector& node_point) {
  if (p.kind != ProblemKind::kSemiExplicit || !p.algebraic)
    throw InputError("index-one check: problem has no semi-explicit algebraic part");
  IndexOneReport rep;
  rep.n_y = p.n_y;
  const VariableLayout nl = p.node_layout();
  if (node_point.size() != nl.total_dim())
    throw InputError("index-one check: point dimension mismatch");
  const Matrix j = p.algebraic->jacobian(node_point);
  const Matrix jy = j.middleCols(nl.block_offset("y"), p.n_y);
  rep.algebraic_rank = numerical_rank(jy);
  rep.index_one = rep.algebraic_rank == p.n_y && p.algebraic->output_dim() == p.n_y;
  Eigen::JacobiSVD<Matrix> svd(jy);
  rep.singular_values = svd.singularValues();
  return rep;
}

TrajectoryCqResult check_along_trajectory(const ControlProblem& p,
                                          const std::vector<Vector>& node_points,
                                          const std::vector<double>& node_times,
                                          TrajectoryCqMode mode, const CqOptions& opts) {
  const ConstraintSystem sys = constraint_system_for(p);
  if (node_points.size() != node_times.size())
    throw InputError("trajectory check: node/time count mismatch");
  TrajectoryCqResult out;
  out.sufficient_everywhere = true;

  const VariableLayout& layout = sys.layout;
  const int n = layout.total_dim();
  const int u_off = sys.block_offset(sys.control_block());
  const int u_dim = sys.block_dim(sys.control_block());

  // Feasibility sweep first so failures carry the node index.
  for (size_t i = 0; i < node_points.size(); ++i) {
    if (node_points[i].size() != n)
      throw InputError("trajectory check: node " + std::to_string(i) + " has wrong dimension");
    try {
      evaluate_system(sys, node_points[i], opts);
    } catch (const InputError& e) {
      throw InputError("node " + std::to_string(i) + ": " + e.what());
    }
  }

  Rng base(opts.seed);
  for (size_t i = 0; i < node_points.size(); ++i) {
    CqLadderReport rep = check_calmness_sufficient(sys, node_points[i], opts);
    if (mode == TrajectoryCqMode::kTube && opts.tube_samples > 0) {
      Rng rng = base.fork(i);
      const double r_t = p.radius.at(node_times[i]);
      const double u_rad = std::isfinite(r_t) ? r_t : 1.0;
      int accepted = 0;
      for (int s = 0; s < opts.tube_samples * 5 && accepted < opts.tube_samples; ++s) {
        Vector pt = node_points[i];
        pt.head(sys.block_offset(1)) += rng.ball(sys.block_dim(0), opts.tube_eps);
        Vector du = rng.ball(u_dim, u_rad);
        pt.segment(u_off, u_dim) += du;
        if (!sys.control_set.contains(pt.segment(u_off, u_dim), opts.feas_tol).inside) continue;
        // Restore feasibility through the zero-role block when possible.
        int z_off = -1, z_dim = 0;
        for (size_t b = 0; b < sys.roles.size(); ++b) {
          if (sys.roles[b] == BlockRole::kZero) {
            z_off = sys.block_offset(static_cast<int>(b));
            z_dim = sys.block_dim(static_cast<int>(b));
          }
        }
        bool feasible = false;
        if (sys.target.tag == SetTag::kSingletonZero && z_dim > 0) {
          auto solved = solve_block_newton(sys.map, pt, z_off, z_dim);
          if (solved) {
            pt.segment(z_off, z_dim) = *solved;
            feasible = true;
          }
        } else {
          try {
            feasible = sys.target.contains(sys.map.eval(pt), opts.feas_tol).inside;
          } catch (const EvalDomainError&) {
            feasible = false;
          }
        }
        if (!feasible) continue;
        ++accepted;
        CqLadderReport tube_rep = check_calmness_sufficient(sys, pt, opts);
        if (!tube_rep.calmness_sufficient) {
          rep.calmness_sufficient = false;
          rep.notes.push_back("tube sample without a calmness-sufficient condition");
        }
      }
      rep.notes.push_back("tube samples checked: " + std::to_string(accepted));
    }
    out.sufficient_everywhere = out.sufficient_everywhere && rep.calmness_sufficient;
    out.per_node.push_back(std::move(rep));
  }
  if (!out.sufficient_everywhere)
    out.notes.push_back("calmness-sufficient conditions missing at one or more nodes");
  return out;
}

}  // namespace daeopt
