#include "certificate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "linalg.hpp"
#include "lp.hpp"
#include "newton.hpp"
#include "rng.hpp"

namespace daeopt {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Mesh / Trajectory / Certificate

Mesh Mesh::uniform(double t0, double t1, int intervals) {
  if (intervals < 2) throw InputError("mesh: at least 2 intervals required");
  Mesh m;
  m.nodes.resize(static_cast<size_t>(intervals) + 1);
  for (int i = 0; i <= intervals; ++i)
    m.nodes[static_cast<size_t>(i)] = t0 + (t1 - t0) * i / intervals;
  return m;
}

void Mesh::validate() const {
  if (nodes.size() < 3) throw InputError("mesh: at least 3 nodes required");
  for (size_t i = 1; i < nodes.size(); ++i) {
    if (!(nodes[i] > nodes[i - 1])) throw InputError("mesh: nodes must be strictly increasing");
  }
}

void Certificate::validate() const {
  mesh.validate();
  const int nn = mesh.num_nodes();
  if (lambda0 != 0.0 && lambda0 != 1.0) throw InputError("certificate: lambda0 must be 0 or 1");
  if (traj.x.rows() != nn) throw InputError("certificate: x track length mismatch");
  if (traj.u.rows() != nn) throw InputError("certificate: u track length mismatch");
  if (traj.y.cols() > 0 && traj.y.rows() != nn)
    throw InputError("certificate: y track length mismatch");
  if (traj.has_v() && (traj.v.rows() != nn || traj.v.cols() != traj.x.cols()))
    throw InputError("certificate: v track shape mismatch");
  if (p.rows() != nn || p.cols() != traj.x.cols())
    throw InputError("certificate: adjoint track must match the state dimension per node");
  if (lambda && lambda->rows() != nn) throw InputError("certificate: lambda track length mismatch");
  if (mu && (mu->rows() != nn || mu->cols() != traj.u.cols()))
    throw InputError("certificate: mu track shape mismatch");
  if (radius.size() != nn) throw InputError("certificate: radius track length mismatch");
  for (int i = 0; i < nn; ++i) {
    if (!(radius[i] > 0.0)) throw InputError("certificate: radius must be positive");
  }
}

Vector Certificate::velocity(int node) const {
  if (traj.has_v()) return traj.v.row(node).transpose();
  const int nn = mesh.num_nodes();
  if (node == 0) return (traj.x.row(1) - traj.x.row(0)).transpose() / mesh.dt(0);
  if (node == nn - 1)
    return (traj.x.row(nn - 1) - traj.x.row(nn - 2)).transpose() / mesh.dt(nn - 2);
  const double h1 = mesh.dt(node - 1), h2 = mesh.dt(node);
  const Vector a = traj.x.row(node - 1).transpose();
  const Vector b = traj.x.row(node).transpose();
  const Vector c = traj.x.row(node + 1).transpose();
  return (h1 * h1 * c - h2 * h2 * a + (h2 * h2 - h1 * h1) * b) / (h1 * h2 * (h1 + h2));
}

namespace {

Matrix track_from_json(const json& j, const std::string& key, int expect_rows) {
  const auto& arr = j.at(key);
  if (!arr.is_array()) throw InputError("certificate: '" + key + "' must be an array");
  const int rows = static_cast<int>(arr.size());
  if (expect_rows > 0 && rows != expect_rows)
    throw InputError("certificate: '" + key + "' must have one entry per mesh node");
  int cols = -1;
  Matrix m;
  for (int i = 0; i < rows; ++i) {
    const auto& row = arr[static_cast<size_t>(i)];
    if (row.is_number()) {
      if (cols < 0) {
        cols = 1;
        m = Matrix(rows, 1);
      }
      if (cols != 1) throw InputError("certificate: ragged '" + key + "'");
      m(i, 0) = row.get<double>();
    } else {
      if (cols < 0) {
        cols = static_cast<int>(row.size());
        m = Matrix(rows, cols);
      }
      if (static_cast<int>(row.size()) != cols)
        throw InputError("certificate: ragged '" + key + "'");
      for (int k = 0; k < cols; ++k) m(i, k) = row[static_cast<size_t>(k)].get<double>();
    }
  }
  if (rows == 0) m = Matrix(0, 0);
  return m;
}

json track_to_json(const Matrix& m) {
  json out = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    out.push_back(row);
  }
  return out;
}

}  // namespace

Certificate parse_certificate(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw InputError(std::string("certificate JSON parse error: ") + e.what());
  }
  try {
    Certificate c;
    for (const auto& t : j.at("mesh")) c.mesh.nodes.push_back(t.get<double>());
    const int nn = c.mesh.num_nodes();
    c.traj.x = track_from_json(j, "x", nn);
    c.traj.u = track_from_json(j, "u", nn);
    c.traj.y = j.contains("y") ? track_from_json(j, "y", nn) : Matrix(nn, 0);
    c.traj.v = j.contains("v") ? track_from_json(j, "v", nn) : Matrix(0, 0);
    c.p = track_from_json(j, "p", nn);
    c.lambda0 = j.value("lambda0", 1.0);
    if (j.contains("lambda")) c.lambda = track_from_json(j, "lambda", nn);
    if (j.contains("mu")) c.mu = track_from_json(j, "mu", nn);
    if (j.contains("radius")) {
      const auto& r = j.at("radius");
      if (r.is_number()) {
        c.radius = Vector::Constant(nn, r.get<double>());
      } else if (r.is_string()) {
        if (r.get<std::string>() != "inf")
          throw InputError("certificate: radius string must be 'inf'");
        c.radius = Vector::Constant(nn, std::numeric_limits<double>::infinity());
      } else {
        c.radius = Vector(nn);
        if (static_cast<int>(r.size()) != nn)
          throw InputError("certificate: radius list length mismatch");
        for (int i = 0; i < nn; ++i) c.radius[i] = r[static_cast<size_t>(i)].get<double>();
      }
    } else {
      c.radius = Vector::Constant(nn, std::numeric_limits<double>::infinity());
    }
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw InputError(std::string("certificate JSON: ") + e.what());
  }
}

Certificate load_certificate(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open certificate file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_certificate(ss.str());
}

std::string certificate_to_json(const Certificate& c) {
  json j;
  j["mesh"] = c.mesh.nodes;
  j["x"] = track_to_json(c.traj.x);
  if (c.traj.y.cols() > 0) j["y"] = track_to_json(c.traj.y);
  j["u"] = track_to_json(c.traj.u);
  if (c.traj.has_v()) j["v"] = track_to_json(c.traj.v);
  j["p"] = track_to_json(c.p);
  j["lambda0"] = c.lambda0;
  if (c.lambda) j["lambda"] = track_to_json(*c.lambda);
  if (c.mu) j["mu"] = track_to_json(*c.mu);
  const double r0 = c.radius.size() > 0 ? c.radius[0] : 0.0;
  bool constant_radius = true;
  for (int i = 0; i < c.radius.size(); ++i) constant_radius = constant_radius && c.radius[i] == r0;
  if (constant_radius) {
    if (std::isfinite(r0))
      j["radius"] = r0;
    else
      j["radius"] = "inf";
  } else {
    j["radius"] = std::vector<double>(c.radius.data(), c.radius.data() + c.radius.size());
  }
  return j.dump(2);
}

Vector adjoint_derivative(const Certificate& cert, int node) {
  const int nn = cert.mesh.num_nodes();
  if (node == 0) return (cert.p.row(1) - cert.p.row(0)).transpose() / cert.mesh.dt(0);
  if (node == nn - 1)
    return (cert.p.row(nn - 1) - cert.p.row(nn - 2)).transpose() / cert.mesh.dt(nn - 2);
  const double h1 = cert.mesh.dt(node - 1), h2 = cert.mesh.dt(node);
  const Vector a = cert.p.row(node - 1).transpose();
  const Vector b = cert.p.row(node).transpose();
  const Vector c = cert.p.row(node + 1).transpose();
  return (h1 * h1 * c - h2 * h2 * a + (h2 * h2 - h1 * h1) * b) / (h1 * h2 * (h1 + h2));
}

// ---------------------------------------------------------------------------
// Conditions

std::string to_string(CondStatus s) {
  switch (s) {
    case CondStatus::kPass:
      return "pass";
    case CondStatus::kFail:
      return "fail";
    case CondStatus::kInconclusive:
      return "inconclusive";
  }
  return "?";
}

const ConditionResult* VerifyReport::find(const std::string& name) const {
  for (const auto& c : conditions) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

ConditionResult verify_nontriviality(const Certificate& cert, double tol) {
  ConditionResult r;
  r.name = "nontriviality";
  r.status = CondStatus::kPass;
  double worst = std::numeric_limits<double>::infinity();
  for (int i = 0; i < cert.mesh.num_nodes(); ++i) {
    const double norm = std::sqrt(cert.lambda0 * cert.lambda0 + cert.p.row(i).squaredNorm());
    if (norm < worst) {
      worst = norm;
      r.location = i;
    }
  }
  r.worst_residual = worst;
  if (worst < tol) r.status = CondStatus::kFail;
  return r;
}

namespace {

Vector node_point(const ControlProblem& p, const Certificate& cert, int i) {
  const int nn = p.n_x + p.n_y + p.n_u + (p.kind == ProblemKind::kImplicit ? p.n_x : 0);
  Vector pt(nn);
  if (p.kind == ProblemKind::kSemiExplicit) {
    pt.head(p.n_x) = cert.traj.x.row(i).transpose();
    if (p.n_y > 0) pt.segment(p.n_x, p.n_y) = cert.traj.y.row(i).transpose();
    pt.tail(p.n_u) = cert.traj.u.row(i).transpose();
  } else {
    pt.head(p.n_x) = cert.traj.x.row(i).transpose();
    pt.segment(p.n_x, p.n_u) = cert.traj.u.row(i).transpose();
    pt.tail(p.n_x) = cert.velocity(i);
  }
  return pt;
}

Vector endpoint_point(const Certificate& cert) {
  const int nx = static_cast<int>(cert.traj.x.cols());
  Vector e(2 * nx);
  e.head(nx) = cert.traj.x.row(0).transpose();
  e.tail(nx) = cert.traj.x.row(cert.mesh.num_nodes() - 1).transpose();
  return e;
}

}  // namespace

ConditionResult verify_transversality(const Certificate& cert, const ControlProblem& p,
                                      double tol) {
  ConditionResult r;
  r.name = "transversality";
  const Vector endpoints = endpoint_point(cert);
  if (!p.endpoint_set.contains(endpoints, 1e-6).inside)
    throw InputError("transversality: trajectory endpoints are not in the endpoint set");

  const Matrix df = p.endpoint_cost.jacobian(endpoints);  // 1 x 2nx
  const int nx = p.n_x;
  Vector target(2 * nx);
  target.head(nx) = cert.p.row(0).transpose();
  target.tail(nx) = -cert.p.row(cert.mesh.num_nodes() - 1).transpose();
  const Vector residual_vec = target - cert.lambda0 * df.row(0).transpose();

  ConeUnion ns = limiting_normal_cone_outer(p.endpoint_set, endpoints, 1e-6);
  auto member = ns.contains(residual_vec, tol);
  r.worst_residual = member.violation;
  r.location = 0;
  r.status = member.inside ? CondStatus::kPass : CondStatus::kFail;
  if (!ns.exact) r.notes.push_back("endpoint normal cone is an outer approximation");
  return r;
}

namespace {

struct EulerLayout {
  // Column offsets of the node layout blocks.
  int x_off = 0, y_off = -1, u_off = 0, v_off = -1;
  int n_x = 0, n_y = 0, n_u = 0;
};

EulerLayout euler_layout(const ControlProblem& p) {
  EulerLayout l;
  l.n_x = p.n_x;
  l.n_y = p.n_y;
  l.n_u = p.n_u;
  l.x_off = 0;
  if (p.kind == ProblemKind::kSemiExplicit) {
    l.y_off = p.n_y > 0 ? p.n_x : -1;
    l.u_off = p.n_x + p.n_y;
  } else {
    l.u_off = p.n_x;
    l.v_off = p.n_x + p.n_u;
  }
  return l;
}

}  // namespace

EulerResult verify_euler_explicit(const Certificate& cert, const ControlProblem& p,
                                  const VerifyOptions& opts) {
  EulerResult out;
  out.condition.name = "euler-explicit";
  out.condition.status = CondStatus::kPass;
  const EulerLayout l = euler_layout(p);
  const int nn = cert.mesh.num_nodes();
  const int m = p.kind == ProblemKind::kSemiExplicit ? p.algebraic_dim() : p.target_dim();
  out.lambda = Matrix::Zero(nn, m);
  out.mu = Matrix::Zero(nn, p.n_u);

  const bool lambda_given = cert.lambda.has_value();
  const bool mu_given = cert.mu.has_value();
  double worst = 0.0;

  for (int i = 0; i < nn; ++i) {
    const Vector pt = node_point(p, cert, i);
    const Vector pi = cert.p.row(i).transpose();
    const Vector pdot = adjoint_derivative(cert, i);
    const Matrix jf = p.running_cost.jacobian(pt);  // 1 x n

    Vector lam = Vector::Zero(m);
    Vector mu_i = Vector::Zero(p.n_u);
    double residual = 0.0;

    if (p.kind == ProblemKind::kSemiExplicit) {
      const Matrix jphi = p.dynamics.jacobian(pt);  // n_x x n
      Matrix jh(m, pt.size());
      if (p.algebraic) jh = p.algebraic->jacobian(pt);
      // x rows: pdot = -grad_x<phi,p> + l0 grad_x F + grad_x h^T lam
      Vector bx = pdot + jphi.middleCols(l.x_off, l.n_x).transpose() * pi -
                  cert.lambda0 * jf.row(0).segment(l.x_off, l.n_x).transpose();
      Vector by;
      if (l.n_y > 0)
        by = jphi.middleCols(l.y_off, l.n_y).transpose() * pi -
             cert.lambda0 * jf.row(0).segment(l.y_off, l.n_y).transpose();
      if (m > 0) {
        Matrix a(l.n_x + l.n_y, m);
        a.topRows(l.n_x) = jh.middleCols(l.x_off, l.n_x).transpose();
        if (l.n_y > 0) a.bottomRows(l.n_y) = jh.middleCols(l.y_off, l.n_y).transpose();
        Vector b(l.n_x + l.n_y);
        b.head(l.n_x) = bx;
        if (l.n_y > 0) b.tail(l.n_y) = by;
        if (lambda_given) {
          lam = cert.lambda->row(i).transpose();
          residual = std::max(residual, (a * lam - b).lpNorm<Eigen::Infinity>());
        } else {
          LeastSquaresResult ls = least_squares(a, b);
          lam = ls.solution;
          residual = std::max(residual, (a * lam - b).lpNorm<Eigen::Infinity>());
        }
      } else {
        residual = std::max(residual, bx.lpNorm<Eigen::Infinity>());
        if (l.n_y > 0) residual = std::max(residual, by.lpNorm<Eigen::Infinity>());
      }
      // u row: -mu = -grad_u<phi,p> + l0 grad_u F + grad_u h^T lam
      Vector rhs_u = -jphi.middleCols(l.u_off, l.n_u).transpose() * pi +
                     cert.lambda0 * jf.row(0).segment(l.u_off, l.n_u).transpose();
      if (m > 0) rhs_u += jh.middleCols(l.u_off, l.n_u).transpose() * lam;
      if (mu_given) {
        mu_i = cert.mu->row(i).transpose();
        residual = std::max(residual, (mu_i + rhs_u).lpNorm<Eigen::Infinity>());
      } else {
        mu_i = -rhs_u;
      }
    } else {
      // Implicit layout: (pdot, -mu, p) = l0 grad F + grad phi^T lam.
      const Matrix jphi = p.dynamics.jacobian(pt);  // m x n
      Matrix a(l.n_x + l.n_x, m);
      a.topRows(l.n_x) = jphi.middleCols(l.x_off, l.n_x).transpose();
      a.bottomRows(l.n_x) = jphi.middleCols(l.v_off, l.n_x).transpose();
      Vector b(2 * l.n_x);
      b.head(l.n_x) =
          pdot - cert.lambda0 * jf.row(0).segment(l.x_off, l.n_x).transpose();
      b.tail(l.n_x) = pi - cert.lambda0 * jf.row(0).segment(l.v_off, l.n_x).transpose();
      if (lambda_given) {
        lam = cert.lambda->row(i).transpose();
      } else {
        LeastSquaresResult ls = least_squares(a, b);
        lam = ls.solution;
      }
      residual = std::max(residual, (a * lam - b).lpNorm<Eigen::Infinity>());
      Vector rhs_u = cert.lambda0 * jf.row(0).segment(l.u_off, l.n_u).transpose() +
                     jphi.middleCols(l.u_off, l.n_u).transpose() * lam;
      if (mu_given) {
        mu_i = cert.mu->row(i).transpose();
        residual = std::max(residual, (mu_i + rhs_u).lpNorm<Eigen::Infinity>());
      } else {
        mu_i = -rhs_u;
      }
      // lambda must be a normal to the target set at the map value.
      if (p.target_set.tag != SetTag::kSingletonZero) {
        const Vector val = p.dynamics.eval(pt);
        PolyCone nk = clarke_normal_cone(p.target_set, val, 1e-6);
        auto mem = nk.contains(lam, opts.tol_euler);
        residual = std::max(residual, mem.violation);
      }
    }

    // Control multiplier must lie in the Clarke normal cone of U at u_i.
    {
      PolyCone nu = clarke_normal_cone(p.control_set, cert.traj.u.row(i).transpose(), 1e-6);
      auto mem = nu.contains(mu_i, opts.tol_euler);
      residual = std::max(residual, mem.violation);
    }

    out.lambda.row(i) = lam.transpose();
    out.mu.row(i) = mu_i.transpose();
    const double scale = 1.0 + pi.norm();
    if (residual > worst * scale || i == 0) {
      // track the worst scaled residual
    }
    const double scaled = residual / scale;
    if (scaled > out.condition.worst_residual) {
      out.condition.worst_residual = scaled;
      out.condition.location = i;
    }
    if (residual > opts.tol_euler * scale) out.condition.status = CondStatus::kFail;
    worst = std::max(worst, scaled);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Weierstrass condition (sampled)

namespace {

struct AxisBounds {
  Vector lo, hi;
};

/// Per-axis bounds of a polyhedron piece (via per-axis LPs when needed).
AxisBounds piece_bounds(const Polyhedron& piece) {
  AxisBounds b;
  const int n = piece.dim;
  b.lo = Vector::Constant(n, -std::numeric_limits<double>::infinity());
  b.hi = Vector::Constant(n, std::numeric_limits<double>::infinity());
  if (auto iv = piece.axis_intervals()) {
    for (int i = 0; i < n; ++i) {
      b.lo[i] = (*iv)[static_cast<size_t>(i)].lo;
      b.hi[i] = (*iv)[static_cast<size_t>(i)].hi;
    }
    return b;
  }
  for (int i = 0; i < n; ++i) {
    LpProblem lp;
    lp.objective = Vector::Zero(n);
    lp.objective[i] = 1.0;
    lp.ineq_a = piece.a;
    lp.ineq_b = piece.b;
    lp.eq_a = piece.g_eq;
    lp.eq_b = piece.g_rhs;
    LpResult up = lp_solve(lp);
    if (up.status == LpStatus::kOptimal) b.hi[i] = up.objective;
    lp.objective[i] = -1.0;
    LpResult dn = lp_solve(lp);
    if (dn.status == LpStatus::kOptimal) b.lo[i] = -dn.objective;
  }
  return b;
}

}  // namespace

ConditionResult verify_weierstrass(const Certificate& cert, const ControlProblem& p,
                                   const VerifyOptions& opts) {
  ConditionResult r;
  r.name = "weierstrass";
  r.status = CondStatus::kPass;
  r.notes.push_back("sampled");
  const EulerLayout l = euler_layout(p);
  const int nn = cert.mesh.num_nodes();

  std::vector<AxisBounds> bounds;
  for (const auto& piece : p.control_set.pieces) bounds.push_back(piece_bounds(piece));

  Rng base(opts.seed);
  int total_feasible = 0;
  for (int i = 0; i < nn; ++i) {
    Rng rng = base.fork(static_cast<uint64_t>(i));
    const Vector pt = node_point(p, cert, i);
    const Vector pi = cert.p.row(i).transpose();
    const Vector ui = cert.traj.u.row(i).transpose();
    const double radius = cert.radius[i];
    const double r_eff =
        std::isfinite(radius) ? radius - 1e-12 : opts.weier_radius_cap;
    if (!std::isfinite(radius))
      r.notes.push_back("node " + std::to_string(i) + ": infinite radius capped for sampling");

    // Reference value of the Weierstrass comparison at the node.
    double ref;
    Vector vi;
    if (p.kind == ProblemKind::kSemiExplicit) {
      ref = pi.dot(p.dynamics.eval(pt)) - cert.lambda0 * p.running_cost.eval(pt)[0];
    } else {
      vi = cert.velocity(i);
      ref = pi.dot(vi) - cert.lambda0 * p.running_cost.eval(pt)[0];
    }

    int feasible = 0;
    double worst_margin = 0.0;
    for (int s = 0; s < opts.weier_samples; ++s) {
      // Sample a control candidate from a piece's box window around u_i.
      const size_t piece_idx = p.control_set.pieces.size() > 1
                                   ? static_cast<size_t>(rng.next() % p.control_set.pieces.size())
                                   : 0;
      const AxisBounds& ab = bounds[piece_idx];
      Vector uc(p.n_u);
      bool ok = true;
      for (int k = 0; k < p.n_u; ++k) {
        const double lo = std::max(ab.lo[k], ui[k] - r_eff);
        const double hi = std::min(ab.hi[k], ui[k] + r_eff);
        if (!(lo <= hi)) {
          ok = false;
          break;
        }
        uc[k] = rng.uniform(lo, hi);
      }
      if (!ok || !p.control_set.pieces[piece_idx].contains(uc, 1e-12)) continue;

      double cand;
      double dist2 = (uc - ui).squaredNorm();
      Vector cand_y, cand_v;
      if (p.kind == ProblemKind::kSemiExplicit && p.algebraic) {
        // Solve the algebraic part for y, seeded at the node value.
        Vector seed = pt;
        seed.segment(l.u_off, l.n_u) = uc;
        auto solved = solve_block_newton(*p.algebraic, seed, l.y_off, l.n_y, opts.newton_max_iter,
                                         opts.newton_tol);
        if (!solved) continue;
        cand_y = *solved;
        dist2 += (cand_y - pt.segment(l.y_off, l.n_y)).squaredNorm();
        if (dist2 >= r_eff * r_eff) continue;
        Vector cpt = pt;
        cpt.segment(l.y_off, l.n_y) = cand_y;
        cpt.segment(l.u_off, l.n_u) = uc;
        try {
          cand = pi.dot(p.dynamics.eval(cpt)) - cert.lambda0 * p.running_cost.eval(cpt)[0];
        } catch (const EvalDomainError&) {
          continue;
        }
      } else if (p.kind == ProblemKind::kSemiExplicit) {
        if (dist2 >= r_eff * r_eff) continue;
        Vector cpt = pt;
        cpt.segment(l.u_off, l.n_u) = uc;
        try {
          cand = pi.dot(p.dynamics.eval(cpt)) - cert.lambda0 * p.running_cost.eval(cpt)[0];
        } catch (const EvalDomainError&) {
          continue;
        }
      } else {
        // Implicit: candidate (u, v) with the map in the target set.
        Vector seed = pt;
        seed.segment(l.u_off, l.n_u) = uc;
        seed.segment(l.v_off, l.n_x) += rng.ball(l.n_x, 0.25 * r_eff);
        Vector vc;
        if (p.target_set.tag == SetTag::kSingletonZero) {
          auto solved = solve_block_newton(p.dynamics, seed, l.v_off, l.n_x, opts.newton_max_iter,
                                           opts.newton_tol);
          if (!solved) continue;
          vc = *solved;
        } else {
          vc = seed.segment(l.v_off, l.n_x);
          try {
            if (!p.target_set.contains(p.dynamics.eval(seed), opts.tol_feas).inside) continue;
          } catch (const EvalDomainError&) {
            continue;
          }
        }
        dist2 += (vc - vi).squaredNorm();
        if (dist2 >= r_eff * r_eff) continue;
        Vector cpt = pt;
        cpt.segment(l.u_off, l.n_u) = uc;
        cpt.segment(l.v_off, l.n_x) = vc;
        try {
          cand = pi.dot(vc) - cert.lambda0 * p.running_cost.eval(cpt)[0];
        } catch (const EvalDomainError&) {
          continue;
        }
      }
      ++feasible;
      const double margin = cand - ref;
      if (margin > worst_margin) {
        worst_margin = margin;
        if (margin > opts.tol_weier) {
          r.status = CondStatus::kFail;
          r.location = i;
          r.notes.push_back("node " + std::to_string(i) + ": sampled candidate improves the " +
                            "reference value by " + std::to_string(margin));
        }
      }
    }
    total_feasible += feasible;
    r.worst_residual = std::max(r.worst_residual, worst_margin);
    if (feasible < static_cast<int>(opts.min_coverage * opts.weier_samples)) {
      if (r.status != CondStatus::kFail) r.status = CondStatus::kInconclusive;
      r.notes.push_back("node " + std::to_string(i) + ": only " + std::to_string(feasible) + "/" +
                        std::to_string(opts.weier_samples) + " feasible samples");
      if (r.location < 0) r.location = i;
    }
  }
  r.notes.push_back("feasible samples total: " + std::to_string(total_feasible));
  return r;
}

// ---------------------------------------------------------------------------
// Multiplier bound and structured E

MultiplierBoundConstants estimate_bound_constants(const Certificate& cert,
                                                  const ControlProblem& p) {
  MultiplierBoundConstants c;
  c.estimated = true;
  c.kappa = 1.0;
  double k = 0.0, kf = 0.0;
  for (int i = 0; i < cert.mesh.num_nodes(); ++i) {
    const Vector pt = node_point(p, cert, i);
    try {
      k = std::max(k, p.dynamics.jacobian(pt).operatorNorm());
      kf = std::max(kf, p.running_cost.jacobian(pt).row(0).norm());
    } catch (const EvalDomainError&) {
      continue;
    }
  }
  c.k = std::max(k, 1e-6);
  c.k_f = kf;
  c.k_phi = 0.0;
  return c;
}

ConditionResult verify_multiplier_bound(const Certificate& cert,
                                        const MultiplierBoundConstants& constants, double lambda0,
                                        const Matrix& lambda_track) {
  ConditionResult r;
  r.name = "multiplier-bound";
  r.status = CondStatus::kPass;
  if (lambda_track.rows() != cert.mesh.num_nodes())
    throw InputError("multiplier bound: missing multiplier track");
  for (int i = 0; i < cert.mesh.num_nodes(); ++i) {
    const double lhs = lambda_track.row(i).norm();
    const double rhs = constants.kappa * ((constants.k + constants.k_phi) * cert.p.row(i).norm() +
                                          lambda0 * constants.k_f);
    const double excess = lhs - rhs;
    if (excess > r.worst_residual) {
      r.worst_residual = excess;
      r.location = i;
    }
    if (excess > 0.0) r.status = CondStatus::kFail;
  }
  r.worst_residual = std::max(0.0, r.worst_residual);
  return r;
}

StructuredEResult verify_structured_e(const Certificate& cert, const ControlProblem& p,
                                      const VerifyOptions& opts) {
  StructuredEResult out;
  out.condition.name = "structured-E";
  out.condition.status = CondStatus::kPass;
  if (!p.structured_e) throw InputError("structured-E check: no E declaration in the problem");
  const Matrix& e = p.structured_e->e;
  const int m = static_cast<int>(e.rows());
  const int nn = cert.mesh.num_nodes();
  out.lambda = Matrix::Zero(nn, m);

  const bool full_row_rank = numerical_rank(e) == e.rows();
  Matrix pinv;  // (E E^T)^{-1} E for the full-row-rank branch
  if (full_row_rank) pinv = (e * e.transpose()).ldlt().solve(e);

  if (p.running_cost.components()[0].to_string() != "0")
    out.condition.notes.push_back(
        "structured-E equations assume an endpoint-only cost; running cost present");

  VariableLayout gl({{"x", p.n_x}, {"u", p.n_u}});
  for (int i = 0; i < nn; ++i) {
    Vector gpt(p.n_x + p.n_u);
    gpt.head(p.n_x) = cert.traj.x.row(i).transpose();
    gpt.tail(p.n_u) = cert.traj.u.row(i).transpose();
    const Matrix jg = p.structured_e->g.jacobian(gpt);
    const Vector pi = cert.p.row(i).transpose();
    const Vector pdot = adjoint_derivative(cert, i);

    Vector lam(m);
    double residual = 0.0;
    if (full_row_rank) {
      lam = pinv * pi;
    } else {
      LeastSquaresResult ls = least_squares(e.transpose(), pi);
      lam = ls.solution;
      residual = std::max(residual, ls.residual_norm);
    }
    // Adjoint line: pdot = -grad_x g^T lam.
    residual = std::max(
        residual,
        (pdot + jg.leftCols(p.n_x).transpose() * lam).lpNorm<Eigen::Infinity>());
    // Control line: mu = grad_u g^T lam must be a normal to U at u_i.
    const Vector mu = jg.rightCols(p.n_u).transpose() * lam;
    PolyCone nu = clarke_normal_cone(p.control_set, cert.traj.u.row(i).transpose(), 1e-6);
    residual = std::max(residual, nu.contains(mu, opts.tol_euler).violation);

    out.lambda.row(i) = lam.transpose();
    const double scale = 1.0 + pi.norm();
    const double scaled = residual / scale;
    if (scaled > out.condition.worst_residual) {
      out.condition.worst_residual = scaled;
      out.condition.location = i;
    }
    if (residual > opts.tol_euler * scale) out.condition.status = CondStatus::kFail;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Aggregate verification

std::vector<Vector> system_node_points(const ControlProblem& p, const Certificate& cert) {
  std::vector<Vector> pts;
  const bool mh = p.kind == ProblemKind::kSemiExplicit && p.algebraic;
  for (int i = 0; i < cert.mesh.num_nodes(); ++i) {
    if (mh) {
      pts.push_back(node_point(p, cert, i));
    } else if (p.kind == ProblemKind::kSemiExplicit) {
      // Lifted (x, u, xdot) system.
      Vector pt(p.n_x + p.n_u + p.n_x);
      pt.head(p.n_x) = cert.traj.x.row(i).transpose();
      pt.segment(p.n_x, p.n_u) = cert.traj.u.row(i).transpose();
      pt.tail(p.n_x) = cert.velocity(i);
      pts.push_back(pt);
    } else {
      pts.push_back(node_point(p, cert, i));
    }
  }
  return pts;
}

VerifyReport verify_certificate(const Certificate& cert, const ControlProblem& p,
                                const VerifyOptions& opts) {
  cert.validate();
  p.validate();
  VerifyReport rep;
  rep.options = opts;

  Certificate work = cert;
  if (opts.lambda0_policy == 0 || opts.lambda0_policy == 1)
    work.lambda0 = static_cast<double>(opts.lambda0_policy);

  if (static_cast<int>(work.traj.x.cols()) != p.n_x ||
      static_cast<int>(work.traj.u.cols()) != p.n_u ||
      static_cast<int>(work.traj.y.cols()) != p.n_y)
    throw InputError("certificate does not match the problem dimensions");

  // Per-node feasibility first; a failure halts verification.
  const EulerLayout l = euler_layout(p);
  for (int i = 0; i < work.mesh.num_nodes(); ++i) {
    const Vector pt = node_point(p, work, i);
    const Vector ui = work.traj.u.row(i).transpose();
    if (!p.control_set.contains(ui, opts.tol_feas).inside)
      throw InputError("node " + std::to_string(i) + ": control is outside the control set");
    if (p.kind == ProblemKind::kSemiExplicit) {
      if (p.algebraic) {
        const double viol = p.algebraic->eval(pt).lpNorm<Eigen::Infinity>();
        if (viol > opts.tol_feas)
          throw InputError("node " + std::to_string(i) +
                           ": algebraic residual " + std::to_string(viol));
      }
    } else {
      const Vector val = p.dynamics.eval(pt);
      if (!p.target_set.contains(val, opts.tol_feas).inside)
        throw InputError("node " + std::to_string(i) + ": constraint map misses the target set");
    }
    (void)l;
  }
  if (!p.endpoint_set.contains(endpoint_point(work), 1e-6).inside)
    throw InputError("trajectory endpoints are not in the endpoint set");

  // Free right endpoint + abnormal certificate: flag it.
  {
    auto kinds = p.endpoint_set.product_kinds();
    const bool free_right = kinds && kinds->size() == static_cast<size_t>(2 * p.n_x) &&
                            std::all_of(kinds->begin() + p.n_x, kinds->end(),
                                        [](char c) { return c == 'f'; });
    if (free_right && work.lambda0 == 0.0)
      rep.notes.push_back(
          "free right endpoint: the normal form (lambda0 = 1) is admissible; "
          "an abnormal certificate (lambda0 = 0) is unexpected here");
  }

  rep.conditions.push_back(verify_nontriviality(work, opts.tol_nontrivial));
  rep.conditions.push_back(verify_transversality(work, p, opts.tol_trans));
  EulerResult euler = verify_euler_explicit(work, p, opts);
  rep.conditions.push_back(euler.condition);
  if (!work.lambda) rep.recovered_lambda = euler.lambda;
  if (!work.mu) rep.recovered_mu = euler.mu;
  rep.conditions.push_back(verify_weierstrass(work, p, opts));

  {
    MultiplierBoundConstants constants = estimate_bound_constants(work, p);
    rep.bound_constants = constants;
    const Matrix& track = work.lambda ? *work.lambda : euler.lambda;
    ConditionResult mb = verify_multiplier_bound(work, constants, work.lambda0, track);
    mb.notes.push_back(work.lambda ? "using the certificate multiplier track"
                                   : "using the recovered multiplier track");
    mb.notes.push_back("constants estimated from sampled gradients");
    rep.conditions.push_back(std::move(mb));
  }

  if (p.structured_e) {
    StructuredEResult se = verify_structured_e(work, p, opts);
    rep.conditions.push_back(se.condition);
  }

  rep.overall = CondStatus::kPass;
  for (const auto& c : rep.conditions) {
    if (c.status == CondStatus::kFail) {
      rep.overall = CondStatus::kFail;
      break;
    }
    if (c.status == CondStatus::kInconclusive) rep.overall = CondStatus::kInconclusive;
  }
  return rep;
}

}  // namespace daeopt
