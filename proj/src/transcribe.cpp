#include "transcribe.hpp"

#include <algorithm>
#include <cmath>

#include "cq.hpp"
#include "linalg.hpp"

namespace daeopt {

Scheme scheme_from_string(const std::string& s) {
  if (s == "trapezoidal") return Scheme::kTrapezoidal;
  if (s == "implicit-euler") return Scheme::kImplicitEuler;
  throw InputError("unknown scheme '" + s + "' (trapezoidal | implicit-euler)");
}

std::string to_string(Scheme s) {
  return s == Scheme::kTrapezoidal ? "trapezoidal" : "implicit-euler";
}

// ---------------------------------------------------------------------------
// Nlp

Nlp::Nlp(ControlProblem problem, Mesh mesh, Scheme scheme, int control_piece, int endpoint_piece)
    : problem_(std::move(problem)), mesh_(std::move(mesh)), scheme_(scheme),
      control_piece_(control_piece), endpoint_piece_(endpoint_piece) {
  mesh_.validate();
  problem_.validate();
  nx_ = problem_.n_x;
  ny_ = problem_.n_y;
  nu_ = problem_.n_u;
  const int nn = num_nodes();
  z_dim_ = nn * (nx_ + ny_ + nu_);

  defect_dim_ = problem_.kind == ProblemKind::kSemiExplicit ? nx_ : problem_.target_dim();
  defect_rows_ = defect_dim_ * mesh_.intervals();
  algebraic_rows_ = problem_.algebraic ? problem_.algebraic->output_dim() * nn : 0;

  if (problem_.kind == ProblemKind::kImplicit) {
    if (problem_.target_set.tag != SetTag::kSingletonZero)
      throw InputError("transcription: implicit problems need the zero target set");
    // The running cost may not depend on the velocity block.
    const int v_off = nx_ + nu_;
    if (problem_.running_cost.components()[0].max_variable_index() >= v_off)
      throw InputError("transcription: running cost may not reference xdot");
  }

  const Polyhedron& up = [&]() -> const Polyhedron& {
    if (problem_.control_set.pieces.size() > 1) {
      if (control_piece_ < 0)
        throw InputError("transcription: control set is a union; select a piece");
      if (control_piece_ >= static_cast<int>(problem_.control_set.pieces.size()))
        throw InputError("transcription: control piece out of range");
      return problem_.control_set.pieces[static_cast<size_t>(control_piece_)];
    }
    control_piece_ = 0;
    return problem_.control_set.pieces[0];
  }();
  const Polyhedron& sp = [&]() -> const Polyhedron& {
    if (problem_.endpoint_set.pieces.size() > 1) {
      if (endpoint_piece_ < 0)
        throw InputError("transcription: endpoint set is a union; select a piece");
      if (endpoint_piece_ >= static_cast<int>(problem_.endpoint_set.pieces.size()))
        throw InputError("transcription: endpoint piece out of range");
      return problem_.endpoint_set.pieces[static_cast<size_t>(endpoint_piece_)];
    }
    endpoint_piece_ = 0;
    return problem_.endpoint_set.pieces[0];
  }();

  // Control rows per node.
  for (int i = 0; i < nn; ++i) {
    for (int r = 0; r < up.a.rows(); ++r) {
      LinearRow row;
      row.rhs = up.b[r];
      row.equality = false;
      row.node = i;
      for (int k = 0; k < nu_; ++k) {
        if (up.a(r, k) != 0.0) {
          row.idx.push_back(u_offset(i) + k);
          row.coeffs.conservativeResize(row.coeffs.size() + 1);
          row.coeffs[row.coeffs.size() - 1] = up.a(r, k);
        }
      }
      rows_.push_back(std::move(row));
    }
    for (int r = 0; r < up.g_eq.rows(); ++r) {
      LinearRow row;
      row.rhs = up.g_rhs[r];
      row.equality = true;
      row.node = i;
      for (int k = 0; k < nu_; ++k) {
        if (up.g_eq(r, k) != 0.0) {
          row.idx.push_back(u_offset(i) + k);
          row.coeffs.conservativeResize(row.coeffs.size() + 1);
          row.coeffs[row.coeffs.size() - 1] = up.g_eq(r, k);
        }
      }
      rows_.push_back(std::move(row));
    }
  }
  // Endpoint inequality rows (over x_0 and x_N).
  for (int r = 0; r < sp.a.rows(); ++r) {
    LinearRow row;
    row.rhs = sp.b[r];
    row.equality = false;
    row.node = -1;
    for (int k = 0; k < 2 * nx_; ++k) {
      if (sp.a(r, k) != 0.0) {
        row.idx.push_back(k < nx_ ? x_offset(0) + k : x_offset(nn - 1) + (k - nx_));
        row.coeffs.conservativeResize(row.coeffs.size() + 1);
        row.coeffs[row.coeffs.size() - 1] = sp.a(r, k);
      }
    }
    rows_.push_back(std::move(row));
  }

  // Endpoint equalities go into the equality system.
  num_eq_ = defect_rows_ + algebraic_rows_ + static_cast<int>(sp.g_eq.rows());
}

double Nlp::weight(int node) const {
  const int nn = num_nodes();
  if (node == 0) return 0.5 * mesh_.dt(0);
  if (node == nn - 1) return 0.5 * mesh_.dt(nn - 2);
  return 0.5 * (mesh_.dt(node - 1) + mesh_.dt(node));
}

Vector Nlp::node_point(const Vector& z, int node) const {
  Vector pt(nx_ + ny_ + nu_);
  pt.head(nx_) = z.segment(x_offset(node), nx_);
  if (ny_ > 0) pt.segment(nx_, ny_) = z.segment(y_offset(node), ny_);
  pt.tail(nu_) = z.segment(u_offset(node), nu_);
  return pt;
}

Vector Nlp::node_point_ics(const Vector& z, int node, int interval) const {
  Vector pt(nx_ + nu_ + nx_);
  pt.head(nx_) = z.segment(x_offset(node), nx_);
  pt.segment(nx_, nu_) = z.segment(u_offset(node), nu_);
  const double dt = mesh_.dt(interval);
  pt.tail(nx_) =
      (z.segment(x_offset(interval + 1), nx_) - z.segment(x_offset(interval), nx_)) / dt;
  return pt;
}

Vector Nlp::eval_eq(const Vector& z) const {
  Vector c(num_eq_);
  int r = 0;
  const int nn = num_nodes();
  if (problem_.kind == ProblemKind::kSemiExplicit) {
    std::vector<Vector> phi(static_cast<size_t>(nn));
    for (int i = 0; i < nn; ++i) phi[static_cast<size_t>(i)] = problem_.dynamics.eval(node_point(z, i));
    for (int i = 0; i < mesh_.intervals(); ++i) {
      const double dt = mesh_.dt(i);
      const Vector dx = z.segment(x_offset(i + 1), nx_) - z.segment(x_offset(i), nx_);
      Vector rhs;
      if (scheme_ == Scheme::kTrapezoidal)
        rhs = 0.5 * (phi[static_cast<size_t>(i)] + phi[static_cast<size_t>(i) + 1]);
      else
        rhs = phi[static_cast<size_t>(i) + 1];
      c.segment(r, nx_) = dx - dt * rhs;
      r += nx_;
    }
  } else {
    for (int i = 0; i < mesh_.intervals(); ++i) {
      const double dt = mesh_.dt(i);
      Vector val;
      if (scheme_ == Scheme::kTrapezoidal) {
        val = 0.5 * (problem_.dynamics.eval(node_point_ics(z, i, i)) +
                     problem_.dynamics.eval(node_point_ics(z, i + 1, i)));
      } else {
        val = problem_.dynamics.eval(node_point_ics(z, i + 1, i));
      }
      c.segment(r, defect_dim_) = dt * val;
      r += defect_dim_;
    }
  }
  if (problem_.algebraic) {
    const int nh = problem_.algebraic->output_dim();
    for (int i = 0; i < nn; ++i) {
      c.segment(r, nh) = problem_.algebraic->eval(node_point(z, i));
      r += nh;
    }
  }
  const Polyhedron& sp = problem_.endpoint_set.pieces[static_cast<size_t>(endpoint_piece_)];
  for (int k = 0; k < sp.g_eq.rows(); ++k) {
    double v = -sp.g_rhs[k];
    for (int j = 0; j < nx_; ++j) {
      v += sp.g_eq(k, j) * z[x_offset(0) + j];
      v += sp.g_eq(k, nx_ + j) * z[x_offset(nn - 1) + j];
    }
    c[r++] = v;
  }
  return c;
}

double Nlp::eval_objective(const Vector& z) const {
  double obj = 0.0;
  const int nn = num_nodes();
  for (int i = 0; i < nn; ++i) {
    Vector pt;
    if (problem_.kind == ProblemKind::kSemiExplicit) {
      pt = node_point(z, i);
    } else {
      pt = Vector::Zero(nx_ + nu_ + nx_);
      pt.head(nx_) = z.segment(x_offset(i), nx_);
      pt.segment(nx_, nu_) = z.segment(u_offset(i), nu_);
    }
    obj += weight(i) * problem_.running_cost.eval(pt)[0];
  }
  Vector e(2 * nx_);
  e.head(nx_) = z.segment(x_offset(0), nx_);
  e.tail(nx_) = z.segment(x_offset(nn - 1), nx_);
  obj += problem_.endpoint_cost.eval(e)[0];
  return obj;
}

Vector Nlp::objective_gradient(const Vector& z) const {
  Vector g = Vector::Zero(z_dim_);
  const int nn = num_nodes();
  for (int i = 0; i < nn; ++i) {
    Vector pt;
    if (problem_.kind == ProblemKind::kSemiExplicit) {
      pt = node_point(z, i);
    } else {
      pt = Vector::Zero(nx_ + nu_ + nx_);
      pt.head(nx_) = z.segment(x_offset(i), nx_);
      pt.segment(nx_, nu_) = z.segment(u_offset(i), nu_);
    }
    const Matrix jf = problem_.running_cost.jacobian(pt);
    const double w = weight(i);
    g.segment(x_offset(i), nx_) += w * jf.row(0).head(nx_).transpose();
    if (problem_.kind == ProblemKind::kSemiExplicit) {
      if (ny_ > 0) g.segment(y_offset(i), ny_) += w * jf.row(0).segment(nx_, ny_).transpose();
      g.segment(u_offset(i), nu_) += w * jf.row(0).tail(nu_).transpose();
    } else {
      g.segment(u_offset(i), nu_) += w * jf.row(0).segment(nx_, nu_).transpose();
    }
  }
  Vector e(2 * nx_);
  e.head(nx_) = z.segment(x_offset(0), nx_);
  e.tail(nx_) = z.segment(x_offset(nn - 1), nx_);
  const Matrix jep = problem_.endpoint_cost.jacobian(e);
  g.segment(x_offset(0), nx_) += jep.row(0).head(nx_).transpose();
  g.segment(x_offset(nn - 1), nx_) += jep.row(0).tail(nx_).transpose();
  return g;
}

Vector Nlp::eq_jacobian_transpose_times(const Vector& z, const Vector& w) const {
  Vector g = Vector::Zero(z_dim_);
  int r = 0;
  const int nn = num_nodes();
  if (problem_.kind == ProblemKind::kSemiExplicit) {
    std::vector<Matrix> jphi(static_cast<size_t>(nn));
    for (int i = 0; i < nn; ++i)
      jphi[static_cast<size_t>(i)] = problem_.dynamics.jacobian(node_point(z, i));
    for (int i = 0; i < mesh_.intervals(); ++i) {
      const double dt = mesh_.dt(i);
      const Vector wi = w.segment(r, nx_);
      g.segment(x_offset(i), nx_) -= wi;
      g.segment(x_offset(i + 1), nx_) += wi;
      auto add_node = [&](int node, double factor) {
        const Matrix& j = jphi[static_cast<size_t>(node)];
        g.segment(x_offset(node), nx_) -= factor * j.leftCols(nx_).transpose() * wi;
        if (ny_ > 0)
          g.segment(y_offset(node), ny_) -= factor * j.middleCols(nx_, ny_).transpose() * wi;
        g.segment(u_offset(node), nu_) -= factor * j.rightCols(nu_).transpose() * wi;
      };
      if (scheme_ == Scheme::kTrapezoidal) {
        add_node(i, 0.5 * dt);
        add_node(i + 1, 0.5 * dt);
      } else {
        add_node(i + 1, dt);
      }
      r += nx_;
    }
  } else {
    for (int i = 0; i < mesh_.intervals(); ++i) {
      const double dt = mesh_.dt(i);
      const Vector wi = w.segment(r, defect_dim_);
      auto add_node = [&](int node, double factor) {
        const Matrix j = problem_.dynamics.jacobian(node_point_ics(z, node, i));
        g.segment(x_offset(node), nx_) += factor * j.leftCols(nx_).transpose() * wi;
        g.segment(u_offset(node), nu_) += factor * j.middleCols(nx_, nu_).transpose() * wi;
        const Vector dv = (factor / dt) * (j.rightCols(nx_).transpose() * wi);
        g.segment(x_offset(i + 1), nx_) += dv;
        g.segment(x_offset(i), nx_) -= dv;
      };
      if (scheme_ == Scheme::kTrapezoidal) {
        add_node(i, 0.5 * dt);
        add_node(i + 1, 0.5 * dt);
      } else {
        add_node(i + 1, dt);
      }
      r += defect_dim_;
    }
  }
  if (problem_.algebraic) {
    const int nh = problem_.algebraic->output_dim();
    for (int i = 0; i < nn; ++i) {
      const Matrix jh = problem_.algebraic->jacobian(node_point(z, i));
      const Vector wi = w.segment(r, nh);
      g.segment(x_offset(i), nx_) += jh.leftCols(nx_).transpose() * wi;
      if (ny_ > 0) g.segment(y_offset(i), ny_) += jh.middleCols(nx_, ny_).transpose() * wi;
      g.segment(u_offset(i), nu_) += jh.rightCols(nu_).transpose() * wi;
      r += nh;
    }
  }
  const Polyhedron& sp = problem_.endpoint_set.pieces[static_cast<size_t>(endpoint_piece_)];
  for (int k = 0; k < sp.g_eq.rows(); ++k) {
    for (int j = 0; j < nx_; ++j) {
      g[x_offset(0) + j] += sp.g_eq(k, j) * w[r];
      g[x_offset(nn - 1) + j] += sp.g_eq(k, nx_ + j) * w[r];
    }
    ++r;
  }
  return g;
}

Vector Nlp::project(Vector z) const {
  // POCS sweeps; box-style rows converge immediately.
  for (int sweep = 0; sweep < 64; ++sweep) {
    double worst = 0.0;
    for (const auto& row : rows_) {
      double val = -row.rhs;
      double nrm2 = 0.0;
      for (size_t k = 0; k < row.idx.size(); ++k) {
        val += row.coeffs[static_cast<Eigen::Index>(k)] * z[row.idx[k]];
        nrm2 += row.coeffs[static_cast<Eigen::Index>(k)] * row.coeffs[static_cast<Eigen::Index>(k)];
      }
      if (nrm2 == 0.0) continue;
      double shift = 0.0;
      if (row.equality) {
        shift = val / nrm2;
        worst = std::max(worst, std::abs(val));
      } else if (val > 0.0) {
        shift = val / nrm2;
        worst = std::max(worst, val);
      }
      if (shift != 0.0) {
        for (size_t k = 0; k < row.idx.size(); ++k)
          z[row.idx[k]] -= shift * row.coeffs[static_cast<Eigen::Index>(k)];
      }
    }
    if (worst <= 1e-12) break;
  }
  return z;
}

double Nlp::linear_row_violation(const Vector& z) const {
  double worst = 0.0;
  for (const auto& row : rows_) {
    double val = -row.rhs;
    for (size_t k = 0; k < row.idx.size(); ++k)
      val += row.coeffs[static_cast<Eigen::Index>(k)] * z[row.idx[k]];
    worst = std::max(worst, row.equality ? std::abs(val) : std::max(0.0, val));
  }
  return worst;
}

Vector Nlp::initial_guess() const { return initial_guess(std::nullopt, std::nullopt, std::nullopt); }

Vector Nlp::initial_guess(const std::optional<Vector>& x_init, const std::optional<Vector>& y_init,
                          const std::optional<Vector>& u_init) const {
  Vector z = Vector::Zero(z_dim_);
  const int nn = num_nodes();
  // Linear interpolation between pinned endpoint values when available.
  Vector xa = Vector::Zero(nx_), xb = Vector::Zero(nx_);
  const Polyhedron& sp = problem_.endpoint_set.pieces[static_cast<size_t>(endpoint_piece_)];
  if (auto iv = sp.axis_intervals()) {
    for (int j = 0; j < nx_; ++j) {
      const auto& a = (*iv)[static_cast<size_t>(j)];
      if (a.lo == a.hi) xa[j] = a.lo;
      const auto& b = (*iv)[static_cast<size_t>(j) + static_cast<size_t>(nx_)];
      if (b.lo == b.hi) xb[j] = b.lo;
    }
  }
  for (int i = 0; i < nn; ++i) {
    const double s = static_cast<double>(i) / (nn - 1);
    z.segment(x_offset(i), nx_) = (1.0 - s) * xa + s * xb;
  }
  auto fill = [&](const std::optional<Vector>& init, int dim, auto offset) {
    if (!init) return;
    if (init->size() == dim) {
      for (int i = 0; i < nn; ++i) z.segment(offset(i), dim) = *init;
    } else if (init->size() == static_cast<Eigen::Index>(dim) * nn) {
      for (int i = 0; i < nn; ++i) z.segment(offset(i), dim) = init->segment(i * dim, dim);
    } else {
      throw InputError("initial guess has the wrong size");
    }
  };
  fill(x_init, nx_, [&](int i) { return x_offset(i); });
  if (ny_ > 0) fill(y_init, ny_, [&](int i) { return y_offset(i); });
  fill(u_init, nu_, [&](int i) { return u_offset(i); });
  return project(std::move(z));
}

Nlp discretize(const ControlProblem& p, int intervals, Scheme scheme, int control_piece,
               int endpoint_piece) {
  return Nlp(p, Mesh::uniform(p.t0, p.t1, intervals), scheme, control_piece, endpoint_piece);
}

// ---------------------------------------------------------------------------
// Augmented Lagrangian with projected Barzilai-Borwein steps

namespace {

double al_value(const Nlp& nlp, const Vector& z, const Vector& m, double rho) {
  const Vector c = nlp.eval_eq(z);
  return nlp.eval_objective(z) + m.dot(c) + 0.5 * rho * c.squaredNorm();
}

Vector al_gradient(const Nlp& nlp, const Vector& z, const Vector& m, double rho) {
  const Vector c = nlp.eval_eq(z);
  return nlp.objective_gradient(z) + nlp.eq_jacobian_transpose_times(z, m + rho * c);
}

/// Non-monotone spectral projected gradient on the augmented Lagrangian.
int inner_minimize(const Nlp& nlp, Vector& z, const Vector& m, double rho, double tol,
                   int max_iter) {
  double f_cur = al_value(nlp, z, m, rho);
  Vector g_cur = al_gradient(nlp, z, m, rho);
  std::vector<double> ref_values = {f_cur};
  double alpha = 1.0 / std::max(1e-8, g_cur.lpNorm<Eigen::Infinity>());
  int iters = 0;
  for (; iters < max_iter; ++iters) {
    const Vector pg = nlp.project(z - g_cur) - z;
    if (pg.lpNorm<Eigen::Infinity>() <= tol) break;

    alpha = std::clamp(alpha, 1e-12, 1e8);
    Vector d = nlp.project(z - alpha * g_cur) - z;
    double gd = g_cur.dot(d);
    if (d.lpNorm<Eigen::Infinity>() == 0.0 || gd >= 0.0) {
      alpha = 1.0 / std::max(1e-8, g_cur.lpNorm<Eigen::Infinity>());
      d = nlp.project(z - alpha * g_cur) - z;
      gd = g_cur.dot(d);
      if (d.lpNorm<Eigen::Infinity>() == 0.0 || gd >= 0.0) break;
    }

    const double ref = *std::max_element(ref_values.begin(), ref_values.end());
    double lambda = 1.0;
    double f_new = 0.0;
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      f_new = al_value(nlp, z + lambda * d, m, rho);
      if (f_new <= ref + 1e-4 * lambda * gd) {
        accepted = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!accepted) break;

    const Vector s = lambda * d;
    z += s;
    const Vector g_new = al_gradient(nlp, z, m, rho);
    const Vector y = g_new - g_cur;
    const double sy = s.dot(y);
    alpha = sy > 1e-16 ? s.squaredNorm() / sy : alpha * 2.0;
    g_cur = g_new;
    f_cur = f_new;
    ref_values.push_back(f_cur);
    if (ref_values.size() > 10) ref_values.erase(ref_values.begin());
  }
  return iters;
}

}  // namespace

NlpSolution solve_nlp(const Nlp& nlp, const Vector& init, const NlpOptions& opts) {
  if (init.size() != nlp.z_dim()) throw InputError("solve: initial point dimension mismatch");
  NlpSolution sol;
  sol.z = nlp.project(init);
  sol.eq_multipliers = Vector::Zero(nlp.num_eq());
  double rho = opts.initial_penalty;
  double prev_feas = std::numeric_limits<double>::infinity();

  for (int outer = 0; outer < opts.max_outer; ++outer) {
    sol.outer_iterations = outer + 1;
    const double inner_tol = std::max(opts.inner_tol, 1e-2 * std::pow(0.1, outer));
    sol.inner_iterations +=
        inner_minimize(nlp, sol.z, sol.eq_multipliers, rho, inner_tol, opts.max_inner);

    const Vector c = nlp.eval_eq(sol.z);
    const double feas = c.size() > 0 ? c.lpNorm<Eigen::Infinity>() : 0.0;
    sol.eq_multipliers += rho * c;
    sol.al_history.push_back(nlp.eval_objective(sol.z) + sol.eq_multipliers.dot(c) -
                             0.5 * rho * c.squaredNorm());

    const double stat = kkt_stationarity(nlp, sol.z, sol.eq_multipliers);
    sol.final_feasibility = feas;
    sol.final_stationarity = stat;
    if (feas <= opts.feas_tol && stat <= opts.stat_tol) {
      sol.converged = true;
      break;
    }
    if (feas > 0.25 * prev_feas) rho = std::min(rho * opts.penalty_growth, 1e12);
    prev_feas = feas;
  }

  // Multipliers for the active linear rows from the stationarity residual.
  const auto& rows = nlp.linear_rows();
  sol.row_multipliers = Vector::Zero(static_cast<Eigen::Index>(rows.size()));
  if (!rows.empty()) {
    const Vector grad_l = nlp.objective_gradient(sol.z) +
                          nlp.eq_jacobian_transpose_times(sol.z, sol.eq_multipliers);
    std::vector<int> active;
    for (size_t r = 0; r < rows.size(); ++r) {
      double val = -rows[r].rhs;
      for (size_t k = 0; k < rows[r].idx.size(); ++k)
        val += rows[r].coeffs[static_cast<Eigen::Index>(k)] * sol.z[rows[r].idx[k]];
      if (rows[r].equality || std::abs(val) <= 1e-7) active.push_back(static_cast<int>(r));
    }
    if (!active.empty()) {
      Matrix a(nlp.z_dim(), static_cast<Eigen::Index>(active.size()));
      a.setZero();
      for (size_t k = 0; k < active.size(); ++k) {
        const auto& row = rows[static_cast<size_t>(active[k])];
        for (size_t j = 0; j < row.idx.size(); ++j)
          a(row.idx[j], static_cast<Eigen::Index>(k)) = row.coeffs[static_cast<Eigen::Index>(j)];
      }
      LeastSquaresResult ls = least_squares(a, -grad_l);
      for (size_t k = 0; k < active.size(); ++k) {
        const auto& row = rows[static_cast<size_t>(active[k])];
        double mult = ls.solution[static_cast<Eigen::Index>(k)];
        if (!row.equality) mult = std::max(0.0, mult);
        sol.row_multipliers[active[k]] = mult;
      }
    }
  }
  return sol;
}

double kkt_stationarity(const Nlp& nlp, const Vector& z, const Vector& eq_multipliers) {
  const Vector grad =
      nlp.objective_gradient(z) + nlp.eq_jacobian_transpose_times(z, eq_multipliers);
  const Vector pg = nlp.project(z - grad) - z;
  return pg.lpNorm<Eigen::Infinity>();
}

// ---------------------------------------------------------------------------
// Adjoint extraction

Certificate extract_adjoint(const Nlp& nlp, const NlpSolution& sol) {
  if (!sol.converged) throw InputError("extract_adjoint: solver did not converge");
  const ControlProblem& p = nlp.problem();
  const int nn = nlp.num_nodes();
  const int nx = p.n_x, ny = p.n_y, nu = p.n_u;

  Certificate cert;
  cert.mesh = nlp.mesh();
  cert.lambda0 = 1.0;
  cert.traj.x = Matrix(nn, nx);
  cert.traj.y = Matrix(nn, ny);
  cert.traj.u = Matrix(nn, nu);
  for (int i = 0; i < nn; ++i) {
    cert.traj.x.row(i) = sol.z.segment(nlp.x_offset(i), nx).transpose();
    if (ny > 0) cert.traj.y.row(i) = sol.z.segment(nlp.y_offset(i), ny).transpose();
    cert.traj.u.row(i) = sol.z.segment(nlp.u_offset(i), nu).transpose();
  }
  cert.radius = Vector(nn);
  for (int i = 0; i < nn; ++i) cert.radius[i] = p.radius.at(cert.mesh.nodes[static_cast<size_t>(i)]);

  const int defect_dim = nlp.defect_rows() / cert.mesh.intervals();
  // The multiplier of an interval defect approximates the arc value at the
  // interval midpoint (equivalently, the multiplier of the 1/dt-scaled defect
  // divided by dt); node values average the adjacent intervals.
  auto interval_track = [&](int row_offset) {
    Matrix track(nn, defect_dim);
    auto value = [&](int interval) {
      return sol.eq_multipliers.segment(row_offset + interval * defect_dim, defect_dim);
    };
    track.row(0) = value(0).transpose();
    track.row(nn - 1) = value(cert.mesh.intervals() - 1).transpose();
    for (int i = 1; i + 1 < nn; ++i)
      track.row(i) = 0.5 * (value(i - 1) + value(i)).transpose();
    return track;
  };

  if (p.kind == ProblemKind::kSemiExplicit) {
    cert.p = interval_track(0);
    if (p.algebraic) {
      const int nh = p.algebraic->output_dim();
      Matrix lam(nn, nh);
      for (int i = 0; i < nn; ++i) {
        lam.row(i) = sol.eq_multipliers.segment(nlp.defect_rows() + i * nh, nh).transpose() /
                     nlp.weight(i);
      }
      cert.lambda = lam;
    }
  } else {
    // The defect multiplier is the target multiplier track; p comes from the
    // velocity slot of the explicit adjoint relation.
    const Matrix lam = interval_track(0);
    cert.lambda = lam;
    cert.p = Matrix::Zero(nn, nx);
    for (int i = 0; i < nn; ++i) {
      Vector pt(nx + nu + nx);
      pt.head(nx) = cert.traj.x.row(i).transpose();
      pt.segment(nx, nu) = cert.traj.u.row(i).transpose();
      pt.tail(nx) = cert.velocity(i);
      const Matrix j = p.dynamics.jacobian(pt);
      cert.p.row(i) = (j.rightCols(nx).transpose() * lam.row(i).transpose()).transpose();
    }
  }

  // Control multiplier from the active linear rows at each node.
  Matrix mu = Matrix::Zero(nn, nu);
  const auto& rows = nlp.linear_rows();
  for (size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].node < 0) continue;
    const int i = rows[r].node;
    const double scale = sol.row_multipliers[static_cast<Eigen::Index>(r)] / nlp.weight(i);
    if (scale == 0.0) continue;
    for (size_t k = 0; k < rows[r].idx.size(); ++k) {
      const int col = rows[r].idx[k] - nlp.u_offset(i);
      mu(i, col) += scale * rows[r].coeffs[static_cast<Eigen::Index>(k)];
    }
  }
  cert.mu = mu;
  cert.validate();
  return cert;
}

SolveOutcome solve_and_verify(const ControlProblem& p, int intervals, Scheme scheme,
                              const NlpOptions& nlp_opts, const VerifyOptions& vopts) {
  SolveOutcome out;
  Nlp nlp = discretize(p, intervals, scheme);
  const Vector init = nlp.initial_guess(nlp_opts.x_init, nlp_opts.y_init, nlp_opts.u_init);
  out.solution = solve_nlp(nlp, init, nlp_opts);
  if (!out.solution.converged) {
    out.notes.push_back("solver did not converge: feasibility " +
                        std::to_string(out.solution.final_feasibility) + ", stationarity " +
                        std::to_string(out.solution.final_stationarity));
    return out;
  }
  out.certificate = extract_adjoint(nlp, out.solution);
  out.report = verify_certificate(out.certificate, p, vopts);

  // Qualification sweep along the solution; a missing calmness-sufficient
  // condition voids the guarantee behind the necessary conditions.
  try {
    CqOptions cq_opts;
    cq_opts.seed = vopts.seed;
    const std::vector<Vector> pts = system_node_points(p, out.certificate);
    TrajectoryCqResult cq =
        check_along_trajectory(p, pts, out.certificate.mesh.nodes, TrajectoryCqMode::kAlong,
                               cq_opts);
    if (!cq.sufficient_everywhere) {
      out.report.notes.push_back(
          "constraint qualifications: no calmness-sufficient condition certified along the "
          "trajectory; the verified conditions are not guaranteed to be necessary here");
    }
  } catch (const std::exception& e) {
    out.report.notes.push_back(std::string("qualification sweep skipped: ") + e.what());
  }
  return out;
}

}  // namespace daeopt
