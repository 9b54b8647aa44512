#pragma once

#include <optional>
#include <string>
#include <vector>

#include "certificate.hpp"
#include "problem.hpp"

namespace daeopt {

enum class Scheme { kTrapezoidal, kImplicitEuler };

Scheme scheme_from_string(const std::string& s);
std::string to_string(Scheme s);

/// Finite-dimensional program from direct transcription. Decision vector
/// z = [x_0..x_N | y_0..y_N | u_0..u_N]; algebraic variables are discretized
/// as controls (node values, no continuity constraint).
class Nlp {
 public:
  Nlp(ControlProblem problem, Mesh mesh, Scheme scheme, int control_piece, int endpoint_piece);

  const ControlProblem& problem() const { return problem_; }
  const Mesh& mesh() const { return mesh_; }
  Scheme scheme() const { return scheme_; }

  int num_nodes() const { return mesh_.num_nodes(); }
  int z_dim() const { return z_dim_; }
  int num_eq() const { return num_eq_; }
  int defect_rows() const { return defect_rows_; }
  int algebraic_rows() const { return algebraic_rows_; }

  int x_offset(int node) const { return node * nx_; }
  int y_offset(int node) const { return (num_nodes() * nx_) + node * ny_; }
  int u_offset(int node) const { return num_nodes() * (nx_ + ny_) + node * nu_; }
  double weight(int node) const;  // trapezoidal quadrature weight

  Vector eval_eq(const Vector& z) const;
  double eval_objective(const Vector& z) const;
  Vector objective_gradient(const Vector& z) const;
  Vector eq_jacobian_transpose_times(const Vector& z, const Vector& w) const;

  /// Projection onto the linear rows (control-set and endpoint inequalities).
  Vector project(Vector z) const;
  double linear_row_violation(const Vector& z) const;

  struct LinearRow {
    Vector coeffs;  // sparse over z, stored with indices
    std::vector<int> idx;
    double rhs;
    bool equality;
    int node;  // -1 for endpoint rows
  };
  const std::vector<LinearRow>& linear_rows() const { return rows_; }

  Vector initial_guess() const;
  Vector initial_guess(const std::optional<Vector>& x_init, const std::optional<Vector>& y_init,
                       const std::optional<Vector>& u_init) const;

 private:
  Vector node_point(const Vector& z, int node) const;          // (x, y, u) layout
  Vector node_point_ics(const Vector& z, int node, int interval) const;  // (x, u, d)

  ControlProblem problem_;
  Mesh mesh_;
  Scheme scheme_;
  int nx_ = 0, ny_ = 0, nu_ = 0;
  int z_dim_ = 0;
  int defect_dim_ = 0;  // rows per interval
  int defect_rows_ = 0;
  int algebraic_rows_ = 0;
  int num_eq_ = 0;
  int control_piece_ = 0;
  int endpoint_piece_ = 0;
  std::vector<LinearRow> rows_;
};

struct NlpOptions {
  int max_outer = 50;
  double penalty_growth = 10.0;
  double initial_penalty = 10.0;
  double inner_tol = 1e-9;
  int max_inner = 4000;
  double feas_tol = 1e-8;
  double stat_tol = 1e-6;
  std::optional<Vector> x_init, y_init, u_init;  // constant fills or full tracks
};

struct NlpSolution {
  Vector z;
  Vector eq_multipliers;
  Vector row_multipliers;  // one per linear inequality row (>= 0), 0 for equalities
  bool converged = false;
  int outer_iterations = 0;
  int inner_iterations = 0;
  double final_feasibility = 0.0;
  double final_stationarity = 0.0;
  std::vector<double> al_history;  // augmented-Lagrangian value per outer step
};

Nlp discretize(const ControlProblem& p, int intervals, Scheme scheme, int control_piece = -1,
               int endpoint_piece = -1);

/// Augmented-Lagrangian outer loop with a projected Barzilai-Borwein inner
/// solver. Deterministic; returns the best iterate flagged when not converged.
NlpSolution solve_nlp(const Nlp& nlp, const Vector& init, const NlpOptions& opts = {});

/// Independent KKT stationarity measure (projected-gradient residual of the
/// Lagrangian), recomputed from scratch.
double kkt_stationarity(const Nlp& nlp, const Vector& z, const Vector& eq_multipliers);

/// Discrete adjoint and multiplier extraction from a converged solution.
Certificate extract_adjoint(const Nlp& nlp, const NlpSolution& sol);

struct SolveOutcome {
  Certificate certificate;
  VerifyReport report;
  NlpSolution solution;
  std::vector<std::string> notes;
};

/// discretize + solve + extract + verify, with a qualification sweep along the
/// solution trajectory annotating the report.
SolveOutcome solve_and_verify(const ControlProblem& p, int intervals, Scheme scheme,
                              const NlpOptions& nlp_opts = {}, const VerifyOptions& vopts = {});

}  // namespace daeopt
