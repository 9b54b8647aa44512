#pragma once

#include <optional>
#include <string>
#include <vector>

#include "problem.hpp"

namespace daeopt {

struct Mesh {
  std::vector<double> nodes;  // strictly increasing, at least 3 (N >= 2 intervals)

  static Mesh uniform(double t0, double t1, int intervals);
  int num_nodes() const { return static_cast<int>(nodes.size()); }
  int intervals() const { return num_nodes() - 1; }
  double dt(int interval) const { return nodes[interval + 1] - nodes[interval]; }
  void validate() const;
};

/// Node values of a candidate trajectory; rows = mesh nodes.
struct Trajectory {
  Matrix x;  // nodes x n_x
  Matrix y;  // nodes x n_y (0 columns when absent)
  Matrix u;  // nodes x n_u
  Matrix v;  // nodes x n_x, optional (0 rows -> finite differences of x)

  bool has_v() const { return v.rows() > 0; }
};

/// Candidate certificate: trajectory, adjoint arc, multipliers, lambda0.
struct Certificate {
  Mesh mesh;
  Trajectory traj;
  double lambda0 = 1.0;
  Matrix p;                      // nodes x n_x
  std::optional<Matrix> lambda;  // nodes x m (target multiplier track)
  std::optional<Matrix> mu;      // nodes x n_u (control multiplier track)
  Vector radius;                 // per node, > 0 (possibly +inf)

  void validate() const;
  /// Velocity at a node: the stored v track or a finite difference of x.
  Vector velocity(int node) const;
};

Certificate parse_certificate(const std::string& json_text);
Certificate load_certificate(const std::string& path);
std::string certificate_to_json(const Certificate& c);

/// Finite-difference derivative of the adjoint track at a node (central in
/// the interior, one-sided at the ends; nonuniform meshes supported).
Vector adjoint_derivative(const Certificate& cert, int node);

enum class CondStatus { kPass, kFail, kInconclusive };
std::string to_string(CondStatus s);

struct ConditionResult {
  std::string name;
  CondStatus status = CondStatus::kInconclusive;
  double worst_residual = 0.0;
  int location = -1;  // node index (or -1)
  std::vector<std::string> notes;
};

struct VerifyOptions {
  double tol_feas = 1e-8;
  double tol_euler = 1e-6;     // scaled by (1 + |p_i|)
  double tol_trans = 1e-8;
  double tol_weier = 1e-6;
  double tol_nontrivial = 1e-8;
  int weier_samples = 200;
  double weier_radius_cap = 10.0;  // sampling cap when R(t) = +inf
  double min_coverage = 0.1;
  int newton_max_iter = 30;
  double newton_tol = 1e-10;
  uint64_t seed = 971203;
  int lambda0_policy = -1;  // -1: use the certificate; 0/1: override
};

struct MultiplierBoundConstants {
  double kappa = 1.0;
  double k = 1.0;
  double k_phi = 0.0;
  double k_f = 0.0;
  bool estimated = false;
};

struct VerifyReport {
  std::vector<ConditionResult> conditions;
  CondStatus overall = CondStatus::kInconclusive;
  std::vector<std::string> notes;
  VerifyOptions options;
  MultiplierBoundConstants bound_constants;
  // Multiplier tracks recovered during verification (when absent in the input).
  std::optional<Matrix> recovered_lambda;
  std::optional<Matrix> recovered_mu;

  const ConditionResult* find(const std::string& name) const;
};

ConditionResult verify_nontriviality(const Certificate& cert, double tol);
ConditionResult verify_transversality(const Certificate& cert, const ControlProblem& p,
                                      double tol);

struct EulerResult {
  ConditionResult condition;
  Matrix lambda;  // per node (given or recovered)
  Matrix mu;      // per node
};
EulerResult verify_euler_explicit(const Certificate& cert, const ControlProblem& p,
                                  const VerifyOptions& opts);

ConditionResult verify_weierstrass(const Certificate& cert, const ControlProblem& p,
                                   const VerifyOptions& opts);

ConditionResult verify_multiplier_bound(const Certificate& cert,
                                        const MultiplierBoundConstants& constants, double lambda0,
                                        const Matrix& lambda_track);

struct StructuredEResult {
  ConditionResult condition;
  Matrix lambda;  // reconstructed lambda_phi per node
};
StructuredEResult verify_structured_e(const Certificate& cert, const ControlProblem& p,
                                      const VerifyOptions& opts);

/// Estimate the bound constants from sampled gradients along the trajectory.
MultiplierBoundConstants estimate_bound_constants(const Certificate& cert,
                                                  const ControlProblem& p);

/// Run every applicable condition and aggregate.
VerifyReport verify_certificate(const Certificate& cert, const ControlProblem& p,
                                const VerifyOptions& opts = {});

/// Node points in the constraint-system layout (x,y,u) or (x,u,v), as used by
/// the qualification ladder along the trajectory.
std::vector<Vector> system_node_points(const ControlProblem& p, const Certificate& cert);

}  // namespace daeopt
