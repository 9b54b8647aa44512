#pragma once

#include <optional>
#include <string>
#include <vector>

#include "expr.hpp"
#include "polyhedra.hpp"

namespace daeopt {

/// Radius function R(t): scalar (possibly +inf) or a piecewise-linear table.
class RadiusFn {
 public:
  RadiusFn() = default;
  static RadiusFn constant(double r);
  static RadiusFn table(std::vector<std::pair<double, double>> knots);

  double at(double t) const;
  bool is_finite() const;
  bool is_constant() const { return knots_.empty(); }
  double constant_value() const { return scalar_; }
  const std::vector<std::pair<double, double>>& knots() const { return knots_; }

 private:
  double scalar_ = std::numeric_limits<double>::infinity();
  std::vector<std::pair<double, double>> knots_;  // sorted by t
};

enum class ProblemKind {
  kSemiExplicit,  // xdot = dyn(x,y,u), 0 = alg(x,y,u)
  kImplicit,      // dyn(x,u,xdot) in target
};

/// Declaration of dynamics in the form E xdot - g(x, u) = 0.
struct StructuredE {
  Matrix e;           // m x n_x
  VectorFunction g;   // over (x, u), m components
};

/// Full problem data for the supported optimal-control variants.
struct ControlProblem {
  std::string name;
  ProblemKind kind = ProblemKind::kSemiExplicit;

  int n_x = 0;
  int n_y = 0;  // algebraic variables (semi-explicit only)
  int n_u = 0;

  // Semi-explicit: dynamics over (x, y, u) with n_x components.
  // Implicit: constraint map over (x, u, xdot) with target_dim components.
  VectorFunction dynamics;
  std::optional<VectorFunction> algebraic;  // over (x, y, u)
  VectorFunction running_cost;              // scalar, same layout as dynamics
  VectorFunction endpoint_cost;             // scalar over (x0, xf)

  PolyUnion control_set;   // ambient n_u
  PolyUnion endpoint_set;  // ambient 2 * n_x
  PolyUnion target_set;    // ambient = dynamics output dim (implicit kind)

  double t0 = 0.0;
  double t1 = 1.0;
  RadiusFn radius;

  std::optional<StructuredE> structured_e;

  // Original text fields, kept verbatim for round-trip serialization.
  struct SourceText {
    std::vector<std::string> dynamics;
    std::vector<std::string> algebraic;
    std::string running_cost;
    std::string endpoint_cost;
    std::string control_set;
    std::string endpoint_set;
    std::string target_set;
    std::vector<std::string> structured_g;
  } source;

  int algebraic_dim() const { return algebraic ? algebraic->output_dim() : 0; }
  int target_dim() const { return dynamics.output_dim(); }
  /// Layout of one trajectory node: (x, y, u) or (x, u, v).
  VariableLayout node_layout() const;
  VariableLayout endpoint_layout() const;

  void validate() const;
};

ControlProblem parse_problem(const std::string& json_text);
ControlProblem load_problem(const std::string& path);
std::string problem_to_json(const ControlProblem& p);

// --- constraint systems -------------------------------------------------------

enum class BlockRole { kAlpha, kControl, kZero };

/// Perturbed constraint map at a point: map(point) + Theta in target, with the
/// control block confined to the control set. Block roles select which slots
/// of the transposed-Jacobian product are free (alpha), matched against the
/// control-set normal cone (control) or pinned to zero (zero).
struct ConstraintSystem {
  VectorFunction map;
  PolyUnion target;
  PolyUnion control_set;
  VariableLayout layout;
  std::vector<BlockRole> roles;  // parallel to layout.blocks()

  int block_offset(int i) const;
  int block_dim(int i) const;
  int control_block() const;
  std::vector<int> alpha_coordinates() const;
  std::vector<int> zero_coordinates() const;

  void validate() const;
};

/// The constraint system the paper's qualification battery applies to:
/// the algebraic part for semi-explicit problems (y treated as a control),
/// or the implicit constraint map over (x, u, xdot).
ConstraintSystem constraint_system_for(const ControlProblem& p);

}  // namespace daeopt
