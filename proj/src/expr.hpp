#pragma once

#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace daeopt {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Raised for malformed input: syntax errors, unknown names, bad dimensions.
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

/// Raised when an evaluation leaves the domain of an elementary function
/// (log of a non-positive value, division by zero, ...).
class EvalDomainError : public std::runtime_error {
 public:
  explicit EvalDomainError(const std::string& what) : std::runtime_error(what) {}
};

/// Named blocks of scalar variables, e.g. {x:2, u:1} declares x1, x2, u.
/// A block of dimension 1 is addressable both by its bare name and by
/// name + "1"; larger blocks only by name + index (1-based).
class VariableLayout {
 public:
  struct Block {
    std::string name;
    int dim = 0;
  };

  VariableLayout() = default;
  explicit VariableLayout(std::vector<Block> blocks);

  int total_dim() const { return total_; }
  const std::vector<Block>& blocks() const { return blocks_; }

  int block_offset(const std::string& name) const;
  int block_dim(const std::string& name) const;
  bool has_block(const std::string& name) const;

  /// Flat index for a variable token, or nullopt if undeclared.
  std::optional<int> index_of(const std::string& token) const;
  /// Canonical display name for a flat index.
  const std::string& name_of(int index) const;

  bool operator==(const VariableLayout& other) const;

 private:
  std::vector<Block> blocks_;
  std::vector<std::string> names_;
  int total_ = 0;
};

/// Second-order directional jet: value, first and second derivative of
/// t -> f(point + t * dir) at t = 0.
struct Jet2 {
  double value = 0.0;
  double d1 = 0.0;
  double d2 = 0.0;
};

/// Immutable scalar expression tree over a variable layout.
///
/// Nodes: constants, variable references, {neg, sin, cos, exp, log, sqrt},
/// {+, -, *, /} and integer powers with constant exponent >= 0. Constant
/// subtrees are folded at construction so affinity detection stays syntactic.
class Expression {
 public:
  Expression() = default;

  static Expression constant(double value);
  static Expression variable(int index, std::string name);

  static Expression add(const Expression& a, const Expression& b);
  static Expression sub(const Expression& a, const Expression& b);
  static Expression mul(const Expression& a, const Expression& b);
  static Expression div(const Expression& a, const Expression& b);
  static Expression neg(const Expression& a);
  static Expression pow_int(const Expression& a, int exponent);
  static Expression apply(const std::string& function, const Expression& a);

  bool valid() const { return root_ != nullptr; }

  double eval(std::span<const double> point) const;
  /// Value plus dense gradient (size = point size).
  double eval_gradient(std::span<const double> point, Vector& grad) const;
  /// Directional second-order Taylor data along dir.
  Jet2 eval_jet(std::span<const double> point, std::span<const double> dir) const;

  /// True iff the (constant-folded) tree has polynomial degree <= 1.
  bool is_affine() const;
  /// Largest variable index referenced, or -1 for constant expressions.
  int max_variable_index() const;

  std::string to_string() const;

  struct Node;  // exposed for the implementation file only

 private:
  explicit Expression(std::shared_ptr<const Node> root) : root_(std::move(root)) {}
  std::shared_ptr<const Node> root_;
};

/// Parse an infix expression over the layout's variables.
/// Grammar: + - * / ^ (constant integer exponents), parentheses, function
/// calls sin( ) cos( ) exp( ) log( ) sqrt( ), decimal literals.
Expression parse_expression(const std::string& text, const VariableLayout& layout);

/// Ordered list of scalar components sharing one variable layout.
class VectorFunction {
 public:
  VectorFunction() = default;
  VectorFunction(VariableLayout layout, std::vector<Expression> components);

  static VectorFunction parse(const std::vector<std::string>& texts,
                              const VariableLayout& layout);

  int output_dim() const { return static_cast<int>(components_.size()); }
  int input_dim() const { return layout_.total_dim(); }
  const VariableLayout& layout() const { return layout_; }
  const std::vector<Expression>& components() const { return components_; }

  Vector eval(const Vector& point) const;
  /// Row i = gradient of component i (forward-mode, exact).
  Matrix jacobian(const Vector& point) const;
  /// Component-wise q_i = d^T Hess(f_i)(point) d.
  Vector hessian_quadratic_form(const Vector& point, const Vector& dir) const;

  std::vector<bool> is_affine() const;
  bool all_affine() const;

 private:
  void check_point(const Vector& point) const;

  VariableLayout layout_;
  std::vector<Expression> components_;
};

}  // namespace daeopt
