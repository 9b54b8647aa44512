#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "expr.hpp"

namespace daeopt {

/// Raised when an operation needs generator enumeration past the supported
/// ambient dimension (double description is capped at dimension 8).
class CapError : public std::runtime_error {
 public:
  explicit CapError(const std::string& what) : std::runtime_error(what) {}
};

inline constexpr int kGeneratorDimCap = 8;
inline constexpr double kSetTol = 1e-9;

/// Convex polyhedron { x : a x <= b, g_eq x = g_rhs }.
struct Polyhedron {
  Matrix a;      // may have 0 rows
  Vector b;
  Matrix g_eq;   // may have 0 rows
  Vector g_rhs;
  int dim = 0;

  static Polyhedron whole_space(int dim);
  static Polyhedron singleton(const Vector& v);
  static Polyhedron box(const Vector& lo, const Vector& hi);
  static Polyhedron nonpositive(int dim);

  void validate() const;
  bool contains(const Vector& x, double tol = kSetTol) const;
  /// Indices of inequality rows tight at x (|a_i x - b_i| <= tol).
  std::vector<int> active_rows(const Vector& x, double tol = kSetTol) const;

  struct AxisInterval {
    double lo;
    double hi;
  };
  /// Per-coordinate intervals when every row touches a single coordinate.
  std::optional<std::vector<AxisInterval>> axis_intervals() const;
};

/// Generators and lineality of a polyhedral cone (rows = vectors).
struct GeneratorRep {
  Matrix rays;
  Matrix lineality;
};

/// Extreme rays + lineality space of { w : ineq w <= 0, eq w = 0 } by the
/// double description method. Throws CapError above kGeneratorDimCap.
GeneratorRep double_description(const Matrix& ineq, const Matrix& eq, int dim);

/// Polyhedral cone with an H-representation { w : a w <= 0, e w = 0 } and a
/// lazily derived V-representation (or the other way around). Immutable from
/// the outside; the missing representation is memoized under a lock.
class PolyCone {
 public:
  static PolyCone from_h(Matrix ineq, Matrix eq, int dim);
  static PolyCone from_v(Matrix rays, Matrix lineality, int dim);
  static PolyCone empty(int dim);
  static PolyCone whole_space(int dim);
  static PolyCone zero(int dim);

  int dim() const { return dim_; }
  bool is_empty() const { return empty_; }

  bool has_h() const;
  bool has_v() const;
  /// H-representation, computing it if needed (may throw CapError).
  const Matrix& h_ineq() const;
  const Matrix& h_eq() const;
  /// V-representation, computing it if needed (may throw CapError).
  const Matrix& rays() const;
  const Matrix& lineality() const;

  struct Membership {
    bool inside = false;
    double violation = 0.0;  // max constraint violation (0 when inside)
  };
  Membership contains(const Vector& v, double tol = kSetTol) const;

  /// True iff the cone is {0}.
  bool is_trivial(double tol = 1e-7) const;

 private:
  PolyCone() = default;
  void ensure_h() const;
  void ensure_v() const;

  struct Reps {
    std::optional<std::pair<Matrix, Matrix>> h;  // (ineq, eq)
    std::optional<std::pair<Matrix, Matrix>> v;  // (rays, lineality)
    std::mutex lock;
  };
  std::shared_ptr<Reps> reps_ = std::make_shared<Reps>();
  int dim_ = 0;
  bool empty_ = false;
};

/// A finite union of cones (e.g. a limiting normal cone of a set union),
/// flagged when it is only an outer approximation of the true object.
struct ConeUnion {
  std::vector<PolyCone> pieces;
  bool exact = true;

  PolyCone::Membership contains(const Vector& v, double tol = kSetTol) const;
};

enum class SetTag { kGeneric, kWholeSpace, kSingletonZero, kNonpositiveOrthant, kBox };

/// Finite union of convex polyhedra sharing one ambient dimension.
struct PolyUnion {
  std::vector<Polyhedron> pieces;
  int dim = 0;
  SetTag tag = SetTag::kGeneric;

  static PolyUnion single(Polyhedron p, SetTag tag = SetTag::kGeneric);
  static PolyUnion whole_space(int dim);
  static PolyUnion zero(int dim);
  static PolyUnion nonpositive(int dim);
  static PolyUnion box(const Vector& lo, const Vector& hi);

  void validate() const;

  struct ActivePiece {
    int piece = 0;
    std::vector<int> active_rows;
  };
  struct ContainsResult {
    bool inside = false;
    std::vector<ActivePiece> active;
  };
  ContainsResult contains(const Vector& x, double tol = kSetTol) const;

  /// Per-coordinate structure when the union is one axis-product piece:
  /// kind[i] in {'z' pinned, 'n' nonpositive, 'p' nonnegative, 'f' free, 'i' interval}.
  std::optional<std::string> product_kinds() const;
};

// --- cone calculus -----------------------------------------------------------

PolyCone tangent_cone(const Polyhedron& p, const Vector& x, double tol = kSetTol);
PolyCone normal_cone_convex(const Polyhedron& p, const Vector& x, double tol = kSetTol);
/// Intersection of the active pieces' convex normal cones.
PolyCone frechet_normal_cone(const PolyUnion& s, const Vector& x, double tol = kSetTol);
/// Union of the active pieces' convex normal cones; exact for one active
/// piece, an outer approximation otherwise.
ConeUnion limiting_normal_cone_outer(const PolyUnion& s, const Vector& x, double tol = kSetTol);
/// Conic convex hull of the limiting cone's generators.
PolyCone clarke_normal_cone(const PolyUnion& s, const Vector& x, double tol = kSetTol);
/// Directional limiting normal cone of a convex polyhedron: empty when d is
/// not tangent, otherwise N_p(x) restricted to the hyperplane <v, d> = 0.
PolyCone directional_normal_cone(const Polyhedron& p, const Vector& x, const Vector& d,
                                 double tol = kSetTol);
/// Directional limiting normal cone of a union (outer approximation across
/// active pieces whose tangent cone contains d).
ConeUnion directional_normal_cone_union(const PolyUnion& s, const Vector& x, const Vector& d,
                                        double tol = kSetTol);

/// Parse the set syntax used in problem files:
///   box(lo, hi), polyhedron(A, b[, G, g]), union(s, ...), zero(m),
///   nonpositive(m), free(n), singleton(v), product(s, ...).
PolyUnion parse_set(const std::string& text, int expected_dim = -1);
/// Serialize back to the set syntax (canonical form).
std::string set_to_string(const PolyUnion& s);

}  // namespace daeopt
