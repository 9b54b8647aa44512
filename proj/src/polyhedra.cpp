#include "polyhedra.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>

#include "lp.hpp"

namespace daeopt {

namespace {
constexpr double kRayTol = 1e-9;
constexpr int kConstraintCap = 64;  // active-set bitmasks are 64-bit

Matrix empty_rows(int dim) { return Matrix(0, dim); }

void normalize_ray(Vector& r) {
  const double m = r.cwiseAbs().maxCoeff();
  if (m > 0) r /= m;
}

Matrix rows_from(const std::vector<Vector>& vs, int dim) {
  Matrix m(static_cast<Eigen::Index>(vs.size()), dim);
  for (size_t i = 0; i < vs.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = vs[i].transpose();
  return m;
}

/// Deterministic order for generator matrices (row-wise lexicographic).
void sort_rows(Matrix& m) {
  std::vector<int> idx(static_cast<size_t>(m.rows()));
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    for (int j = 0; j < m.cols(); ++j) {
      if (m(a, j) < m(b, j) - 1e-15) return true;
      if (m(a, j) > m(b, j) + 1e-15) return false;
    }
    return false;
  });
  Matrix out(m.rows(), m.cols());
  for (size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(idx[i]);
  m = std::move(out);
}

}  // namespace

// ---------------------------------------------------------------------------
// Polyhedron

Polyhedron Polyhedron::whole_space(int dim) {
  Polyhedron p;
  p.dim = dim;
  p.a = empty_rows(dim);
  p.b = Vector(0);
  p.g_eq = empty_rows(dim);
  p.g_rhs = Vector(0);
  return p;
}

Polyhedron Polyhedron::singleton(const Vector& v) {
  Polyhedron p = whole_space(static_cast<int>(v.size()));
  p.g_eq = Matrix::Identity(v.size(), v.size());
  p.g_rhs = v;
  return p;
}

Polyhedron Polyhedron::box(const Vector& lo, const Vector& hi) {
  if (lo.size() != hi.size()) throw InputError("box: bound sizes differ");
  const int n = static_cast<int>(lo.size());
  Polyhedron p = whole_space(n);
  p.a = Matrix::Zero(2 * n, n);
  p.b = Vector::Zero(2 * n);
  for (int i = 0; i < n; ++i) {
    p.a(i, i) = 1.0;
    p.b[i] = hi[i];
    p.a(n + i, i) = -1.0;
    p.b[n + i] = -lo[i];
  }
  return p;
}

Polyhedron Polyhedron::nonpositive(int dim) {
  Polyhedron p = whole_space(dim);
  p.a = Matrix::Identity(dim, dim);
  p.b = Vector::Zero(dim);
  return p;
}

void Polyhedron::validate() const {
  if (dim <= 0) throw InputError("polyhedron: ambient dimension must be positive");
  if ((a.rows() > 0 && a.cols() != dim) || a.rows() != b.size())
    throw InputError("polyhedron: inequality block dimension mismatch");
  if ((g_eq.rows() > 0 && g_eq.cols() != dim) || g_eq.rows() != g_rhs.size())
    throw InputError("polyhedron: equality block dimension mismatch");
  if (!a.allFinite() || !b.allFinite() || !g_eq.allFinite() || !g_rhs.allFinite())
    throw InputError("polyhedron: non-finite data");
}

bool Polyhedron::contains(const Vector& x, double tol) const {
  if (x.size() != dim) throw InputError("polyhedron: point dimension mismatch");
  for (int i = 0; i < a.rows(); ++i) {
    if (a.row(i).dot(x) > b[i] + tol) return false;
  }
  for (int i = 0; i < g_eq.rows(); ++i) {
    if (std::abs(g_eq.row(i).dot(x) - g_rhs[i]) > tol) return false;
  }
  return true;
}

std::vector<int> Polyhedron::active_rows(const Vector& x, double tol) const {
  std::vector<int> out;
  for (int i = 0; i < a.rows(); ++i) {
    if (std::abs(a.row(i).dot(x) - b[i]) <= tol) out.push_back(i);
  }
  return out;
}

std::optional<std::vector<Polyhedron::AxisInterval>> Polyhedron::axis_intervals() const {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<AxisInterval> iv(static_cast<size_t>(dim), AxisInterval{-kInf, kInf});
  auto single_coord = [&](const Vector& row) -> int {
    int idx = -1;
    for (int j = 0; j < row.size(); ++j) {
      if (row[j] != 0.0) {
        if (idx >= 0) return -1;
        idx = j;
      }
    }
    return idx;
  };
  for (int i = 0; i < a.rows(); ++i) {
    const int j = single_coord(a.row(i).transpose());
    if (j < 0) return std::nullopt;
    const double c = a(i, j);
    const double bound = b[i] / c;
    if (c > 0)
      iv[static_cast<size_t>(j)].hi = std::min(iv[static_cast<size_t>(j)].hi, bound);
    else
      iv[static_cast<size_t>(j)].lo = std::max(iv[static_cast<size_t>(j)].lo, bound);
  }
  for (int i = 0; i < g_eq.rows(); ++i) {
    const int j = single_coord(g_eq.row(i).transpose());
    if (j < 0) return std::nullopt;
    const double v = g_rhs[i] / g_eq(i, j);
    iv[static_cast<size_t>(j)].lo = std::max(iv[static_cast<size_t>(j)].lo, v);
    iv[static_cast<size_t>(j)].hi = std::min(iv[static_cast<size_t>(j)].hi, v);
  }
  return iv;
}

// ---------------------------------------------------------------------------
// Double description

GeneratorRep double_description(const Matrix& ineq, const Matrix& eq, int dim) {
  if (dim > kGeneratorDimCap)
    throw CapError("generator enumeration dimension cap exceeded (" + std::to_string(dim) + " > " +
                   std::to_string(kGeneratorDimCap) + ")");
  if (ineq.rows() + eq.rows() > kConstraintCap)
    throw CapError("generator enumeration constraint cap exceeded");

  struct Ray {
    Vector v;
    uint64_t active = 0;
  };
  std::vector<Vector> lin;
  for (int i = 0; i < dim; ++i) {
    Vector e = Vector::Zero(dim);
    e[i] = 1.0;
    lin.push_back(e);
  }
  std::vector<Ray> rays;

  // Constraint list: equalities first, then inequalities (ids index ineq only).
  struct Cons {
    Vector a;
    bool is_eq;
    int ineq_id;
  };
  std::vector<Cons> cons;
  for (int i = 0; i < eq.rows(); ++i) cons.push_back({eq.row(i).transpose(), true, -1});
  int next_id = 0;
  for (int i = 0; i < ineq.rows(); ++i) cons.push_back({ineq.row(i).transpose(), false, next_id++});

  std::vector<Vector> processed_ineq;  // for active-set recomputation

  auto recompute_active = [&](const Vector& r) {
    uint64_t bits = 0;
    for (size_t k = 0; k < processed_ineq.size(); ++k) {
      if (std::abs(processed_ineq[k].dot(r)) <= kRayTol * (1.0 + processed_ineq[k].norm()))
        bits |= (uint64_t{1} << k);
    }
    return bits;
  };

  for (const Cons& c : cons) {
    if (c.a.cwiseAbs().maxCoeff() == 0.0) {
      // Zero row constrains nothing (0 <= 0 / 0 = 0).
      if (!c.is_eq) {
        for (auto& r : rays) r.active |= (uint64_t{1} << processed_ineq.size());
        processed_ineq.push_back(c.a);
      }
      continue;
    }
    // Lineality reduction first.
    int pivot = -1;
    double best = kRayTol;
    for (size_t i = 0; i < lin.size(); ++i) {
      const double v = std::abs(c.a.dot(lin[i]));
      if (v > best) {
        best = v;
        pivot = static_cast<int>(i);
      }
    }
    if (pivot >= 0) {
      Vector b0 = lin[static_cast<size_t>(pivot)];
      const double ab0 = c.a.dot(b0);
      lin.erase(lin.begin() + pivot);
      for (auto& l : lin) l -= (c.a.dot(l) / ab0) * b0;
      for (auto& r : rays) r.v -= (c.a.dot(r.v) / ab0) * b0;
      if (!c.is_eq) {
        Ray nr;
        nr.v = (ab0 > 0 ? -1.0 : 1.0) * b0;
        normalize_ray(nr.v);
        rays.push_back(std::move(nr));
        processed_ineq.push_back(c.a);
      }
      for (auto& r : rays) r.active = recompute_active(r.v);
      continue;
    }

    // Classic double-description step on the ray list.
    const double scale = 1.0 + c.a.norm();
    std::vector<int> neg, zero, pos;
    for (size_t i = 0; i < rays.size(); ++i) {
      const double v = c.a.dot(rays[i].v);
      if (v > kRayTol * scale)
        pos.push_back(static_cast<int>(i));
      else if (v < -kRayTol * scale)
        neg.push_back(static_cast<int>(i));
      else
        zero.push_back(static_cast<int>(i));
    }
    std::vector<Ray> next;
    for (int i : zero) next.push_back(rays[static_cast<size_t>(i)]);
    if (!c.is_eq) {
      for (int i : neg) next.push_back(rays[static_cast<size_t>(i)]);
    }
    for (int ip : pos) {
      for (int in : neg) {
        const Ray& p = rays[static_cast<size_t>(ip)];
        const Ray& n = rays[static_cast<size_t>(in)];
        // Combinatorial adjacency: no third ray's tight set contains theirs.
        const uint64_t common = p.active & n.active;
        bool adjacent = true;
        for (size_t io = 0; io < rays.size(); ++io) {
          if (static_cast<int>(io) == ip || static_cast<int>(io) == in) continue;
          if ((rays[io].active & common) == common) {
            adjacent = false;
            break;
          }
        }
        if (!adjacent) continue;
        const double vp = c.a.dot(p.v), vn = c.a.dot(n.v);
        Ray nr;
        nr.v = vp * n.v - vn * p.v;
        if (nr.v.cwiseAbs().maxCoeff() <= kRayTol) continue;
        normalize_ray(nr.v);
        bool dup = false;
        for (const auto& ex : next) {
          if ((ex.v - nr.v).cwiseAbs().maxCoeff() <= 1e-9) {
            dup = true;
            break;
          }
        }
        if (!dup) next.push_back(std::move(nr));
      }
    }
    rays = std::move(next);
    if (!c.is_eq) processed_ineq.push_back(c.a);
    for (auto& r : rays) r.active = recompute_active(r.v);
  }

  GeneratorRep rep;
  std::vector<Vector> rvec;
  for (auto& r : rays) {
    normalize_ray(r.v);
    bool dup = false;
    for (const auto& ex : rvec) {
      if ((ex - r.v).cwiseAbs().maxCoeff() <= 1e-9) {
        dup = true;
        break;
      }
    }
    if (!dup) rvec.push_back(r.v);
  }
  for (auto& l : lin) normalize_ray(l);
  rep.rays = rows_from(rvec, dim);
  rep.lineality = rows_from(lin, dim);
  sort_rows(rep.rays);
  sort_rows(rep.lineality);
  return rep;
}

// ---------------------------------------------------------------------------
// PolyCone

PolyCone PolyCone::from_h(Matrix ineq, Matrix eq, int dim) {
  PolyCone c;
  c.dim_ = dim;
  if (ineq.rows() == 0) ineq = empty_rows(dim);
  if (eq.rows() == 0) eq = empty_rows(dim);
  c.reps_->h = std::make_pair(std::move(ineq), std::move(eq));
  return c;
}

PolyCone PolyCone::from_v(Matrix rays, Matrix lineality, int dim) {
  PolyCone c;
  c.dim_ = dim;
  if (rays.rows() == 0) rays = empty_rows(dim);
  if (lineality.rows() == 0) lineality = empty_rows(dim);
  c.reps_->v = std::make_pair(std::move(rays), std::move(lineality));
  return c;
}

PolyCone PolyCone::empty(int dim) {
  PolyCone c;
  c.dim_ = dim;
  c.empty_ = true;
  c.reps_->v = std::make_pair(empty_rows(dim), empty_rows(dim));
  return c;
}

PolyCone PolyCone::whole_space(int dim) {
  return from_h(empty_rows(dim), empty_rows(dim), dim);
}

PolyCone PolyCone::zero(int dim) {
  PolyCone c = from_h(empty_rows(dim), Matrix::Identity(dim, dim), dim);
  c.reps_->v = std::make_pair(empty_rows(dim), empty_rows(dim));
  return c;
}

bool PolyCone::has_h() const {
  std::lock_guard<std::mutex> g(reps_->lock);
  return reps_->h.has_value();
}

bool PolyCone::has_v() const {
  std::lock_guard<std::mutex> g(reps_->lock);
  return reps_->v.has_value();
}

void PolyCone::ensure_h() const {
  std::lock_guard<std::mutex> g(reps_->lock);
  if (reps_->h) return;
  // Polar of the polar: generators of the polar cone are H-rows of this one.
  const Matrix& rays = reps_->v->first;
  const Matrix& lin = reps_->v->second;
  GeneratorRep polar = double_description(rays, lin, dim_);
  reps_->h = std::make_pair(polar.rays, polar.lineality);
}

void PolyCone::ensure_v() const {
  std::lock_guard<std::mutex> g(reps_->lock);
  if (reps_->v) return;
  GeneratorRep rep = double_description(reps_->h->first, reps_->h->second, dim_);
  reps_->v = std::make_pair(rep.rays, rep.lineality);
}

const Matrix& PolyCone::h_ineq() const {
  ensure_h();
  return reps_->h->first;
}

const Matrix& PolyCone::h_eq() const {
  ensure_h();
  return reps_->h->second;
}

const Matrix& PolyCone::rays() const {
  ensure_v();
  return reps_->v->first;
}

const Matrix& PolyCone::lineality() const {
  ensure_v();
  return reps_->v->second;
}

PolyCone::Membership PolyCone::contains(const Vector& v, double tol) const {
  Membership m;
  if (v.size() != dim_) throw InputError("cone membership: dimension mismatch");
  if (empty_) {
    m.inside = false;
    m.violation = std::numeric_limits<double>::infinity();
    return m;
  }
  try {
    const Matrix& a = h_ineq();
    const Matrix& e = h_eq();
    double viol = 0.0;
    for (int i = 0; i < a.rows(); ++i) viol = std::max(viol, a.row(i).dot(v));
    for (int i = 0; i < e.rows(); ++i) viol = std::max(viol, std::abs(e.row(i).dot(v)));
    m.violation = std::max(0.0, viol);
    m.inside = viol <= tol;
    return m;
  } catch (const CapError&) {
    // Beyond the generator cap: LP distance to the V-representation.
  }
  // LP: min t s.t. |v - R^T mu - L^T nu|_inf <= t, mu >= 0.
  const Matrix& rays = reps_->v->first;
  const Matrix& lin = reps_->v->second;
  const int nr = static_cast<int>(rays.rows());
  const int nl = static_cast<int>(lin.rows());
  const int n = nr + nl + 1;  // mu, nu, t
  LpProblem lp;
  lp.objective = Vector::Zero(n);
  lp.objective[n - 1] = -1.0;  // maximize -t
  const int d = dim_;
  lp.ineq_a = Matrix::Zero(2 * d, n);
  lp.ineq_b = Vector::Zero(2 * d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < nr; ++j) lp.ineq_a(i, j) = -rays(j, i);
    for (int j = 0; j < nl; ++j) lp.ineq_a(i, nr + j) = -lin(j, i);
    lp.ineq_a(i, n - 1) = -1.0;
    lp.ineq_b[i] = -v[i];
    for (int j = 0; j < nr; ++j) lp.ineq_a(d + i, j) = rays(j, i);
    for (int j = 0; j < nl; ++j) lp.ineq_a(d + i, nr + j) = lin(j, i);
    lp.ineq_a(d + i, n - 1) = -1.0;
    lp.ineq_b[d + i] = v[i];
  }
  lp.lower = Vector::Constant(n, -std::numeric_limits<double>::infinity());
  for (int j = 0; j < nr; ++j) lp.lower[j] = 0.0;
  lp.lower[n - 1] = 0.0;
  lp.upper = Vector::Constant(n, std::numeric_limits<double>::infinity());
  LpResult r = lp_solve(lp);
  if (r.status != LpStatus::kOptimal) {
    m.inside = false;
    m.violation = std::numeric_limits<double>::infinity();
    return m;
  }
  m.violation = -r.objective;
  m.inside = m.violation <= tol;
  return m;
}

bool PolyCone::is_trivial(double tol) const {
  if (empty_) return false;
  {
    std::lock_guard<std::mutex> g(reps_->lock);
    if (reps_->v) return reps_->v->first.rows() == 0 && reps_->v->second.rows() == 0;
    ConeTriviality t = cone_is_trivial(reps_->h->first, reps_->h->second, tol);
    return t.trivial;
  }
}

PolyCone::Membership ConeUnion::contains(const Vector& v, double tol) const {
  PolyCone::Membership best;
  best.inside = false;
  best.violation = std::numeric_limits<double>::infinity();
  for (const auto& c : pieces) {
    PolyCone::Membership m = c.contains(v, tol);
    if (m.violation < best.violation) best = m;
    if (best.inside) break;
  }
  if (pieces.empty()) {
    best.violation = std::numeric_limits<double>::infinity();
  }
  return best;
}

// ---------------------------------------------------------------------------
// PolyUnion

PolyUnion PolyUnion::single(Polyhedron p, SetTag tag) {
  PolyUnion u;
  u.dim = p.dim;
  u.pieces.push_back(std::move(p));
  u.tag = tag;
  return u;
}

PolyUnion PolyUnion::whole_space(int dim) {
  return single(Polyhedron::whole_space(dim), SetTag::kWholeSpace);
}

PolyUnion PolyUnion::zero(int dim) {
  return single(Polyhedron::singleton(Vector::Zero(dim)), SetTag::kSingletonZero);
}

PolyUnion PolyUnion::nonpositive(int dim) {
  return single(Polyhedron::nonpositive(dim), SetTag::kNonpositiveOrthant);
}

PolyUnion PolyUnion::box(const Vector& lo, const Vector& hi) {
  return single(Polyhedron::box(lo, hi), SetTag::kBox);
}

void PolyUnion::validate() const {
  if (pieces.empty()) throw InputError("set union: needs at least one piece");
  for (const auto& p : pieces) {
    p.validate();
    if (p.dim != dim) throw InputError("set union: mixed ambient dimensions");
  }
}

PolyUnion::ContainsResult PolyUnion::contains(const Vector& x, double tol) const {
  ContainsResult r;
  for (size_t i = 0; i < pieces.size(); ++i) {
    if (pieces[i].contains(x, tol)) {
      r.inside = true;
      r.active.push_back({static_cast<int>(i), pieces[i].active_rows(x, tol)});
    }
  }
  return r;
}

std::optional<std::string> PolyUnion::product_kinds() const {
  if (pieces.size() != 1) return std::nullopt;
  auto iv = pieces[0].axis_intervals();
  if (!iv) return std::nullopt;
  std::string kinds;
  for (const auto& ab : *iv) {
    if (ab.lo == ab.hi)
      kinds += 'z';
    else if (ab.lo == -std::numeric_limits<double>::infinity() &&
             ab.hi == std::numeric_limits<double>::infinity())
      kinds += 'f';
    else if (ab.hi == 0.0 && ab.lo == -std::numeric_limits<double>::infinity())
      kinds += 'n';
    else if (ab.lo == 0.0 && ab.hi == std::numeric_limits<double>::infinity())
      kinds += 'p';
    else
      kinds += 'i';
  }
  return kinds;
}

// ---------------------------------------------------------------------------
// Cone calculus

PolyCone tangent_cone(const Polyhedron& p, const Vector& x, double tol) {
  if (!p.contains(x, tol)) throw InputError("tangent_cone: point is not in the set");
  const std::vector<int> act = p.active_rows(x, tol);
  Matrix a(static_cast<Eigen::Index>(act.size()), p.dim);
  for (size_t i = 0; i < act.size(); ++i) a.row(static_cast<Eigen::Index>(i)) = p.a.row(act[i]);
  return PolyCone::from_h(std::move(a), p.g_eq, p.dim);
}

PolyCone normal_cone_convex(const Polyhedron& p, const Vector& x, double tol) {
  if (!p.contains(x, tol)) throw InputError("normal_cone: point is not in the set");
  const std::vector<int> act = p.active_rows(x, tol);
  Matrix rays(static_cast<Eigen::Index>(act.size()), p.dim);
  for (size_t i = 0; i < act.size(); ++i) rays.row(static_cast<Eigen::Index>(i)) = p.a.row(act[i]);
  return PolyCone::from_v(std::move(rays), p.g_eq, p.dim);
}

PolyCone frechet_normal_cone(const PolyUnion& s, const Vector& x, double tol) {
  auto c = s.contains(x, tol);
  if (!c.inside) throw InputError("frechet_normal_cone: point is not in the set");
  std::vector<Matrix> ineqs, eqs;
  Eigen::Index ni = 0, ne = 0;
  for (const auto& ap : c.active) {
    PolyCone nc = normal_cone_convex(s.pieces[static_cast<size_t>(ap.piece)], x, tol);
    ineqs.push_back(nc.h_ineq());
    eqs.push_back(nc.h_eq());
    ni += ineqs.back().rows();
    ne += eqs.back().rows();
  }
  Matrix a(ni, s.dim), e(ne, s.dim);
  Eigen::Index ri = 0, re = 0;
  for (size_t k = 0; k < ineqs.size(); ++k) {
    a.middleRows(ri, ineqs[k].rows()) = ineqs[k];
    ri += ineqs[k].rows();
    e.middleRows(re, eqs[k].rows()) = eqs[k];
    re += eqs[k].rows();
  }
  return PolyCone::from_h(std::move(a), std::move(e), s.dim);
}

ConeUnion limiting_normal_cone_outer(const PolyUnion& s, const Vector& x, double tol) {
  auto c = s.contains(x, tol);
  if (!c.inside) throw InputError("limiting_normal_cone: point is not in the set");
  ConeUnion u;
  u.exact = c.active.size() <= 1;
  for (const auto& ap : c.active) {
    u.pieces.push_back(normal_cone_convex(s.pieces[static_cast<size_t>(ap.piece)], x, tol));
  }
  return u;
}

PolyCone clarke_normal_cone(const PolyUnion& s, const Vector& x, double tol) {
  ConeUnion u = limiting_normal_cone_outer(s, x, tol);
  Eigen::Index nr = 0, nl = 0;
  for (const auto& c : u.pieces) {
    nr += c.rays().rows();
    nl += c.lineality().rows();
  }
  Matrix rays(nr, s.dim), lin(nl, s.dim);
  Eigen::Index ri = 0, li = 0;
  for (const auto& c : u.pieces) {
    rays.middleRows(ri, c.rays().rows()) = c.rays();
    ri += c.rays().rows();
    lin.middleRows(li, c.lineality().rows()) = c.lineality();
    li += c.lineality().rows();
  }
  return PolyCone::from_v(std::move(rays), std::move(lin), s.dim);
}

PolyCone directional_normal_cone(const Polyhedron& p, const Vector& x, const Vector& d,
                                 double tol) {
  PolyCone t = tangent_cone(p, x, tol);
  if (!t.contains(d, tol).inside) return PolyCone::empty(p.dim);
  // Rays: active rows of the polyhedron at x that are also tight at d;
  // lineality: equality rows. This is the normal cone to T_p(x) at d.
  const std::vector<int> act = p.active_rows(x, tol);
  std::vector<Vector> rays;
  for (int i : act) {
    const Vector row = p.a.row(i).transpose();
    if (std::abs(row.dot(d)) <= tol * (1.0 + row.norm() * d.norm())) rays.push_back(row);
  }
  return PolyCone::from_v(rows_from(rays, p.dim), p.g_eq, p.dim);
}

ConeUnion directional_normal_cone_union(const PolyUnion& s, const Vector& x, const Vector& d,
                                        double tol) {
  auto c = s.contains(x, tol);
  if (!c.inside) throw InputError("directional_normal_cone: point is not in the set");
  ConeUnion u;
  u.exact = c.active.size() <= 1;
  for (const auto& ap : c.active) {
    PolyCone dc = directional_normal_cone(s.pieces[static_cast<size_t>(ap.piece)], x, d, tol);
    if (!dc.is_empty()) u.pieces.push_back(std::move(dc));
  }
  return u;
}

// ---------------------------------------------------------------------------
// Set syntax

namespace {

struct SetToken {
  enum class Type { kIdent, kNumber, kLParen, kRParen, kLBracket, kRBracket, kComma, kEnd };
  Type type = Type::kEnd;
  std::string text;
  double number = 0.0;
  size_t pos = 0;
};

class SetLexer {
 public:
  explicit SetLexer(const std::string& s) : s_(s) { advance(); }
  const SetToken& peek() const { return tok_; }
  SetToken next() {
    SetToken t = tok_;
    advance();
    return t;
  }
  [[noreturn]] void fail(const std::string& msg, size_t pos) const {
    throw InputError("set syntax error at position " + std::to_string(pos + 1) + ": " + msg);
  }

 private:
  void advance() {
    while (i_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[i_]))) ++i_;
    tok_ = SetToken{};
    tok_.pos = i_;
    if (i_ >= s_.size()) return;
    const char c = s_[i_];
    if (std::isalpha(static_cast<unsigned char>(c))) {
      size_t j = i_;
      while (j < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[j])) || s_[j] == '_')) ++j;
      tok_.type = SetToken::Type::kIdent;
      tok_.text = s_.substr(i_, j - i_);
      i_ = j;
      return;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+' || c == '.') {
      size_t end = 0;
      try {
        tok_.number = std::stod(s_.substr(i_), &end);
      } catch (const std::exception&) {
        fail("malformed number", i_);
      }
      tok_.type = SetToken::Type::kNumber;
      i_ += end;
      return;
    }
    switch (c) {
      case '(':
        tok_.type = SetToken::Type::kLParen;
        break;
      case ')':
        tok_.type = SetToken::Type::kRParen;
        break;
      case '[':
        tok_.type = SetToken::Type::kLBracket;
        break;
      case ']':
        tok_.type = SetToken::Type::kRBracket;
        break;
      case ',':
        tok_.type = SetToken::Type::kComma;
        break;
      default:
        fail(std::string("unexpected character '") + c + "'", i_);
    }
    ++i_;
  }
  const std::string& s_;
  size_t i_ = 0;
  SetToken tok_;
};

struct SetArg {
  enum class Kind { kNumber, kVector, kMatrix, kSet };
  Kind kind;
  double number = 0.0;
  Vector vec;
  Matrix mat;
  PolyUnion set;
};

class SetParser {
 public:
  explicit SetParser(const std::string& s) : lex_(s) {}

  PolyUnion parse() {
    PolyUnion u = parse_set();
    if (lex_.peek().type != SetToken::Type::kEnd) lex_.fail("trailing input", lex_.peek().pos);
    return u;
  }

 private:
  PolyUnion parse_set() {
    const SetToken t = lex_.next();
    if (t.type != SetToken::Type::kIdent) lex_.fail("expected a set constructor", t.pos);
    expect(SetToken::Type::kLParen);
    std::vector<SetArg> args;
    if (lex_.peek().type != SetToken::Type::kRParen) {
      args.push_back(parse_arg());
      while (lex_.peek().type == SetToken::Type::kComma) {
        lex_.next();
        args.push_back(parse_arg());
      }
    }
    expect(SetToken::Type::kRParen);
    return build(t.text, args, t.pos);
  }

  SetArg parse_arg() {
    const SetToken& t = lex_.peek();
    SetArg arg;
    switch (t.type) {
      case SetToken::Type::kNumber:
        arg.kind = SetArg::Kind::kNumber;
        arg.number = lex_.next().number;
        return arg;
      case SetToken::Type::kLBracket:
        return parse_array();
      case SetToken::Type::kIdent:
        if (t.text == "inf") {
          lex_.next();
          arg.kind = SetArg::Kind::kNumber;
          arg.number = std::numeric_limits<double>::infinity();
          return arg;
        }
        arg.kind = SetArg::Kind::kSet;
        arg.set = parse_set();
        return arg;
      default:
        lex_.fail("expected a number, array or set", t.pos);
    }
  }

  SetArg parse_array() {
    const SetToken open = lex_.next();  // '['
    SetArg arg;
    std::vector<double> nums;
    std::vector<Vector> rows;
    bool is_matrix = false;
    if (lex_.peek().type != SetToken::Type::kRBracket) {
      while (true) {
        if (lex_.peek().type == SetToken::Type::kLBracket) {
          SetArg inner = parse_array();
          if (inner.kind != SetArg::Kind::kVector)
            lex_.fail("nested arrays deeper than matrices are not supported", open.pos);
          rows.push_back(inner.vec);
          is_matrix = true;
        } else {
          SetToken t = lex_.next();
          if (t.type == SetToken::Type::kIdent && t.text == "inf") {
            nums.push_back(std::numeric_limits<double>::infinity());
          } else if (t.type == SetToken::Type::kNumber) {
            nums.push_back(t.number);
          } else {
            lex_.fail("expected a number", t.pos);
          }
        }
        if (lex_.peek().type == SetToken::Type::kComma) {
          lex_.next();
          continue;
        }
        break;
      }
    }
    expect(SetToken::Type::kRBracket);
    if (is_matrix) {
      if (!nums.empty()) lex_.fail("mixed matrix and scalar entries", open.pos);
      arg.kind = SetArg::Kind::kMatrix;
      const Eigen::Index cols = rows.empty() ? 0 : rows[0].size();
      arg.mat = Matrix(static_cast<Eigen::Index>(rows.size()), cols);
      for (size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != cols) lex_.fail("ragged matrix rows", open.pos);
        arg.mat.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
      }
      return arg;
    }
    arg.kind = SetArg::Kind::kVector;
    arg.vec = Eigen::Map<Vector>(nums.data(), static_cast<Eigen::Index>(nums.size()));
    return arg;
  }

  void expect(SetToken::Type type) {
    const SetToken t = lex_.next();
    if (t.type != type) lex_.fail("unexpected token", t.pos);
  }

  static Vector as_vector(const SetArg& a, size_t pos, SetLexer& lex) {
    if (a.kind == SetArg::Kind::kNumber) {
      Vector v(1);
      v[0] = a.number;
      return v;
    }
    if (a.kind == SetArg::Kind::kVector) return a.vec;
    if (a.kind == SetArg::Kind::kMatrix && a.mat.rows() == 0) return Vector(0);
    lex.fail("expected a vector", pos);
  }

  PolyUnion build(const std::string& name, std::vector<SetArg>& args, size_t pos) {
    auto need = [&](size_t n) {
      if (args.size() != n)
        lex_.fail(name + " expects " + std::to_string(n) + " argument(s)", pos);
    };
    if (name == "free" || name == "zero" || name == "nonpositive") {
      need(1);
      if (args[0].kind != SetArg::Kind::kNumber) lex_.fail(name + " expects a dimension", pos);
      const int n = static_cast<int>(args[0].number);
      if (n <= 0 || n != args[0].number) lex_.fail(name + " expects a positive integer", pos);
      if (name == "free") return PolyUnion::whole_space(n);
      if (name == "zero") return PolyUnion::zero(n);
      return PolyUnion::nonpositive(n);
    }
    if (name == "box") {
      need(2);
      Vector lo = as_vector(args[0], pos, lex_);
      Vector hi = as_vector(args[1], pos, lex_);
      if (lo.size() != hi.size()) lex_.fail("box bounds must have equal length", pos);
      for (int i = 0; i < lo.size(); ++i) {
        if (!(lo[i] <= hi[i])) lex_.fail("box requires lo <= hi", pos);
      }
      return PolyUnion::box(lo, hi);
    }
    if (name == "singleton") {
      need(1);
      return PolyUnion::single(Polyhedron::singleton(as_vector(args[0], pos, lex_)),
                               SetTag::kGeneric);
    }
    if (name == "polyhedron") {
      if (args.size() != 2 && args.size() != 4)
        lex_.fail("polyhedron expects (A, b) or (A, b, G, g)", pos);
      Matrix a = args[0].kind == SetArg::Kind::kMatrix ? args[0].mat : Matrix(0, 0);
      if (args[0].kind == SetArg::Kind::kVector && args[0].vec.size() == 0) a = Matrix(0, 0);
      Vector b = as_vector(args[1], pos, lex_);
      Matrix g(0, 0);
      Vector grhs(0);
      if (args.size() == 4) {
        if (args[2].kind == SetArg::Kind::kMatrix) g = args[2].mat;
        grhs = as_vector(args[3], pos, lex_);
      }
      int dim = 0;
      if (a.rows() > 0)
        dim = static_cast<int>(a.cols());
      else if (g.rows() > 0)
        dim = static_cast<int>(g.cols());
      else
        lex_.fail("polyhedron needs at least one constraint row", pos);
      Polyhedron p = Polyhedron::whole_space(dim);
      if (a.rows() > 0) {
        p.a = a;
        p.b = b;
      } else if (b.size() != 0) {
        lex_.fail("polyhedron: b must be empty when A is empty", pos);
      }
      if (g.rows() > 0) {
        p.g_eq = g;
        p.g_rhs = grhs;
      }
      p.validate();
      return PolyUnion::single(std::move(p));
    }
    if (name == "union") {
      if (args.empty()) lex_.fail("union expects at least one piece", pos);
      PolyUnion u;
      for (auto& a : args) {
        if (a.kind != SetArg::Kind::kSet) lex_.fail("union expects set arguments", pos);
        for (auto& piece : a.set.pieces) u.pieces.push_back(std::move(piece));
        u.dim = a.set.dim;
      }
      u.validate();
      return u;
    }
    if (name == "product") {
      if (args.size() < 2) lex_.fail("product expects at least two sets", pos);
      PolyUnion acc;
      bool first = true;
      for (auto& a : args) {
        if (a.kind != SetArg::Kind::kSet) lex_.fail("product expects set arguments", pos);
        if (first) {
          acc = a.set;
          first = false;
          continue;
        }
        PolyUnion next;
        next.dim = acc.dim + a.set.dim;
        for (const auto& p1 : acc.pieces) {
          for (const auto& p2 : a.set.pieces) {
            Polyhedron p = Polyhedron::whole_space(next.dim);
            p.a = Matrix::Zero(p1.a.rows() + p2.a.rows(), next.dim);
            p.b = Vector::Zero(p1.a.rows() + p2.a.rows());
            p.a.topLeftCorner(p1.a.rows(), p1.dim) = p1.a;
            p.b.head(p1.a.rows()) = p1.b;
            p.a.bottomRightCorner(p2.a.rows(), p2.dim) = p2.a;
            p.b.tail(p2.a.rows()) = p2.b;
            p.g_eq = Matrix::Zero(p1.g_eq.rows() + p2.g_eq.rows(), next.dim);
            p.g_rhs = Vector::Zero(p1.g_eq.rows() + p2.g_eq.rows());
            p.g_eq.topLeftCorner(p1.g_eq.rows(), p1.dim) = p1.g_eq;
            p.g_rhs.head(p1.g_eq.rows()) = p1.g_rhs;
            p.g_eq.bottomRightCorner(p2.g_eq.rows(), p2.dim) = p2.g_eq;
            p.g_rhs.tail(p2.g_eq.rows()) = p2.g_rhs;
            next.pieces.push_back(std::move(p));
          }
        }
        acc = std::move(next);
      }
      acc.validate();
      return acc;
    }
    lex_.fail("unknown set constructor '" + name + "'", pos);
  }

  SetLexer lex_;
};

std::string fmt_number(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string fmt_vector(const Vector& v) {
  std::ostringstream os;
  os << "[";
  for (int i = 0; i < v.size(); ++i) {
    if (i) os << ", ";
    os << fmt_number(v[i]);
  }
  os << "]";
  return os.str();
}

std::string fmt_matrix(const Matrix& m) {
  std::ostringstream os;
  os << "[";
  for (int i = 0; i < m.rows(); ++i) {
    if (i) os << ", ";
    os << fmt_vector(m.row(i).transpose());
  }
  os << "]";
  return os.str();
}

}  // namespace

PolyUnion parse_set(const std::string& text, int expected_dim) {
  PolyUnion u = SetParser(text).parse();
  u.validate();
  if (expected_dim > 0 && u.dim != expected_dim)
    throw InputError("set has ambient dimension " + std::to_string(u.dim) + ", expected " +
                     std::to_string(expected_dim));
  return u;
}

std::string set_to_string(const PolyUnion& s) {
  auto piece_str = [](const Polyhedron& p) {
    if (p.a.rows() == 0 && p.g_eq.rows() == 0) return "free(" + std::to_string(p.dim) + ")";
    std::ostringstream os;
    os << "polyhedron(" << fmt_matrix(p.a) << ", " << fmt_vector(p.b);
    if (p.g_eq.rows() > 0) os << ", " << fmt_matrix(p.g_eq) << ", " << fmt_vector(p.g_rhs);
    os << ")";
    return os.str();
  };
  if (s.pieces.size() == 1) return piece_str(s.pieces[0]);
  std::ostringstream os;
  os << "union(";
  for (size_t i = 0; i < s.pieces.size(); ++i) {
    if (i) os << ", ";
    os << piece_str(s.pieces[i]);
  }
  os << ")";
  return os.str();
}

}  // namespace daeopt
