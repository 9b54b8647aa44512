#include "problem.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace daeopt {

using nlohmann::json;

// ---------------------------------------------------------------------------
// RadiusFn

RadiusFn RadiusFn::constant(double r) {
  if (!(r > 0.0)) throw InputError("radius must be positive");
  RadiusFn f;
  f.scalar_ = r;
  return f;
}

RadiusFn RadiusFn::table(std::vector<std::pair<double, double>> knots) {
  if (knots.empty()) throw InputError("radius table must be nonempty");
  std::sort(knots.begin(), knots.end());
  for (const auto& [t, r] : knots) {
    if (!(r > 0.0)) throw InputError("radius must be positive");
    (void)t;
  }
  RadiusFn f;
  f.knots_ = std::move(knots);
  return f;
}

double RadiusFn::at(double t) const {
  if (knots_.empty()) return scalar_;
  if (t <= knots_.front().first) return knots_.front().second;
  if (t >= knots_.back().first) return knots_.back().second;
  for (size_t i = 1; i < knots_.size(); ++i) {
    if (t <= knots_[i].first) {
      const auto& [t0, r0] = knots_[i - 1];
      const auto& [t1, r1] = knots_[i];
      const double w = (t - t0) / (t1 - t0);
      return (1.0 - w) * r0 + w * r1;
    }
  }
  return knots_.back().second;
}

bool RadiusFn::is_finite() const {
  if (knots_.empty()) return std::isfinite(scalar_);
  for (const auto& [t, r] : knots_) {
    (void)t;
    if (!std::isfinite(r)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// ControlProblem

VariableLayout ControlProblem::node_layout() const {
  std::vector<VariableLayout::Block> blocks;
  blocks.push_back({"x", n_x});
  if (kind == ProblemKind::kSemiExplicit) {
    if (n_y > 0) blocks.push_back({"y", n_y});
    blocks.push_back({"u", n_u});
  } else {
    blocks.push_back({"u", n_u});
    blocks.push_back({"xdot", n_x});
  }
  return VariableLayout(blocks);
}

VariableLayout ControlProblem::endpoint_layout() const {
  return VariableLayout({{"x0", n_x}, {"xf", n_x}});
}

void ControlProblem::validate() const {
  if (n_x <= 0) throw InputError("problem: n_x must be positive");
  if (n_u <= 0) throw InputError("problem: n_u must be positive");
  if (n_y < 0) throw InputError("problem: n_y must be non-negative");
  if (!(t1 > t0)) throw InputError("problem: horizon must satisfy t0 < t1");

  if (kind == ProblemKind::kSemiExplicit) {
    if (dynamics.output_dim() != n_x)
      throw InputError("problem: dynamics must have n_x components");
    if (algebraic && n_y == 0)
      throw InputError("problem: algebraic part requires algebraic variables y");
  } else {
    if (n_y != 0) throw InputError("problem: implicit form does not take y variables");
    if (target_set.dim != dynamics.output_dim())
      throw InputError("problem: target set dimension must match the constraint map");
  }
  const VariableLayout nl = node_layout();
  if (!(dynamics.layout() == nl)) throw InputError("problem: dynamics layout mismatch");
  if (algebraic && !(algebraic->layout() == nl))
    throw InputError("problem: algebraic layout mismatch");
  if (running_cost.output_dim() != 1 || !(running_cost.layout() == nl))
    throw InputError("problem: running cost must be scalar over the node layout");
  if (endpoint_cost.output_dim() != 1)
    throw InputError("problem: endpoint cost must be scalar");
  if (control_set.dim != n_u) throw InputError("problem: control set dimension mismatch");
  if (endpoint_set.dim != 2 * n_x) throw InputError("problem: endpoint set dimension mismatch");
  control_set.validate();
  endpoint_set.validate();
  if (structured_e) {
    if (kind != ProblemKind::kImplicit)
      throw InputError("problem: structured E form implies the implicit kind");
    if (structured_e->e.rows() != dynamics.output_dim() || structured_e->e.cols() != n_x)
      throw InputError("problem: E must be (target dim) x n_x");
  }
}

// ---------------------------------------------------------------------------
// JSON ingestion

namespace {

std::vector<std::string> string_list(const json& j, const std::string& key) {
  std::vector<std::string> out;
  const auto& v = j.at(key);
  if (v.is_string()) {
    out.push_back(v.get<std::string>());
  } else if (v.is_array()) {
    for (const auto& e : v) out.push_back(e.get<std::string>());
  } else {
    throw InputError("problem: '" + key + "' must be a string or list of strings");
  }
  return out;
}

Matrix matrix_from_json(const json& j) {
  if (!j.is_array()) throw InputError("expected a matrix (array of arrays)");
  const size_t rows = j.size();
  size_t cols = 0;
  if (rows > 0) cols = j[0].size();
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (size_t i = 0; i < rows; ++i) {
    if (j[i].size() != cols) throw InputError("ragged matrix rows");
    for (size_t k = 0; k < cols; ++k) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = j[i][k].get<double>();
  }
  return m;
}

}  // namespace

ControlProblem parse_problem(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw InputError(std::string("problem JSON parse error: ") + e.what());
  }
  try {
    ControlProblem p;
    p.name = j.value("name", std::string());

    const auto& vars = j.at("variables");
    p.n_x = vars.value("x", 0);
    p.n_y = vars.value("y", 0);
    p.n_u = vars.value("u", 0);

    std::string kind = j.value("kind", std::string());
    if (kind.empty()) kind = (j.contains("structured_E") || j.contains("target_set")) ? "ics" : "sedae";
    if (kind == "sedae")
      p.kind = ProblemKind::kSemiExplicit;
    else if (kind == "ics")
      p.kind = ProblemKind::kImplicit;
    else
      throw InputError("problem: kind must be 'sedae' or 'ics'");
    if (p.kind == ProblemKind::kImplicit && p.n_y != 0)
      throw InputError("problem: implicit form does not take y variables");

    const auto& hor = j.at("horizon");
    p.t0 = hor.at(0).get<double>();
    p.t1 = hor.at(1).get<double>();

    // Layouts need the structured-E decision first.
    if (j.contains("structured_E")) {
      const auto& se = j.at("structured_E");
      StructuredE s;
      s.e = matrix_from_json(se.at("E"));
      VariableLayout gl({{"x", p.n_x}, {"u", p.n_u}});
      p.source.structured_g = string_list(se, "g");
      s.g = VectorFunction::parse(p.source.structured_g, gl);
      if (s.g.output_dim() != s.e.rows())
        throw InputError("problem: structured E and g row counts differ");
      p.structured_e = std::move(s);
    }

    const VariableLayout nl = [&] {
      std::vector<VariableLayout::Block> blocks;
      blocks.push_back({"x", p.n_x});
      if (p.kind == ProblemKind::kSemiExplicit) {
        if (p.n_y > 0) blocks.push_back({"y", p.n_y});
        blocks.push_back({"u", p.n_u});
      } else {
        blocks.push_back({"u", p.n_u});
        blocks.push_back({"xdot", p.n_x});
      }
      return VariableLayout(blocks);
    }();

    if (p.structured_e) {
      // Derived constraint map: E xdot - g(x, u).
      std::vector<Expression> comps;
      const int m = static_cast<int>(p.structured_e->e.rows());
      const int xdot_off = nl.block_offset("xdot");
      for (int i = 0; i < m; ++i) {
        Expression acc = Expression::constant(0.0);
        for (int k = 0; k < p.n_x; ++k) {
          const double eik = p.structured_e->e(i, k);
          if (eik != 0.0) {
            Expression term = Expression::mul(Expression::constant(eik),
                                              Expression::variable(xdot_off + k, nl.name_of(xdot_off + k)));
            acc = Expression::add(acc, term);
          }
        }
        // g components share the (x, u) prefix of the (x, u, xdot) layout.
        acc = Expression::sub(acc, p.structured_e->g.components()[static_cast<size_t>(i)]);
        comps.push_back(acc);
      }
      p.dynamics = VectorFunction(nl, std::move(comps));
      p.source.dynamics.clear();
    } else {
      p.source.dynamics = string_list(j, "dynamics");
      p.dynamics = VectorFunction::parse(p.source.dynamics, nl);
    }

    if (j.contains("algebraic")) {
      p.source.algebraic = string_list(j, "algebraic");
      if (p.kind != ProblemKind::kSemiExplicit)
        throw InputError("problem: algebraic part is only for the semi-explicit kind");
      p.algebraic = VectorFunction::parse(p.source.algebraic, nl);
    }

    p.source.running_cost = j.value("running_cost", std::string("0"));
    p.running_cost = VectorFunction::parse({p.source.running_cost}, nl);
    p.source.endpoint_cost = j.value("endpoint_cost", std::string("0"));
    p.endpoint_cost = VectorFunction::parse({p.source.endpoint_cost}, p.endpoint_layout());

    p.source.control_set = j.value("control_set", "free(" + std::to_string(p.n_u) + ")");
    p.control_set = parse_set(p.source.control_set, p.n_u);
    p.source.endpoint_set = j.value("endpoint_set", "free(" + std::to_string(2 * p.n_x) + ")");
    p.endpoint_set = parse_set(p.source.endpoint_set, 2 * p.n_x);

    if (p.kind == ProblemKind::kImplicit) {
      p.source.target_set =
          j.value("target_set", "zero(" + std::to_string(p.dynamics.output_dim()) + ")");
      p.target_set = parse_set(p.source.target_set, p.dynamics.output_dim());
    } else {
      p.target_set = PolyUnion::zero(std::max(1, p.algebraic_dim()));
      p.source.target_set.clear();
    }

    if (j.contains("radius")) {
      const auto& r = j.at("radius");
      if (r.is_number()) {
        p.radius = RadiusFn::constant(r.get<double>());
      } else if (r.is_string()) {
        const std::string s = r.get<std::string>();
        if (s != "inf") throw InputError("problem: radius string must be 'inf'");
        p.radius = RadiusFn();
      } else if (r.is_array()) {
        std::vector<std::pair<double, double>> knots;
        for (const auto& e : r) knots.emplace_back(e.at(0).get<double>(), e.at(1).get<double>());
        p.radius = RadiusFn::table(std::move(knots));
      } else {
        throw InputError("problem: radius must be a number, 'inf' or a [t, r] table");
      }
    }

    p.validate();
    return p;
  } catch (const json::exception& e) {
    throw InputError(std::string("problem JSON: ") + e.what());
  }
}

ControlProblem load_problem(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open problem file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_problem(ss.str());
}

std::string problem_to_json(const ControlProblem& p) {
  json j;
  if (!p.name.empty()) j["name"] = p.name;
  j["kind"] = p.kind == ProblemKind::kSemiExplicit ? "sedae" : "ics";
  j["variables"]["x"] = p.n_x;
  if (p.n_y > 0) j["variables"]["y"] = p.n_y;
  j["variables"]["u"] = p.n_u;
  j["horizon"] = {p.t0, p.t1};
  if (!p.source.dynamics.empty()) j["dynamics"] = p.source.dynamics;
  if (!p.source.algebraic.empty()) j["algebraic"] = p.source.algebraic;
  j["running_cost"] = p.source.running_cost;
  j["endpoint_cost"] = p.source.endpoint_cost;
  j["control_set"] = p.source.control_set;
  j["endpoint_set"] = p.source.endpoint_set;
  if (!p.source.target_set.empty()) j["target_set"] = p.source.target_set;
  if (p.structured_e) {
    json se;
    se["E"] = json::array();
    for (int i = 0; i < p.structured_e->e.rows(); ++i) {
      json row = json::array();
      for (int k = 0; k < p.structured_e->e.cols(); ++k) row.push_back(p.structured_e->e(i, k));
      se["E"].push_back(row);
    }
    se["g"] = p.source.structured_g;
    j["structured_E"] = se;
  }
  if (p.radius.is_constant()) {
    if (p.radius.is_finite())
      j["radius"] = p.radius.constant_value();
    else
      j["radius"] = "inf";
  } else {
    json t = json::array();
    for (const auto& [tk, rk] : p.radius.knots()) t.push_back({tk, rk});
    j["radius"] = t;
  }
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// ConstraintSystem

int ConstraintSystem::block_offset(int i) const {
  int off = 0;
  for (int k = 0; k < i; ++k) off += layout.blocks()[static_cast<size_t>(k)].dim;
  return off;
}

int ConstraintSystem::block_dim(int i) const {
  return layout.blocks()[static_cast<size_t>(i)].dim;
}

int ConstraintSystem::control_block() const {
  for (size_t i = 0; i < roles.size(); ++i) {
    if (roles[i] == BlockRole::kControl) return static_cast<int>(i);
  }
  throw InputError("constraint system: no control block");
}

std::vector<int> ConstraintSystem::alpha_coordinates() const {
  std::vector<int> out;
  for (size_t i = 0; i < roles.size(); ++i) {
    if (roles[i] == BlockRole::kAlpha) {
      const int off = block_offset(static_cast<int>(i));
      for (int k = 0; k < block_dim(static_cast<int>(i)); ++k) out.push_back(off + k);
    }
  }
  return out;
}

std::vector<int> ConstraintSystem::zero_coordinates() const {
  std::vector<int> out;
  for (size_t i = 0; i < roles.size(); ++i) {
    if (roles[i] == BlockRole::kZero) {
      const int off = block_offset(static_cast<int>(i));
      for (int k = 0; k < block_dim(static_cast<int>(i)); ++k) out.push_back(off + k);
    }
  }
  return out;
}

void ConstraintSystem::validate() const {
  if (roles.size() != layout.blocks().size())
    throw InputError("constraint system: role list does not match layout blocks");
  if (map.output_dim() != target.dim)
    throw InputError("constraint system: map output dimension must equal target dimension");
  if (!(map.layout() == layout))
    throw InputError("constraint system: map layout mismatch");
  int cb = -1;
  for (size_t i = 0; i < roles.size(); ++i) {
    if (roles[i] == BlockRole::kControl) {
      if (cb >= 0) throw InputError("constraint system: more than one control block");
      cb = static_cast<int>(i);
    }
  }
  if (cb < 0) throw InputError("constraint system: missing control block");
  if (control_set.dim != layout.blocks()[static_cast<size_t>(cb)].dim)
    throw InputError("constraint system: control set dimension mismatch");
}

ConstraintSystem constraint_system_for(const ControlProblem& p) {
  ConstraintSystem sys;
  if (p.kind == ProblemKind::kSemiExplicit && p.algebraic) {
    sys.map = *p.algebraic;
    sys.target = PolyUnion::zero(p.algebraic->output_dim());
    sys.layout = p.node_layout();
    sys.roles.clear();
    for (const auto& b : sys.layout.blocks()) {
      if (b.name == "x")
        sys.roles.push_back(BlockRole::kAlpha);
      else if (b.name == "y")
        sys.roles.push_back(BlockRole::kZero);
      else
        sys.roles.push_back(BlockRole::kControl);
    }
  } else if (p.kind == ProblemKind::kSemiExplicit) {
    // Plain ODE: lift to the implicit map xdot - dyn(x, u) with target {0}.
    if (p.n_y != 0)
      throw InputError("constraint system: semi-explicit problem without algebraic part must have n_y = 0");
    VariableLayout lifted({{"x", p.n_x}, {"u", p.n_u}, {"xdot", p.n_x}});
    std::vector<Expression> comps;
    const int xdot_off = p.n_x + p.n_u;
    for (int i = 0; i < p.n_x; ++i) {
      comps.push_back(Expression::sub(
          Expression::variable(xdot_off + i, lifted.name_of(xdot_off + i)),
          p.dynamics.components()[static_cast<size_t>(i)]));
    }
    sys.map = VectorFunction(lifted, std::move(comps));
    sys.target = PolyUnion::zero(p.n_x);
    sys.layout = lifted;
    sys.roles = {BlockRole::kAlpha, BlockRole::kControl, BlockRole::kZero};
  } else {
    sys.map = p.dynamics;
    sys.target = p.target_set;
    sys.layout = p.node_layout();
    sys.roles = {BlockRole::kAlpha, BlockRole::kControl, BlockRole::kZero};
  }
  sys.control_set = p.control_set;
  sys.validate();
  return sys;
}

}  // namespace daeopt
