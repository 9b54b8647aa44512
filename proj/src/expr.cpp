#include "expr.hpp"

#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

namespace daeopt {

namespace {
constexpr int kDegreeInf = std::numeric_limits<int>::max() / 4;
}

// ---------------------------------------------------------------------------
// VariableLayout

VariableLayout::VariableLayout(std::vector<Block> blocks) : blocks_(std::move(blocks)) {
  for (const auto& b : blocks_) {
    if (b.name.empty() || b.dim < 0) throw InputError("invalid variable block");
    for (int i = 0; i < b.dim; ++i) {
      names_.push_back(b.dim == 1 ? b.name : b.name + std::to_string(i + 1));
    }
    total_ += b.dim;
  }
}

int VariableLayout::block_offset(const std::string& name) const {
  int off = 0;
  for (const auto& b : blocks_) {
    if (b.name == name) return off;
    off += b.dim;
  }
  throw InputError("unknown variable block '" + name + "'");
}

int VariableLayout::block_dim(const std::string& name) const {
  for (const auto& b : blocks_) {
    if (b.name == name) return b.dim;
  }
  throw InputError("unknown variable block '" + name + "'");
}

bool VariableLayout::has_block(const std::string& name) const {
  for (const auto& b : blocks_) {
    if (b.name == name) return true;
  }
  return false;
}

std::optional<int> VariableLayout::index_of(const std::string& token) const {
  int off = 0;
  for (const auto& b : blocks_) {
    if (b.dim == 1 && (token == b.name || token == b.name + "1")) return off;
    if (b.dim > 1 && token.size() > b.name.size() && token.compare(0, b.name.size(), b.name) == 0) {
      const std::string tail = token.substr(b.name.size());
      bool digits = !tail.empty();
      for (char c : tail) digits = digits && std::isdigit(static_cast<unsigned char>(c));
      if (digits) {
        const int k = std::stoi(tail);
        if (k >= 1 && k <= b.dim) return off + k - 1;
      }
    }
    off += b.dim;
  }
  return std::nullopt;
}

const std::string& VariableLayout::name_of(int index) const {
  return names_.at(static_cast<size_t>(index));
}

bool VariableLayout::operator==(const VariableLayout& other) const {
  if (blocks_.size() != other.blocks_.size()) return false;
  for (size_t i = 0; i < blocks_.size(); ++i) {
    if (blocks_[i].name != other.blocks_[i].name || blocks_[i].dim != other.blocks_[i].dim)
      return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Expression nodes

struct Expression::Node {
  enum class Kind { kConstant, kVariable, kUnary, kBinary, kPow };
  enum class Op { kNone, kNeg, kSin, kCos, kExp, kLog, kSqrt, kAdd, kSub, kMul, kDiv };

  Kind kind = Kind::kConstant;
  Op op = Op::kNone;
  double value = 0.0;   // kConstant
  int var_index = -1;   // kVariable
  std::string var_name; // kVariable
  int exponent = 0;     // kPow
  std::shared_ptr<const Node> a, b;
};

namespace {

using Node = Expression::Node;
using Kind = Node::Kind;
using Op = Node::Op;

std::shared_ptr<const Node> make_const(double v) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::kConstant;
  n->value = v;
  return n;
}

bool is_const(const std::shared_ptr<const Node>& n, double* out = nullptr) {
  if (n->kind == Kind::kConstant) {
    if (out) *out = n->value;
    return true;
  }
  return false;
}

double apply_unary(Op op, double x) {
  switch (op) {
    case Op::kNeg:
      return -x;
    case Op::kSin:
      return std::sin(x);
    case Op::kCos:
      return std::cos(x);
    case Op::kExp:
      return std::exp(x);
    case Op::kLog:
      if (x <= 0.0) throw EvalDomainError("log of non-positive value");
      return std::log(x);
    case Op::kSqrt:
      if (x < 0.0) throw EvalDomainError("sqrt of negative value");
      return std::sqrt(x);
    default:
      throw std::logic_error("bad unary op");
  }
}

double eval_node(const Node* n, std::span<const double> p) {
  switch (n->kind) {
    case Kind::kConstant:
      return n->value;
    case Kind::kVariable:
      return p[static_cast<size_t>(n->var_index)];
    case Kind::kUnary:
      return apply_unary(n->op, eval_node(n->a.get(), p));
    case Kind::kPow: {
      const double base = eval_node(n->a.get(), p);
      double r = 1.0;
      for (int i = 0; i < n->exponent; ++i) r *= base;
      return r;
    }
    case Kind::kBinary: {
      const double x = eval_node(n->a.get(), p);
      const double y = eval_node(n->b.get(), p);
      switch (n->op) {
        case Op::kAdd:
          return x + y;
        case Op::kSub:
          return x - y;
        case Op::kMul:
          return x * y;
        case Op::kDiv:
          if (y == 0.0) throw EvalDomainError("division by zero");
          return x / y;
        default:
          throw std::logic_error("bad binary op");
      }
    }
  }
  throw std::logic_error("bad node kind");
}

struct Dual {
  double v = 0.0;
  double d = 0.0;
};

/// Forward-mode pass along a single coordinate direction (allocation-free).
Dual dual_node(const Node* n, std::span<const double> p, int var) {
  switch (n->kind) {
    case Kind::kConstant:
      return {n->value, 0.0};
    case Kind::kVariable:
      return {p[static_cast<size_t>(n->var_index)], n->var_index == var ? 1.0 : 0.0};
    case Kind::kUnary: {
      const Dual a = dual_node(n->a.get(), p, var);
      switch (n->op) {
        case Op::kNeg:
          return {-a.v, -a.d};
        case Op::kSin:
          return {std::sin(a.v), std::cos(a.v) * a.d};
        case Op::kCos:
          return {std::cos(a.v), -std::sin(a.v) * a.d};
        case Op::kExp: {
          const double e = std::exp(a.v);
          return {e, e * a.d};
        }
        case Op::kLog:
          if (a.v <= 0.0) throw EvalDomainError("log of non-positive value");
          return {std::log(a.v), a.d / a.v};
        case Op::kSqrt: {
          if (a.v < 0.0) throw EvalDomainError("sqrt of negative value");
          if (a.v == 0.0 && a.d != 0.0) throw EvalDomainError("sqrt not differentiable at 0");
          const double s = std::sqrt(a.v);
          return {s, a.d == 0.0 ? 0.0 : 0.5 * a.d / s};
        }
        default:
          throw std::logic_error("bad unary op");
      }
    }
    case Kind::kPow: {
      const Dual a = dual_node(n->a.get(), p, var);
      const int k = n->exponent;
      if (k == 0) return {1.0, 0.0};
      double am = 1.0;  // a^(k-1)
      for (int i = 0; i < k - 1; ++i) am *= a.v;
      return {am * a.v, k * am * a.d};
    }
    case Kind::kBinary: {
      const Dual a = dual_node(n->a.get(), p, var);
      const Dual b = dual_node(n->b.get(), p, var);
      switch (n->op) {
        case Op::kAdd:
          return {a.v + b.v, a.d + b.d};
        case Op::kSub:
          return {a.v - b.v, a.d - b.d};
        case Op::kMul:
          return {a.v * b.v, a.d * b.v + a.v * b.d};
        case Op::kDiv: {
          if (b.v == 0.0) throw EvalDomainError("division by zero");
          const double q = a.v / b.v;
          return {q, (a.d - q * b.d) / b.v};
        }
        default:
          throw std::logic_error("bad binary op");
      }
    }
  }
  throw std::logic_error("bad node kind");
}

Jet2 jet_node(const Node* n, std::span<const double> p, std::span<const double> d) {
  Jet2 r;
  switch (n->kind) {
    case Kind::kConstant:
      r.value = n->value;
      return r;
    case Kind::kVariable:
      r.value = p[static_cast<size_t>(n->var_index)];
      r.d1 = d[static_cast<size_t>(n->var_index)];
      return r;
    case Kind::kUnary: {
      Jet2 a = jet_node(n->a.get(), p, d);
      switch (n->op) {
        case Op::kNeg:
          return {-a.value, -a.d1, -a.d2};
        case Op::kSin: {
          const double s = std::sin(a.value), c = std::cos(a.value);
          return {s, c * a.d1, -s * a.d1 * a.d1 + c * a.d2};
        }
        case Op::kCos: {
          const double s = std::sin(a.value), c = std::cos(a.value);
          return {c, -s * a.d1, -c * a.d1 * a.d1 - s * a.d2};
        }
        case Op::kExp: {
          const double e = std::exp(a.value);
          return {e, e * a.d1, e * (a.d1 * a.d1 + a.d2)};
        }
        case Op::kLog: {
          if (a.value <= 0.0) throw EvalDomainError("log of non-positive value");
          const double inv = 1.0 / a.value;
          return {std::log(a.value), inv * a.d1, inv * a.d2 - inv * inv * a.d1 * a.d1};
        }
        case Op::kSqrt: {
          if (a.value <= 0.0) throw EvalDomainError("sqrt not twice differentiable at <= 0");
          const double s = std::sqrt(a.value);
          const double d1 = 0.5 * a.d1 / s;
          return {s, d1, 0.5 * a.d2 / s - 0.25 * a.d1 * a.d1 / (s * a.value)};
        }
        default:
          throw std::logic_error("bad unary op");
      }
    }
    case Kind::kPow: {
      Jet2 a = jet_node(n->a.get(), p, d);
      const int k = n->exponent;
      if (k == 0) return {1.0, 0.0, 0.0};
      if (k == 1) return a;
      double am2 = 1.0;  // a^(k-2)
      for (int i = 0; i < k - 2; ++i) am2 *= a.value;
      const double am1 = am2 * a.value;
      Jet2 r2;
      r2.value = am1 * a.value;
      r2.d1 = k * am1 * a.d1;
      r2.d2 = k * (k - 1) * am2 * a.d1 * a.d1 + k * am1 * a.d2;
      return r2;
    }
    case Kind::kBinary: {
      Jet2 a = jet_node(n->a.get(), p, d);
      Jet2 b = jet_node(n->b.get(), p, d);
      switch (n->op) {
        case Op::kAdd:
          return {a.value + b.value, a.d1 + b.d1, a.d2 + b.d2};
        case Op::kSub:
          return {a.value - b.value, a.d1 - b.d1, a.d2 - b.d2};
        case Op::kMul:
          return {a.value * b.value, a.d1 * b.value + a.value * b.d1,
                  a.d2 * b.value + 2.0 * a.d1 * b.d1 + a.value * b.d2};
        case Op::kDiv: {
          if (b.value == 0.0) throw EvalDomainError("division by zero");
          const double q = a.value / b.value;
          const double q1 = (a.d1 - q * b.d1) / b.value;
          const double q2 = (a.d2 - 2.0 * q1 * b.d1 - q * b.d2) / b.value;
          return {q, q1, q2};
        }
        default:
          throw std::logic_error("bad binary op");
      }
    }
  }
  throw std::logic_error("bad node kind");
}

int degree_node(const Node* n) {
  switch (n->kind) {
    case Kind::kConstant:
      return 0;
    case Kind::kVariable:
      return 1;
    case Kind::kUnary:
      if (n->op == Op::kNeg) return degree_node(n->a.get());
      return degree_node(n->a.get()) == 0 ? 0 : kDegreeInf;
    case Kind::kPow: {
      const int da = degree_node(n->a.get());
      if (n->exponent == 0) return 0;
      if (da >= kDegreeInf) return kDegreeInf;
      return std::min(kDegreeInf, da * n->exponent);
    }
    case Kind::kBinary: {
      const int da = degree_node(n->a.get());
      const int db = degree_node(n->b.get());
      switch (n->op) {
        case Op::kAdd:
        case Op::kSub:
          return std::max(da, db);
        case Op::kMul:
          return std::min(kDegreeInf, da + db);
        case Op::kDiv:
          return db == 0 ? da : kDegreeInf;
        default:
          throw std::logic_error("bad binary op");
      }
    }
  }
  throw std::logic_error("bad node kind");
}

int max_var_node(const Node* n) {
  switch (n->kind) {
    case Kind::kConstant:
      return -1;
    case Kind::kVariable:
      return n->var_index;
    case Kind::kUnary:
    case Kind::kPow:
      return max_var_node(n->a.get());
    case Kind::kBinary:
      return std::max(max_var_node(n->a.get()), max_var_node(n->b.get()));
  }
  throw std::logic_error("bad node kind");
}

void print_node(const Node* n, std::ostream& os) {
  switch (n->kind) {
    case Kind::kConstant: {
      std::ostringstream tmp;
      tmp.precision(17);
      tmp << n->value;
      std::string s = tmp.str();
      if (n->value < 0) {
        os << "(" << s << ")";
      } else {
        os << s;
      }
      return;
    }
    case Kind::kVariable:
      os << n->var_name;
      return;
    case Kind::kUnary: {
      const char* fn = nullptr;
      switch (n->op) {
        case Op::kNeg:
          os << "(-";
          print_node(n->a.get(), os);
          os << ")";
          return;
        case Op::kSin:
          fn = "sin";
          break;
        case Op::kCos:
          fn = "cos";
          break;
        case Op::kExp:
          fn = "exp";
          break;
        case Op::kLog:
          fn = "log";
          break;
        case Op::kSqrt:
          fn = "sqrt";
          break;
        default:
          throw std::logic_error("bad unary op");
      }
      os << fn << "(";
      print_node(n->a.get(), os);
      os << ")";
      return;
    }
    case Kind::kPow:
      os << "(";
      print_node(n->a.get(), os);
      os << ")^" << n->exponent;
      return;
    case Kind::kBinary: {
      char op = '?';
      switch (n->op) {
        case Op::kAdd:
          op = '+';
          break;
        case Op::kSub:
          op = '-';
          break;
        case Op::kMul:
          op = '*';
          break;
        case Op::kDiv:
          op = '/';
          break;
        default:
          throw std::logic_error("bad binary op");
      }
      os << "(";
      print_node(n->a.get(), os);
      os << " " << op << " ";
      print_node(n->b.get(), os);
      os << ")";
      return;
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Expression factories (with constant folding)

Expression Expression::constant(double value) { return Expression(make_const(value)); }

Expression Expression::variable(int index, std::string name) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::kVariable;
  n->var_index = index;
  n->var_name = std::move(name);
  return Expression(n);
}

#define DAEOPT_WRAP(nptr) Expression(std::shared_ptr<const Node>(nptr))

Expression Expression::add(const Expression& a, const Expression& b) {
  double x, y;
  if (is_const(a.root_, &x) && is_const(b.root_, &y)) return constant(x + y);
  auto n = std::make_shared<Node>();
  n->kind = Kind::kBinary;
  n->op = Op::kAdd;
  n->a = a.root_;
  n->b = b.root_;
  return DAEOPT_WRAP(n);
}

Expression Expression::sub(const Expression& a, const Expression& b) {
  double x, y;
  if (is_const(a.root_, &x) && is_const(b.root_, &y)) return constant(x - y);
  auto n = std::make_shared<Node>();
  n->kind = Kind::kBinary;
  n->op = Op::kSub;
  n->a = a.root_;
  n->b = b.root_;
  return DAEOPT_WRAP(n);
}

Expression Expression::mul(const Expression& a, const Expression& b) {
  double x, y;
  if (is_const(a.root_, &x) && is_const(b.root_, &y)) return constant(x * y);
  auto n = std::make_shared<Node>();
  n->kind = Kind::kBinary;
  n->op = Op::kMul;
  n->a = a.root_;
  n->b = b.root_;
  return DAEOPT_WRAP(n);
}

Expression Expression::div(const Expression& a, const Expression& b) {
  double x, y;
  if (is_const(b.root_, &y) && y == 0.0) throw EvalDomainError("division by zero constant");
  if (is_const(a.root_, &x) && is_const(b.root_, &y)) return constant(x / y);
  auto n = std::make_shared<Node>();
  n->kind = Kind::kBinary;
  n->op = Op::kDiv;
  n->a = a.root_;
  n->b = b.root_;
  return DAEOPT_WRAP(n);
}

Expression Expression::neg(const Expression& a) {
  double x;
  if (is_const(a.root_, &x)) return constant(-x);
  auto n = std::make_shared<Node>();
  n->kind = Kind::kUnary;
  n->op = Op::kNeg;
  n->a = a.root_;
  return DAEOPT_WRAP(n);
}

Expression Expression::pow_int(const Expression& a, int exponent) {
  if (exponent < 0) throw InputError("exponent must be a non-negative integer");
  double x;
  if (is_const(a.root_, &x)) {
    double r = 1.0;
    for (int i = 0; i < exponent; ++i) r *= x;
    return constant(r);
  }
  if (exponent == 1) return a;
  auto n = std::make_shared<Node>();
  n->kind = Kind::kPow;
  n->exponent = exponent;
  n->a = a.root_;
  return DAEOPT_WRAP(n);
}

Expression Expression::apply(const std::string& function, const Expression& a) {
  Op op;
  if (function == "sin")
    op = Op::kSin;
  else if (function == "cos")
    op = Op::kCos;
  else if (function == "exp")
    op = Op::kExp;
  else if (function == "log")
    op = Op::kLog;
  else if (function == "sqrt")
    op = Op::kSqrt;
  else
    throw InputError("unknown function '" + function + "'");
  double x;
  if (is_const(a.root_, &x)) return constant(apply_unary(op, x));
  auto n = std::make_shared<Node>();
  n->kind = Kind::kUnary;
  n->op = op;
  n->a = a.root_;
  return DAEOPT_WRAP(n);
}

#undef DAEOPT_WRAP

double Expression::eval(std::span<const double> point) const {
  return eval_node(root_.get(), point);
}

double Expression::eval_gradient(std::span<const double> point, Vector& grad) const {
  const int dim = static_cast<int>(point.size());
  grad = Vector::Zero(dim);
  double value = 0.0;
  if (dim == 0) return eval_node(root_.get(), point);
  for (int i = 0; i < dim; ++i) {
    const Dual d = dual_node(root_.get(), point, i);
    grad[i] = d.d;
    value = d.v;
  }
  return value;
}

Jet2 Expression::eval_jet(std::span<const double> point, std::span<const double> dir) const {
  return jet_node(root_.get(), point, dir);
}

bool Expression::is_affine() const { return degree_node(root_.get()) <= 1; }

int Expression::max_variable_index() const { return max_var_node(root_.get()); }

std::string Expression::to_string() const {
  std::ostringstream os;
  print_node(root_.get(), os);
  return os.str();
}

// ---------------------------------------------------------------------------
// Parser

namespace {

struct Token {
  enum class Type { kNumber, kIdent, kOp, kLParen, kRParen, kComma, kEnd };
  Type type = Type::kEnd;
  double number = 0.0;
  std::string text;
  char op = 0;
  size_t pos = 0;
};

class Lexer {
 public:
  explicit Lexer(const std::string& s) : s_(s) { advance(); }

  const Token& peek() const { return tok_; }

  Token next() {
    Token t = tok_;
    advance();
    return t;
  }

  [[noreturn]] void fail(const std::string& msg, size_t pos) const {
    throw InputError("syntax error at position " + std::to_string(pos + 1) + ": " + msg);
  }

 private:
  void advance() {
    while (i_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[i_]))) ++i_;
    tok_ = Token{};
    tok_.pos = i_;
    if (i_ >= s_.size()) {
      tok_.type = Token::Type::kEnd;
      return;
    }
    const char c = s_[i_];
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && i_ + 1 < s_.size() && std::isdigit(static_cast<unsigned char>(s_[i_ + 1])))) {
      size_t end = 0;
      try {
        tok_.number = std::stod(s_.substr(i_), &end);
      } catch (const std::exception&) {
        fail("malformed number", i_);
      }
      tok_.text = s_.substr(i_, end);
      tok_.type = Token::Type::kNumber;
      i_ += end;
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t j = i_;
      while (j < s_.size() &&
             (std::isalnum(static_cast<unsigned char>(s_[j])) || s_[j] == '_'))
        ++j;
      tok_.type = Token::Type::kIdent;
      tok_.text = s_.substr(i_, j - i_);
      i_ = j;
      return;
    }
    switch (c) {
      case '+':
      case '-':
      case '*':
      case '/':
      case '^':
        tok_.type = Token::Type::kOp;
        tok_.op = c;
        break;
      case '(':
        tok_.type = Token::Type::kLParen;
        break;
      case ')':
        tok_.type = Token::Type::kRParen;
        break;
      case ',':
        tok_.type = Token::Type::kComma;
        break;
      default:
        fail(std::string("unexpected character '") + c + "'", i_);
    }
    ++i_;
  }

  const std::string& s_;
  size_t i_ = 0;
  Token tok_;
};

class Parser {
 public:
  Parser(const std::string& text, const VariableLayout& layout)
      : lex_(text), layout_(layout) {}

  Expression parse() {
    Expression e = parse_sum();
    const Token& t = lex_.peek();
    if (t.type != Token::Type::kEnd) lex_.fail("trailing input", t.pos);
    return e;
  }

 private:
  Expression parse_sum() {
    Expression e = parse_term();
    while (lex_.peek().type == Token::Type::kOp &&
           (lex_.peek().op == '+' || lex_.peek().op == '-')) {
      const char op = lex_.next().op;
      Expression rhs = parse_term();
      e = op == '+' ? Expression::add(e, rhs) : Expression::sub(e, rhs);
    }
    return e;
  }

  Expression parse_term() {
    Expression e = parse_unary();
    while (lex_.peek().type == Token::Type::kOp &&
           (lex_.peek().op == '*' || lex_.peek().op == '/')) {
      const char op = lex_.next().op;
      Expression rhs = parse_unary();
      e = op == '*' ? Expression::mul(e, rhs) : Expression::div(e, rhs);
    }
    return e;
  }

  Expression parse_unary() {
    if (lex_.peek().type == Token::Type::kOp && lex_.peek().op == '-') {
      lex_.next();
      return Expression::neg(parse_unary());
    }
    if (lex_.peek().type == Token::Type::kOp && lex_.peek().op == '+') {
      lex_.next();
      return parse_unary();
    }
    return parse_power();
  }

  Expression parse_power() {
    Expression base = parse_atom();
    if (lex_.peek().type == Token::Type::kOp && lex_.peek().op == '^') {
      const Token caret = lex_.next();
      const Token& t = lex_.peek();
      if (t.type != Token::Type::kNumber) lex_.fail("exponent must be an integer literal", caret.pos);
      const double v = lex_.next().number;
      const int k = static_cast<int>(std::lround(v));
      if (k < 0 || std::abs(v - k) > 0.0)
        lex_.fail("exponent must be a non-negative integer", caret.pos);
      return Expression::pow_int(base, k);
    }
    return base;
  }

  Expression parse_atom() {
    const Token t = lex_.next();
    switch (t.type) {
      case Token::Type::kNumber:
        return Expression::constant(t.number);
      case Token::Type::kLParen: {
        Expression e = parse_sum();
        if (lex_.peek().type != Token::Type::kRParen) lex_.fail("expected ')'", lex_.peek().pos);
        lex_.next();
        return e;
      }
      case Token::Type::kIdent: {
        if (lex_.peek().type == Token::Type::kLParen) {
          lex_.next();
          Expression arg = parse_sum();
          if (lex_.peek().type != Token::Type::kRParen) lex_.fail("expected ')'", lex_.peek().pos);
          lex_.next();
          try {
            return Expression::apply(t.text, arg);
          } catch (const InputError&) {
            lex_.fail("unknown function '" + t.text + "'", t.pos);
          }
        }
        const auto idx = layout_.index_of(t.text);
        if (!idx)
          throw InputError("unknown variable '" + t.text + "' at position " +
                           std::to_string(t.pos + 1));
        return Expression::variable(*idx, t.text);
      }
      default:
        lex_.fail("expected a value", t.pos);
    }
    throw std::logic_error("unreachable");
  }

  Lexer lex_;
  const VariableLayout& layout_;
};

}  // namespace

Expression parse_expression(const std::string& text, const VariableLayout& layout) {
  return Parser(text, layout).parse();
}

// ---------------------------------------------------------------------------
// VectorFunction

VectorFunction::VectorFunction(VariableLayout layout, std::vector<Expression> components)
    : layout_(std::move(layout)), components_(std::move(components)) {
  for (const auto& c : components_) {
    if (!c.valid()) throw InputError("invalid expression component");
    if (c.max_variable_index() >= layout_.total_dim())
      throw InputError("expression references a variable outside the layout");
  }
}

VectorFunction VectorFunction::parse(const std::vector<std::string>& texts,
                                     const VariableLayout& layout) {
  std::vector<Expression> comps;
  comps.reserve(texts.size());
  for (size_t i = 0; i < texts.size(); ++i) {
    try {
      comps.push_back(parse_expression(texts[i], layout));
    } catch (const InputError& e) {
      throw InputError("component " + std::to_string(i) + ": " + e.what());
    }
  }
  return VectorFunction(layout, std::move(comps));
}

void VectorFunction::check_point(const Vector& point) const {
  if (point.size() != layout_.total_dim())
    throw InputError("point dimension " + std::to_string(point.size()) +
                     " does not match layout dimension " + std::to_string(layout_.total_dim()));
}

Vector VectorFunction::eval(const Vector& point) const {
  check_point(point);
  Vector out(output_dim());
  std::span<const double> p(point.data(), static_cast<size_t>(point.size()));
  for (int i = 0; i < output_dim(); ++i) {
    try {
      out[i] = components_[static_cast<size_t>(i)].eval(p);
    } catch (const EvalDomainError& e) {
      throw EvalDomainError("component " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

Matrix VectorFunction::jacobian(const Vector& point) const {
  check_point(point);
  Matrix jac(output_dim(), input_dim());
  std::span<const double> p(point.data(), static_cast<size_t>(point.size()));
  Vector grad;
  for (int i = 0; i < output_dim(); ++i) {
    try {
      components_[static_cast<size_t>(i)].eval_gradient(p, grad);
    } catch (const EvalDomainError& e) {
      throw EvalDomainError("component " + std::to_string(i) + ": " + e.what());
    }
    jac.row(i) = grad.transpose();
  }
  return jac;
}

Vector VectorFunction::hessian_quadratic_form(const Vector& point, const Vector& dir) const {
  check_point(point);
  if (dir.size() != layout_.total_dim())
    throw InputError("direction dimension does not match layout dimension");
  Vector out(output_dim());
  std::span<const double> p(point.data(), static_cast<size_t>(point.size()));
  std::span<const double> d(dir.data(), static_cast<size_t>(dir.size()));
  for (int i = 0; i < output_dim(); ++i) {
    try {
      out[i] = components_[static_cast<size_t>(i)].eval_jet(p, d).d2;
    } catch (const EvalDomainError& e) {
      throw EvalDomainError("component " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

std::vector<bool> VectorFunction::is_affine() const {
  std::vector<bool> out;
  out.reserve(components_.size());
  for (const auto& c : components_) out.push_back(c.is_affine());
  return out;
}

bool VectorFunction::all_affine() const {
  for (const auto& c : components_) {
    if (!c.is_affine()) return false;
  }
  return true;
}

}  // namespace daeopt
