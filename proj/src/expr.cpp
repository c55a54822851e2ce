#include "cma/expr.hpp"

#include <cctype>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace cma::expr {

struct Node {
  Op op;
  double value = 0.0;
  int axis = -1;
  std::vector<Expr> args;
};

namespace {

const char* op_name(Op op) {
  switch (op) {
    case Op::Add: return "+";
    case Op::Sub: return "-";
    case Op::Mul: return "*";
    case Op::Div: return "/";
    case Op::Neg: return "neg";
    case Op::Pow: return "pow";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Sin: return "sin";
    case Op::Cos: return "cos";
    default: return "?";
  }
}

std::string axis_name(int axis) {
  return std::string(axis % 2 == 0 ? "x" : "y") + std::to_string(axis / 2 + 1);
}

}  // namespace

Expr::Expr() : Expr(0.0) {}

Expr::Expr(double c) : node_(std::make_shared<Node>(Node{Op::Const, c, -1, {}})) {}

Expr Expr::constant(double c) { return Expr(c); }

Expr Expr::var(int axis) {
  if (axis < 0) throw std::invalid_argument("negative variable axis");
  return Expr(std::make_shared<Node>(Node{Op::Var, 0.0, axis, {}}));
}

Expr Expr::var(std::string_view name) {
  if (name.size() < 2 || (name[0] != 'x' && name[0] != 'y'))
    throw ParseError("unknown variable '" + std::string(name) + "'");
  int k = 0;
  for (char c : name.substr(1)) {
    if (!std::isdigit(static_cast<unsigned char>(c)))
      throw ParseError("unknown variable '" + std::string(name) + "'");
    k = 10 * k + (c - '0');
  }
  if (k < 1) throw ParseError("variable index must start at 1: '" + std::string(name) + "'");
  return var(2 * (k - 1) + (name[0] == 'y' ? 1 : 0));
}

Op Expr::op() const { return node_->op; }
double Expr::value() const { return node_->value; }
int Expr::axis() const { return node_->axis; }
const std::vector<Expr>& Expr::args() const { return node_->args; }

Expr Expr::make(Op op, std::vector<Expr> args) {
  return Expr(std::make_shared<Node>(Node{op, 0.0, -1, std::move(args)}));
}

// Construction folds constants and drops neutral elements so repeated
// differentiation stays small.
Expr operator+(const Expr& a, const Expr& b) {
  if (a.is_constant() && b.is_constant()) return Expr(a.value() + b.value());
  if (a.is_zero()) return b;
  if (b.is_zero()) return a;
  return Expr::make(Op::Add, {a, b});
}

Expr operator-(const Expr& a, const Expr& b) {
  if (a.is_constant() && b.is_constant()) return Expr(a.value() - b.value());
  if (b.is_zero()) return a;
  if (a.is_zero()) return -b;
  return Expr::make(Op::Sub, {a, b});
}

Expr operator*(const Expr& a, const Expr& b) {
  if (a.is_constant() && b.is_constant()) return Expr(a.value() * b.value());
  if (a.is_zero() || b.is_zero()) return Expr(0.0);
  if (a.is_one()) return b;
  if (b.is_one()) return a;
  return Expr::make(Op::Mul, {a, b});
}

Expr operator/(const Expr& a, const Expr& b) {
  if (a.is_constant() && b.is_constant()) return Expr(a.value() / b.value());
  if (a.is_zero()) return Expr(0.0);
  if (b.is_one()) return a;
  return Expr::make(Op::Div, {a, b});
}

Expr operator-(const Expr& a) {
  if (a.is_constant()) return Expr(-a.value());
  if (a.op() == Op::Neg) return a.args()[0];
  return Expr::make(Op::Neg, {a});
}

Expr pow(const Expr& base, const Expr& exponent) {
  if (base.is_constant() && exponent.is_constant())
    return Expr(std::pow(base.value(), exponent.value()));
  if (exponent.is_zero()) return Expr(1.0);
  if (exponent.is_one()) return base;
  return Expr::make(Op::Pow, {base, exponent});
}

Expr exp(const Expr& a) {
  if (a.is_constant()) return Expr(std::exp(a.value()));
  return Expr::make(Op::Exp, {a});
}

Expr log(const Expr& a) {
  if (a.is_constant()) return Expr(std::log(a.value()));
  return Expr::make(Op::Log, {a});
}

Expr sin(const Expr& a) {
  if (a.is_constant()) return Expr(std::sin(a.value()));
  return Expr::make(Op::Sin, {a});
}

Expr cos(const Expr& a) {
  if (a.is_constant()) return Expr(std::cos(a.value()));
  return Expr::make(Op::Cos, {a});
}

double Expr::eval(std::span<const double> point) const {
  const auto& a = node_->args;
  switch (node_->op) {
    case Op::Const: return node_->value;
    case Op::Var:
      return node_->axis < static_cast<int>(point.size()) ? point[node_->axis] : 0.0;
    case Op::Add: return a[0].eval(point) + a[1].eval(point);
    case Op::Sub: return a[0].eval(point) - a[1].eval(point);
    case Op::Mul: return a[0].eval(point) * a[1].eval(point);
    case Op::Div: return a[0].eval(point) / a[1].eval(point);
    case Op::Neg: return -a[0].eval(point);
    case Op::Pow: {
      const double e = a[1].eval(point);
      const double b = a[0].eval(point);
      // integer exponents keep negative bases well defined
      if (a[1].is_constant() && e == std::round(e)) {
        const int k = static_cast<int>(e);
        if (k == 2) return b * b;
        if (k == 3) return b * b * b;
      }
      return std::pow(b, e);
    }
    case Op::Exp: return std::exp(a[0].eval(point));
    case Op::Log: return std::log(a[0].eval(point));
    case Op::Sin: return std::sin(a[0].eval(point));
    case Op::Cos: return std::cos(a[0].eval(point));
  }
  return 0.0;
}

Expr Expr::diff(int axis) const {
  const auto& a = node_->args;
  switch (node_->op) {
    case Op::Const: return Expr(0.0);
    case Op::Var: return Expr(node_->axis == axis ? 1.0 : 0.0);
    case Op::Add: return a[0].diff(axis) + a[1].diff(axis);
    case Op::Sub: return a[0].diff(axis) - a[1].diff(axis);
    case Op::Mul: return a[0].diff(axis) * a[1] + a[0] * a[1].diff(axis);
    case Op::Div:
      return (a[0].diff(axis) * a[1] - a[0] * a[1].diff(axis)) / (a[1] * a[1]);
    case Op::Neg: return -a[0].diff(axis);
    case Op::Pow: {
      const Expr& b = a[0];
      const Expr& e = a[1];
      if (e.is_constant()) return e * pow(b, Expr(e.value() - 1.0)) * b.diff(axis);
      return *this * (e.diff(axis) * log(b) + e * b.diff(axis) / b);
    }
    case Op::Exp: return *this * a[0].diff(axis);
    case Op::Log: return a[0].diff(axis) / a[0];
    case Op::Sin: return cos(a[0]) * a[0].diff(axis);
    case Op::Cos: return -(sin(a[0]) * a[0].diff(axis));
  }
  return Expr(0.0);
}

int Expr::max_axis() const {
  if (node_->op == Op::Var) return node_->axis;
  int m = -1;
  for (const auto& c : node_->args) m = std::max(m, c.max_axis());
  return m;
}

nlohmann::json Expr::to_json() const {
  switch (node_->op) {
    case Op::Const: return node_->value;
    case Op::Var: return axis_name(node_->axis);
    default: {
      nlohmann::json args = nlohmann::json::array();
      for (const auto& c : node_->args) args.push_back(c.to_json());
      return {{"op", op_name(node_->op)}, {"args", args}};
    }
  }
}

std::string Expr::to_string() const {
  std::ostringstream os;
  const auto& a = node_->args;
  switch (node_->op) {
    case Op::Const: os.precision(17); os << node_->value; break;
    case Op::Var: os << axis_name(node_->axis); break;
    case Op::Add: os << "(" << a[0].to_string() << " + " << a[1].to_string() << ")"; break;
    case Op::Sub: os << "(" << a[0].to_string() << " - " << a[1].to_string() << ")"; break;
    case Op::Mul: os << "(" << a[0].to_string() << " * " << a[1].to_string() << ")"; break;
    case Op::Div: os << "(" << a[0].to_string() << " / " << a[1].to_string() << ")"; break;
    case Op::Neg: os << "(-" << a[0].to_string() << ")"; break;
    case Op::Pow: os << "pow(" << a[0].to_string() << ", " << a[1].to_string() << ")"; break;
    default: os << op_name(node_->op) << "(" << a[0].to_string() << ")"; break;
  }
  return os.str();
}

Expr Expr::from_json(const nlohmann::json& j) {
  if (j.is_number()) return Expr(j.get<double>());
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    // bare variable names are common enough to skip the parser
    return parse(s);
  }
  if (!j.is_object() || !j.contains("op") || !j.contains("args") || !j["args"].is_array())
    throw ParseError("expression node must be a number, a string or {\"op\", \"args\"}: " +
                     j.dump());
  const auto op = j["op"].get<std::string>();
  std::vector<Expr> args;
  for (const auto& c : j["args"]) args.push_back(from_json(c));
  auto need = [&](std::size_t k) {
    if (args.size() != k)
      throw ParseError("operator '" + op + "' expects " + std::to_string(k) + " argument(s)");
  };
  if (op == "+" || op == "add") {
    if (args.empty()) throw ParseError("'+' needs arguments");
    Expr s = args[0];
    for (std::size_t i = 1; i < args.size(); ++i) s = s + args[i];
    return s;
  }
  if (op == "*" || op == "mul") {
    if (args.empty()) throw ParseError("'*' needs arguments");
    Expr s = args[0];
    for (std::size_t i = 1; i < args.size(); ++i) s = s * args[i];
    return s;
  }
  if (op == "-" || op == "sub") {
    if (args.size() == 1) return -args[0];
    need(2);
    return args[0] - args[1];
  }
  if (op == "/" || op == "div") { need(2); return args[0] / args[1]; }
  if (op == "neg") { need(1); return -args[0]; }
  if (op == "pow") { need(2); return pow(args[0], args[1]); }
  if (op == "exp") { need(1); return exp(args[0]); }
  if (op == "log") { need(1); return log(args[0]); }
  if (op == "sin") { need(1); return sin(args[0]); }
  if (op == "cos") { need(1); return cos(args[0]); }
  throw ParseError("unknown operator '" + op + "'");
}

namespace {

// Recursive-descent parser for the infix form:
//   expr := term (('+'|'-') term)*
//   term := unary (('*'|'/') unary)*
//   unary := '-' unary | power
//   power := atom ('^' unary)?
//   atom := number | variable | func '(' expr [',' expr] ')' | '(' expr ')'
class InfixParser {
 public:
  explicit InfixParser(std::string_view s) : s_(s) {}

  Expr parse_all() {
    Expr e = parse_expr();
    skip();
    if (pos_ != s_.size()) fail("unexpected trailing input");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(what + " at column " + std::to_string(pos_ + 1) + " in '" +
                     std::string(s_) + "'");
  }

  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }

  Expr parse_expr() {
    Expr e = parse_term();
    for (;;) {
      if (accept('+')) e = e + parse_term();
      else if (accept('-')) e = e - parse_term();
      else return e;
    }
  }

  Expr parse_term() {
    Expr e = parse_unary();
    for (;;) {
      if (accept('*')) e = e * parse_unary();
      else if (accept('/')) e = e / parse_unary();
      else return e;
    }
  }

  Expr parse_unary() {
    if (accept('-')) return -parse_unary();
    if (accept('+')) return parse_unary();
    return parse_power();
  }

  Expr parse_power() {
    Expr base = parse_atom();
    if (accept('^')) return pow(base, parse_unary());
    return base;
  }

  Expr parse_atom() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end of input");
    const char c = s_[pos_];
    if (c == '(') {
      ++pos_;
      Expr e = parse_expr();
      expect(')');
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(std::string(s_.substr(pos_)), &used);
      } catch (const std::exception&) {
        fail("bad number");
      }
      pos_ += used;
      return Expr(v);
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      const std::size_t start = pos_;
      while (pos_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      const std::string_view word = s_.substr(start, pos_ - start);
      if (accept('(')) {
        Expr a = parse_expr();
        if (word == "pow") {
          expect(',');
          Expr b = parse_expr();
          expect(')');
          return pow(a, b);
        }
        expect(')');
        if (word == "exp") return exp(a);
        if (word == "log") return log(a);
        if (word == "sin") return sin(a);
        if (word == "cos") return cos(a);
        if (word == "sqrt") return pow(a, Expr(0.5));
        pos_ = start;
        fail("unknown function '" + std::string(word) + "'");
      }
      try {
        return Expr::var(word);
      } catch (const ParseError&) {
        pos_ = start;
        fail("unknown identifier '" + std::string(word) + "'");
      }
    }
    fail(std::string("unexpected character '") + c + "'");
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace

Expr Expr::parse(std::string_view infix) { return InfixParser(infix).parse_all(); }

Expr x(int k) { return Expr::var(2 * (k - 1)); }
Expr y(int k) { return Expr::var(2 * (k - 1) + 1); }

Expr abs2(int n) {
  Expr s(0.0);
  for (int k = 1; k <= n; ++k) s = s + x(k) * x(k) + y(k) * y(k);
  return s;
}

// d/dz = (d/dx - i d/dy)/2 applied to re + i im.
ComplexExpr d_holo(const ComplexExpr& f, int k) {
  const int ax = 2 * k;
  const int ay = 2 * k + 1;
  return {Expr(0.5) * (f.re.diff(ax) + f.im.diff(ay)),
          Expr(0.5) * (f.im.diff(ax) - f.re.diff(ay))};
}

// d/dzbar = (d/dx + i d/dy)/2.
ComplexExpr d_antiholo(const ComplexExpr& f, int k) {
  const int ax = 2 * k;
  const int ay = 2 * k + 1;
  return {Expr(0.5) * (f.re.diff(ax) - f.im.diff(ay)),
          Expr(0.5) * (f.im.diff(ax) + f.re.diff(ay))};
}

}  // namespace cma::expr
