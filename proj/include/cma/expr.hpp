#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace cma::expr {

// Closed expression grammar over the real coordinates x1, y1, ..., xn, yn.
enum class Op { Const, Var, Add, Sub, Mul, Div, Neg, Pow, Exp, Log, Sin, Cos };

struct Node;

class Expr {
 public:
  Expr();  // the constant 0
  Expr(double c);  // NOLINT(google-explicit-constructor)

  static Expr constant(double c);
  // Variable by real-axis index: 0 -> x1, 1 -> y1, 2 -> x2, 3 -> y2.
  static Expr var(int axis);
  static Expr var(std::string_view name);

  Op op() const;
  double value() const;  // Const only
  int axis() const;      // Var only
  const std::vector<Expr>& args() const;

  bool is_constant() const { return op() == Op::Const; }
  bool is_zero() const { return is_constant() && value() == 0.0; }
  bool is_one() const { return is_constant() && value() == 1.0; }

  // Evaluates at a real point (x1, y1, x2, y2, ...). Axes past the end of
  // `point` read as 0.
  double eval(std::span<const double> point) const;

  // Exact symbolic partial derivative along a real axis.
  Expr diff(int axis) const;

  // Largest axis index referenced, -1 if the expression is constant.
  int max_axis() const;

  nlohmann::json to_json() const;
  std::string to_string() const;

  // Accepts either a JSON tree (number, variable name, {"op":..,"args":[..]})
  // or a JSON string holding an infix formula.
  static Expr from_json(const nlohmann::json& j);
  static Expr parse(std::string_view infix);

  friend Expr operator+(const Expr& a, const Expr& b);
  friend Expr operator-(const Expr& a, const Expr& b);
  friend Expr operator*(const Expr& a, const Expr& b);
  friend Expr operator/(const Expr& a, const Expr& b);
  friend Expr operator-(const Expr& a);

 private:
  explicit Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  static Expr make(Op op, std::vector<Expr> args);
  std::shared_ptr<const Node> node_;

  friend Expr pow(const Expr& base, const Expr& exponent);
  friend Expr exp(const Expr& a);
  friend Expr log(const Expr& a);
  friend Expr sin(const Expr& a);
  friend Expr cos(const Expr& a);
};

Expr pow(const Expr& base, const Expr& exponent);
Expr exp(const Expr& a);
Expr log(const Expr& a);
Expr sin(const Expr& a);
Expr cos(const Expr& a);

// Builders for the usual complex-coordinate building blocks.
Expr x(int k);  // Re z_k, k is 1-based
Expr y(int k);  // Im z_k, k is 1-based
Expr abs2(int n);  // |z|^2 in C^n

// Wirtinger derivatives of a real expression, returned as (re, im) parts.
struct ComplexExpr {
  Expr re;
  Expr im;
};
ComplexExpr d_holo(const ComplexExpr& f, int k);      // d/dz_k, k 0-based
ComplexExpr d_antiholo(const ComplexExpr& f, int k);  // d/dzbar_k, k 0-based

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cma::expr
