#pragma once

#include <functional>
#include <vector>

#include <nlohmann/json.hpp>

#include "cma/expr.hpp"
#include "cma/types.hpp"

namespace cma {

using MetricFunction = std::function<CMat(const RealPoint&)>;
using ScalarFunction = std::function<double(const RealPoint&)>;

/// Hermitian form omega = i g_{i jbar} dz^i ^ dzbar^j given symbolically.
/// Only the upper triangle is stored; the lower triangle is its conjugate.
struct MetricExpr {
  int n = 1;
  std::vector<expr::ComplexExpr> upper;  // row-major over i <= j

  static MetricExpr euclidean(int n);
  static MetricExpr conformal(int n, const expr::Expr& factor);
  /// g = ddbar(potential); closed, hence Kähler.
  static MetricExpr from_potential(int n, const expr::Expr& potential);

  /// Accepts "euclidean", {"conformal": e}, {"kahler_potential": e}, or
  /// {"g11": e, "g22": e, "g12": {"re": e, "im": e}}.
  static MetricExpr from_json(const nlohmann::json& j, int n);
  nlohmann::json to_json() const;

  const expr::ComplexExpr& entry(int i, int j) const;  // requires i <= j
  /// Complex entry g_{i jbar} for any (i, j), conjugating below the diagonal.
  expr::ComplexExpr full_entry(int i, int j) const;

  /// g + ddbar(phi).
  MetricExpr plus_hessian(const expr::Expr& phi) const;
  MetricExpr scaled(double s) const;

  CMat eval(const RealPoint& p) const;
  MetricFunction function() const;
};

/// Symbolic complex Hessian entry (phi)_{i jbar} = d_i dbar_j phi.
expr::ComplexExpr complex_hessian_expr(const expr::Expr& phi, int i, int j);

}  // namespace cma
