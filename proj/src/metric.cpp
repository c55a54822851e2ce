#include "cma/metric.hpp"

#include <stdexcept>

namespace cma {

namespace {

int upper_index(int n, int i, int j) {
  // row-major packing of {(i, j) : i <= j}
  return i * n - i * (i - 1) / 2 + (j - i);
}

}  // namespace

expr::ComplexExpr complex_hessian_expr(const expr::Expr& phi, int i, int j) {
  return expr::d_holo(expr::d_antiholo({phi, expr::Expr(0.0)}, j), i);
}

MetricExpr MetricExpr::euclidean(int n) { return conformal(n, expr::Expr(1.0)); }

MetricExpr MetricExpr::conformal(int n, const expr::Expr& factor) {
  MetricExpr g;
  g.n = n;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j)
      g.upper.push_back(i == j ? expr::ComplexExpr{factor, 0.0} : expr::ComplexExpr{0.0, 0.0});
  return g;
}

MetricExpr MetricExpr::from_potential(int n, const expr::Expr& potential) {
  MetricExpr g;
  g.n = n;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      auto e = complex_hessian_expr(potential, i, j);
      if (i == j) e.im = expr::Expr(0.0);
      g.upper.push_back(e);
    }
  return g;
}

MetricExpr MetricExpr::from_json(const nlohmann::json& j, int n) {
  if (j.is_string() && j.get<std::string>() == "euclidean") return euclidean(n);
  if (!j.is_object()) throw expr::ParseError("omega must be \"euclidean\" or an object");
  if (j.contains("conformal")) return conformal(n, expr::Expr::from_json(j["conformal"]));
  if (j.contains("kahler_potential"))
    return from_potential(n, expr::Expr::from_json(j["kahler_potential"]));
  MetricExpr g;
  g.n = n;
  for (int i = 0; i < n; ++i)
    for (int k = i; k < n; ++k) {
      const std::string key = "g" + std::to_string(i + 1) + std::to_string(k + 1);
      if (!j.contains(key)) {
        g.upper.push_back(i == k ? expr::ComplexExpr{1.0, 0.0} : expr::ComplexExpr{0.0, 0.0});
        continue;
      }
      const auto& v = j[key];
      if (i == k) {
        g.upper.push_back({expr::Expr::from_json(v), 0.0});
      } else if (v.is_object() && (v.contains("re") || v.contains("im"))) {
        g.upper.push_back({v.contains("re") ? expr::Expr::from_json(v["re"]) : expr::Expr(0.0),
                           v.contains("im") ? expr::Expr::from_json(v["im"]) : expr::Expr(0.0)});
      } else {
        g.upper.push_back({expr::Expr::from_json(v), 0.0});
      }
    }
  return g;
}

nlohmann::json MetricExpr::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (int i = 0; i < n; ++i)
    for (int k = i; k < n; ++k) {
      const std::string key = "g" + std::to_string(i + 1) + std::to_string(k + 1);
      const auto& e = entry(i, k);
      if (i == k) j[key] = e.re.to_json();
      else j[key] = {{"re", e.re.to_json()}, {"im", e.im.to_json()}};
    }
  return j;
}

const expr::ComplexExpr& MetricExpr::entry(int i, int j) const {
  if (i > j) throw std::invalid_argument("MetricExpr::entry expects i <= j");
  return upper.at(upper_index(n, i, j));
}

expr::ComplexExpr MetricExpr::full_entry(int i, int j) const {
  if (i <= j) return entry(i, j);
  const auto& e = entry(j, i);
  return {e.re, -e.im};
}

MetricExpr MetricExpr::plus_hessian(const expr::Expr& phi) const {
  MetricExpr g = *this;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      auto h = complex_hessian_expr(phi, i, j);
      auto& e = g.upper[upper_index(n, i, j)];
      e.re = e.re + h.re;
      if (i != j) e.im = e.im + h.im;
    }
  return g;
}

MetricExpr MetricExpr::scaled(double s) const {
  MetricExpr g = *this;
  for (auto& e : g.upper) {
    e.re = expr::Expr(s) * e.re;
    e.im = expr::Expr(s) * e.im;
  }
  return g;
}

CMat MetricExpr::eval(const RealPoint& p) const {
  CMat g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      const auto& e = entry(i, j);
      if (i == j) {
        g(i, i) = cd(e.re.eval(p), 0.0);
      } else {
        g(i, j) = cd(e.re.eval(p), e.im.eval(p));
        g(j, i) = std::conj(g(i, j));
      }
    }
  return g;
}

MetricFunction MetricExpr::function() const {
  return [self = *this](const RealPoint& p) { return self.eval(p); };
}

}  // namespace cma
