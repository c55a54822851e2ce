#include <doctest.h>

#include <cmath>

#include "cma/geometry.hpp"

using namespace cma;
namespace ex = cma::expr;

namespace {

std::size_t node_at(const BallGrid& g, std::initializer_list<double> coords) {
  std::array<int, kMaxDim> idx{};
  int a = 0;
  for (double c : coords) idx[a++] = static_cast<int>(std::lround((c + 1.0) / g.spacing())) + g.pad();
  return g.node(std::span<const int>(idx.data(), g.dim()));
}

// Conformal metric e^psi I: theta_alpha = psi_alpha I, R_{alpha betabar} = -psi_{alpha betabar} I.
struct Conformal {
  ex::Expr psi;
  int n;
  cd d(int a, const RealPoint& p) const {
    const auto e = ex::d_holo({psi, 0.0}, a);
    return {e.re.eval(p), e.im.eval(p)};
  }
  cd ddbar(int a, int b, const RealPoint& p) const {
    const auto e = ex::d_holo(ex::d_antiholo({psi, 0.0}, b), a);
    return {e.re.eval(p), e.im.eval(p)};
  }
};

}  // namespace

TEST_CASE("complex hessian of |z|^2 is the identity") {
  auto g = make_grid(2, 9);
  const auto u = ScalarField::from_expr(g, ex::abs2(2));
  const auto H = complex_hessian(u);
  for (std::size_t node : g->interior_nodes()) {
    CHECK(std::abs(H(node, {0, 0}) - 1.0) < 1e-12);
    CHECK(std::abs(H(node, {1, 1}) - 1.0) < 1e-12);
    CHECK(std::abs(H(node, {0, 1})) < 1e-12);
  }
}

TEST_CASE("complex hessian of a pluriharmonic function vanishes") {
  auto g = make_grid(2, 9);
  const auto u = ScalarField::from_expr(g, ex::Expr::parse("x1^2 - y1^2 + x1*x2 - y1*y2"));
  CHECK(max_abs(complex_hessian(u)) < 1e-12);
}

TEST_CASE("complex hessian of |z1|^2 |z2|^2 at (0.3, 0.2i)") {
  auto g = make_grid(2, 21);
  const auto u = ScalarField::from_expr(g, ex::abs2(1) * ex::Expr::parse("x2^2 + y2^2"));
  const auto H = complex_hessian(u);
  const std::size_t node = node_at(*g, {0.3, 0.0, 0.0, 0.2});
  REQUIRE(g->is_interior(node));
  // quartic terms leave an O(h^2) error; exact values 0.04, 0.09, 0.06i
  const double tol = 2 * g->spacing() * g->spacing();
  CHECK(std::abs(H(node, {0, 0}) - 0.04) < tol);
  CHECK(std::abs(H(node, {1, 1}) - 0.09) < tol);
  CHECK(std::abs(H(node, {0, 1}) - cd(0.0, 0.06)) < tol);
  CHECK(std::abs(H(node, {1, 0}) - cd(0.0, -0.06)) < tol);
}

TEST_CASE("finite differences are exact on quadratics") {
  auto g = make_grid(2, 11);
  const auto u = ScalarField::from_expr(
      g, ex::Expr::parse("0.3*x1^2 - 1.2*x1*y2 + 0.7*y1*x2 + 2*y2^2 + x1 - 4"));
  const auto H = complex_hessian(u);
  // u_{1 2bar} = 1/4 (u_{x1 x2} + u_{y1 y2}) + i/4 (u_{x1 y2} - u_{y1 x2})
  const cd expected(0.0, 0.25 * (-1.2 - 0.7));
  for (std::size_t node : g->interior_nodes()) {
    CHECK(std::abs(H(node, {0, 0}) - 0.15) < 1e-12);
    CHECK(std::abs(H(node, {1, 1}) - 1.0) < 1e-12);
    CHECK(std::abs(H(node, {0, 1}) - expected) < 1e-12);
  }
}

TEST_CASE("constant metric has no connection, torsion or curvature") {
  auto g = make_grid(2, 7);
  CMat G(2, 2);
  G << 2.0, cd(0.3, 0.1), cd(0.3, -0.1), 1.0;
  const auto metric = sample_metric(g, [&](const RealPoint&) { return G; });
  CHECK(max_abs(chern_connection(metric)) < 1e-12);
  CHECK(max_abs(torsion(metric)) < 1e-12);
  CHECK(max_abs(curvature(metric)) < 1e-12);
}

TEST_CASE("conformal metric e^{x1} I against the closed form") {
  const auto mexpr = MetricExpr::conformal(2, ex::exp(ex::x(1)));
  const AnalyticGeometry exact(mexpr);
  const RealPoint p{0.2, -0.1, 0.3, 0.4};
  const auto v = exact.at(p);
  const int n = 2;
  for (int gm = 0; gm < n; ++gm)
    for (int b = 0; b < n; ++b) {
      CHECK(std::abs(v.theta[(gm * n + 0) * n + b] - (gm == b ? 0.5 : 0.0)) < 1e-14);
      CHECK(std::abs(v.theta[(gm * n + 1) * n + b]) < 1e-14);
    }
  // T^2_{12} = 1/2, T^1_{12} = 0
  CHECK(std::abs(v.torsion[(1 * n + 0) * n + 1] - 0.5) < 1e-14);
  CHECK(std::abs(v.torsion[(0 * n + 0) * n + 1]) < 1e-14);

  auto g = make_grid(2, 17);
  const auto metric = sample_metric(g, mexpr.function());
  const auto T = torsion(metric);
  const std::size_t node = node_at(*g, {0.25, 0.0, -0.25, 0.125});
  const double tol = g->spacing() * g->spacing();
  CHECK(std::abs(T(node, {1, 0, 1}) - 0.5) < tol);
  CHECK(std::abs(T(node, {1, 1, 0}) + 0.5) < tol);
  CHECK(std::abs(T(node, {0, 0, 1})) < tol);
  CHECK(max_abs(T, 0.9) >= 0.4);
}

TEST_CASE("torsion is antisymmetric by construction") {
  auto g = make_grid(2, 9);
  const auto metric = sample_metric(g, MetricExpr::from_json(
      nlohmann::json::parse(R"j({"g11":"2+x1*y2","g22":"exp(0.3*x2)","g12":{"re":"0.2*y1","im":"0.1*x1"}})j"), 2).function());
  const auto T = torsion(metric);
  for (std::size_t node : g->interior_nodes())
    for (int gm = 0; gm < 2; ++gm)
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) CHECK(T(node, {gm, a, b}) == -T(node, {gm, b, a}));
}

TEST_CASE("grid connection and curvature match a conformal oracle") {
  const Conformal c{ex::Expr::parse("0.5*sin(x1 + y2) + 0.3*x2*y1"), 2};
  const auto mexpr = MetricExpr::conformal(2, ex::exp(c.psi));
  auto g = make_grid(2, 17);
  const auto metric = sample_metric(g, mexpr.function());
  const auto theta = chern_connection(metric);
  const auto R = curvature(metric);
  const AnalyticGeometry exact(mexpr);
  const double tol = 2 * g->spacing() * g->spacing();
  for (std::size_t node : g->interior_nodes()) {
    const RealPoint p = g->point(node);
    if (g->complex_point(node).norm() > 0.6) continue;
    const auto v = exact.at(p);
    for (int gm = 0; gm < 2; ++gm)
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
          const cd want = gm == b ? c.d(a, p) : cd(0.0);
          CHECK(std::abs(v.theta[(gm * 2 + a) * 2 + b] - want) < 1e-12);
          CHECK(std::abs(theta(node, {gm, a, b}) - want) < tol);
        }
    for (int j = 0; j < 2; ++j)
      for (int i = 0; i < 2; ++i)
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b) {
            const cd want = i == j ? -c.ddbar(a, b, p) : cd(0.0);
            CHECK(std::abs(v.curvature[((j * 2 + i) * 2 + a) * 2 + b] - want) < 1e-12);
            CHECK(std::abs(R(node, {j, i, a, b}) - want) < tol);
          }
  }
}

TEST_CASE("n=1 curvature of e^{|z|^2} is -1") {
  auto g = make_grid(1, 33);
  const auto metric = sample_metric(g, MetricExpr::conformal(1, ex::exp(ex::abs2(1))).function());
  const auto R = curvature(metric);
  double worst = 0.0;
  for (std::size_t node : g->interior_nodes())
    worst = std::max(worst, std::abs(R(node, {0, 0, 0, 0}) + 1.0));
  CHECK(worst < 10 * g->spacing() * g->spacing());
}

TEST_CASE("kahler torsion decays at second order") {
  const auto mexpr =
      MetricExpr::from_potential(2, ex::abs2(2) + ex::Expr(0.2) * ex::exp(ex::Expr::parse("x1 + 0.5*x2")));
  double prev = 0.0;
  for (int m : {9, 17}) {
    const auto T = torsion(sample_metric(make_grid(2, m), mexpr.function()));
    const double e = max_abs(T, 0.5);
    CHECK(e > 0.0);
    if (prev > 0.0) CHECK(std::log2(prev / e) > 1.7);
    prev = e;
  }
}

TEST_CASE("covariant derivative basics") {
  auto g = make_grid(2, 11);
  const auto metric =
      sample_metric(g, MetricExpr::conformal(2, ex::Expr::parse("exp(x1 - 0.5*y2)")).function());
  SUBCASE("scalar: plain derivative") {
    const auto f = ScalarField::from_expr(g, ex::Expr::parse("x1*y2 + x2^2"));
    const auto a = covariant_derivative(as_tensor(f), metric, Direction::Holomorphic);
    const auto b = partial(f, Direction::Holomorphic);
    CHECK(max_abs(subtract(a, b)) < 1e-14);
  }
  SUBCASE("metric compatibility") {
    // the discrete connection is built from the same differences, so this is exact
    const auto th = chern_connection(metric);
    const auto dg = covariant_derivative(metric.tensor(), th, Direction::Holomorphic);
    const auto dbg = covariant_derivative(metric.tensor(), th, Direction::Antiholomorphic);
    CHECK(max_abs(dg) < 1e-10);
    CHECK(max_abs(dbg) < 1e-10);
  }
  SUBCASE("constant tensor on constant metric") {
    const auto flat = sample_metric(g, MetricExpr::euclidean(2).function());
    TensorField t(g, {Index::Up, Index::Down}, 0);
    for (std::size_t node = 0; node < g->size(); ++node) t(node, {0, 1}) = cd(1.0, 2.0);
    CHECK(max_abs(covariant_derivative(t, flat, Direction::Holomorphic)) < 1e-14);
  }
}

TEST_CASE("metric compatibility with the exact connection is second order") {
  const auto mexpr = MetricExpr::conformal(2, ex::Expr::parse("exp(x1 + 0.3*sin(y2))"));
  const AnalyticGeometry exact(mexpr);
  double prev = 0.0;
  for (int m : {9, 17}) {
    auto g = make_grid(2, m);
    const auto metric = sample_metric(g, mexpr.function());
    TensorField theta(g, {Index::Up, Index::Down, Index::Down}, 0);
    for (std::size_t node = 0; node < g->size(); ++node) {
      const auto v = exact.at(g->point(node));
      std::copy(v.theta.begin(), v.theta.end(), theta.at(node).begin());
    }
    const double e = max_abs(covariant_derivative(metric.tensor(), theta, Direction::Holomorphic), 0.5);
    CHECK(e > 0.0);
    if (prev > 0.0) CHECK(std::log2(prev / e) > 1.7);
    prev = e;
  }
}

TEST_CASE("tensor norms") {
  auto g = make_grid(2, 7);
  const auto eucl = sample_metric(g, MetricExpr::euclidean(2).function());
  TensorField id(g, {Index::Up, Index::Down}, 0);
  for (std::size_t node = 0; node < g->size(); ++node) {
    id(node, {0, 0}) = 1.0;
    id(node, {1, 1}) = 1.0;
  }
  const std::size_t centre = node_at(*g, {0.0, 0.0, 0.0, 0.0});
  CHECK(tensor_norm_squared(id, eucl)[centre] == doctest::Approx(2.0));
  CHECK(tensor_norm(TensorField(g, {Index::Down, Index::BarDown, Index::Down}, 0), eucl)[centre] == 0.0);

  // |T|^2 for e^{x1} I: T^2_{12} = -T^2_{21} = 1/2 and T^1_{11}=T^1_{22}=0, so
  // |T|^2 = g_{22bar} g^{11bar} g^{22bar} (2 * 1/4) = e^{-x1}/2
  auto fine = make_grid(2, 17);
  const auto metric = sample_metric(fine, MetricExpr::conformal(2, ex::exp(ex::x(1))).function());
  const auto n2 = tensor_norm_squared(torsion(metric), metric);
  const std::size_t node = node_at(*fine, {0.25, 0.0, 0.0, 0.0});
  CHECK(n2[node] == doctest::Approx(0.5 * std::exp(-0.25)).epsilon(1e-2));
}

TEST_CASE("canonical laplacian") {
  auto g = make_grid(2, 9);
  const auto eucl = sample_metric(g, MetricExpr::euclidean(2).function());
  const auto lap = canonical_laplacian(ScalarField::from_expr(g, ex::abs2(2)), eucl);
  for (std::size_t node : g->interior_nodes()) CHECK(lap[node] == doctest::Approx(4.0));
  const auto ph = canonical_laplacian(ScalarField::from_expr(g, ex::Expr::parse("x1*x2 - y1*y2")), eucl);
  for (std::size_t node : g->interior_nodes()) CHECK(std::abs(ph[node]) < 1e-12);

  auto g1 = make_grid(1, 41);
  const auto e1 = sample_metric(g1, MetricExpr::euclidean(1).function());
  const auto q = canonical_laplacian(ScalarField::from_expr(g1, ex::Expr::parse("(x1^2 + y1^2)^2")), e1);
  CHECK(q[node_at(*g1, {0.5, 0.0})] == doctest::Approx(2.0).epsilon(1e-2));
}
