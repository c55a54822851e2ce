#include <doctest.h>

#include <cmath>

#include "cma/fields.hpp"
#include "cma/grid.hpp"

using namespace cma;

TEST_CASE("spacing and extent") {
  const BallGrid g(2, 9);
  CHECK(g.spacing() == doctest::Approx(0.25));
  CHECK(g.extent() == 11);
  CHECK(g.size() == 11u * 11u * 11u * 11u);
}

TEST_CASE("interior nodes carry the whole stencil inside the closed ball") {
  for (int n : {1, 2}) {
    const BallGrid g(n, 13);
    const auto stencil = hessian_stencil(n);
    CHECK(!g.interior_nodes().empty());
    for (std::size_t node : g.interior_nodes()) {
      const RealPoint p = g.point(node);
      for (const auto& o : stencil) {
        double r2 = 0.0;
        for (int a = 0; a < g.dim(); ++a) r2 += std::pow(p[a] + o[a] * g.spacing(), 2);
        REQUIRE(r2 <= 1.0 + 1e-12);
      }
    }
    for (std::size_t node : g.band_nodes()) CHECK(g.in_ball(node));
  }
}

TEST_CASE("mask is deterministic") {
  const BallGrid a(2, 11), b(2, 11);
  CHECK(a.interior_nodes() == b.interior_nodes());
  CHECK(a.band_nodes() == b.band_nodes());
}

TEST_CASE("node and point round trip") {
  const BallGrid g(2, 7);
  const std::size_t node = 1234;
  const auto idx = g.multi_index(node);
  CHECK(g.node(std::span<const int>(idx.data(), 4)) == node);
}

TEST_CASE("multilinear interpolation is exact on bilinear data") {
  auto g = make_grid(1, 17);
  const auto f = ScalarField::from_function(g, [](const RealPoint& p) {
    return 1.0 + 2.0 * p[0] - p[1] + 0.5 * p[0] * p[1];
  });
  const RealPoint q{0.123, -0.456, 0, 0};
  CHECK(f.interpolate(q) == doctest::Approx(1.0 + 0.246 + 0.456 - 0.5 * 0.123 * 0.456));
  CHECK_THROWS_AS(f.interpolate(RealPoint{2.0, 0, 0, 0}), std::domain_error);
}

TEST_CASE("invalid grid parameters") {
  CHECK_THROWS_AS(BallGrid(3, 9), std::invalid_argument);
  CHECK_THROWS_AS(BallGrid(1, 2), std::invalid_argument);
  CHECK_THROWS_AS(ScalarField::from_expr(make_grid(1, 5), cma::expr::Expr::parse("x2")),
                  std::invalid_argument);
}
