#include <doctest.h>

#include <cmath>
#include <random>

#include "cma/barrier.hpp"

using namespace cma;
namespace ex = cma::expr;

namespace {

ScalarFunction fn(const std::string& s) {
  return [e = ex::Expr::parse(s)](const RealPoint& p) { return e.eval(p); };
}

CVec c1(cd a) {
  CVec v(1);
  v(0) = a;
  return v;
}

BarrierConfig small_config(int n, std::size_t count = 200, std::uint64_t seed = 5) {
  auto cfg = make_barrier_config(n, 0.2, count, count, seed);
  cfg.polish = 4;
  cfg.barrier_pairs = 2;
  return cfg;
}

BarrierConfig calibrated(const DirichletProblem& p, BarrierConfig cfg) {
  cfg.K1 = estimate_K1(p.boundary, cfg);
  cfg.K2 = estimate_K2(p.omega, p.density, cfg).value();
  return cfg;
}

// Moebius matrix of z -> (z - a) / (1 - conj(a) z) and its inverse.
Eigen::Matrix2cd mobius_matrix(cd a) {
  Eigen::Matrix2cd M;
  M << 1.0, -a, -std::conj(a), 1.0;
  return M;
}

cd apply(const Eigen::Matrix2cd& M, cd z) { return (M(0, 0) * z + M(0, 1)) / (M(1, 0) * z + M(1, 1)); }

CMat random_positive(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> N;
  CMat X(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) X(i, j) = cd(N(rng), N(rng));
  return X * X.adjoint() + 1e-3 * CMat::Identity(n, n);
}

}  // namespace

TEST_CASE("sample sets respect the admissible region") {
  const auto cfg = make_barrier_config(2, 0.2, 300, 300, 3);
  for (const auto& s : cfg.pairs) {
    CHECK(s.a.norm() <= 0.8 + 1e-12);
    CHECK(s.h.norm() > 0.0);
    CHECK(s.h.norm() <= 0.1 + 1e-12);
  }
  for (const auto& z : cfg.sphere) CHECK(std::abs(z.norm() - 1.0) < 1e-12);
  for (const auto& z : cfg.ball) CHECK(z.norm() < 1.0);

  const auto fine = refine(cfg);
  CHECK(fine.pairs.size() == 600);
  CHECK((fine.pairs[17].a - cfg.pairs[17].a).norm() == 0.0);
  CHECK((fine.sphere[5] - cfg.sphere[5]).norm() == 0.0);

  auto bad = cfg;
  bad.pairs[0].h *= 10.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.K2 = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("translated boundary data") {
  const auto phi = fn("x1 + 0.5*y1");
  SUBCASE("h = 0 returns phi") {
    const TranslationMap id(c1(0.3), c1(0.0));
    const CVec z = c1(std::polar(1.0, 0.7));
    const auto U = translated_boundary_data(id, id, phi, z);
    CHECK(U.plus == doctest::Approx(phi(to_real(z))).epsilon(1e-15));
  }
  SUBCASE("constant data") {
    const TranslationMap L(c1(0.3), c1(0.05)), M(c1(0.3), c1(-0.05));
    const auto U = translated_boundary_data(L, M, fn("2.5"), c1(std::polar(1.0, 2.0)));
    CHECK(U.plus == 2.5);
    CHECK(U.minus == 2.5);
  }
  SUBCASE("n=1, phi = Re z, a = 0.3, h = 0.05 against composed Moebius matrices") {
    const cd a = 0.3, h = 0.05;
    const TranslationMap L(c1(a), c1(h)), M(c1(a), c1(-h), MobiusFamily::Involution);
    const Eigen::Matrix2cd Mp = mobius_matrix(a + h).inverse() * mobius_matrix(a);
    const Eigen::Matrix2cd Mm = mobius_matrix(a - h).inverse() * mobius_matrix(a);
    for (int k = 0; k < 16; ++k) {
      const cd z = std::polar(1.0, 0.4 * k);
      const auto U = translated_boundary_data(L, M, fn("x1"), c1(z));
      CHECK(U.plus == doctest::Approx(apply(Mp, z).real()).epsilon(1e-12));
      CHECK(U.minus == doctest::Approx(apply(Mm, z).real()).epsilon(1e-12));
    }
  }
}

TEST_CASE("K1") {
  SUBCASE("constant data gives zero") { CHECK(estimate_K1(fn("3"), small_config(2)) == 0.0); }
  SUBCASE("defining inequality holds on the sample set") {
    const auto cfg = small_config(1);
    const auto phi = fn("x1*y1 + 0.3*x1");
    const double K1 = estimate_K1(phi, cfg);
    double worst = -1.0;
    for (const auto& s : cfg.pairs) {
      const TranslationMap L(s.a, s.h, cfg.family), M(s.a, -s.h, cfg.family);
      for (const auto& z : cfg.sphere) {
        const auto U = translated_boundary_data(L, M, phi, z);
        worst = std::max(worst, 0.5 * (U.plus + U.minus) - K1 * s.h.squaredNorm() - phi(to_real(z)));
      }
    }
    CHECK(worst <= 1e-12);
  }
  SUBCASE("linear data is stable under sample doubling") {
    const auto cfg = small_config(2);
    const auto phi = fn("x1 - 0.4*y2");
    const double K1 = estimate_K1(phi, cfg), K1f = estimate_K1(phi, refine(cfg));
    CHECK(std::isfinite(K1));
    CHECK(std::abs(K1 - K1f) <= 0.1 * K1f);
  }
  SUBCASE("Re(z1^2) within 10% of a four times denser sample set") {
    const auto cfg = small_config(2);
    const auto phi = fn("x1^2 - y1^2");
    const double K1 = estimate_K1(phi, cfg), K1f = estimate_K1(phi, refine(cfg));
    CHECK(std::abs(K1 - K1f) <= 0.1 * K1f);
  }
}

TEST_CASE("K2") {
  const auto euclid = MetricExpr::euclidean(2).function();
  SUBCASE("finite limit as h shrinks") {
    std::vector<double> values;
    for (double scale : {1.0, 0.5, 0.25}) {
      auto cfg = small_config(2, 100);
      for (auto& s : cfg.pairs) s.h *= scale;
      cfg.polish = 0;
      values.push_back(estimate_K2(euclid, fn("1"), cfg).value());
    }
    CHECK(std::isfinite(values[2]));
    CHECK(values[2] > 0.0);
    CHECK(std::abs(values[1] - values[2]) < 0.2 * values[2]);
  }
  SUBCASE("unit density on the Euclidean metric") {
    const auto k = estimate_K2(euclid, fn("1"), small_config(2, 100));
    CHECK(k.form > 0.0);
    CHECK(k.density > 0.0);
  }
  SUBCASE("doubling omega doubles both constants") {
    const auto g = MetricExpr::conformal(2, ex::Expr::parse("exp(0.5*x1)"));
    const auto cfg = small_config(2, 100);
    const auto a = estimate_K2(g.function(), fn("1.2 + 0.2*x2"), cfg);
    const auto b = estimate_K2(g.scaled(2.0).function(), fn("1.2 + 0.2*x2"), cfg);
    CHECK(b.form == doctest::Approx(2.0 * a.form).epsilon(1e-9));
    CHECK(b.density == doctest::Approx(2.0 * a.density).epsilon(1e-9));
  }
}

TEST_CASE("F = det^{1/n} is concave on positive Hermitian pairs") {
  std::mt19937_64 rng(21);
  int violations = 0;
  for (int n : {1, 2})
    for (int trial = 0; trial < 5000; ++trial) {
      const CMat A = random_positive(rng, n), B = random_positive(rng, n);
      const double lhs = det_root(0.5 * A + 0.5 * B), rhs = 0.5 * det_root(A) + 0.5 * det_root(B);
      if (lhs < rhs - 1e-12 * (1.0 + rhs)) ++violations;
    }
  CHECK(violations == 0);
}

TEST_CASE("barrier construction") {
  auto grid = make_grid(1, 65);
  SUBCASE("h = 0 returns u") {
    const auto u = ScalarField::from_function(grid, fn("x1^2 + 0.3*y1"));
    const auto b = build_barrier(c1(0.2), c1(0.0), u, 3.0, 4.0);
    for (std::size_t node = 0; node < grid->size(); ++node)
      if (grid->in_ball(node)) CHECK(b.v[node] == u[node]);
  }
  SUBCASE("u = 0 gives the correction terms only") {
    const auto u = ScalarField::from_function(grid, fn("0"));
    const double K1 = 1.5, K2 = 2.5;
    const CVec a = c1(cd(0.3, -0.2)), h = c1(cd(0.05, 0.02));
    const auto b = build_barrier(a, h, u, K1, K2);
    std::size_t finite = 0;
    for (std::size_t node = 0; node < grid->size(); ++node) {
      if (!std::isfinite(b.v[node])) continue;
      ++finite;
      const double r2 = grid->complex_point(node).squaredNorm();
      CHECK(b.v[node] == doctest::Approx(K2 * (r2 - 1.0) * h.squaredNorm() - K1 * h.squaredNorm()).epsilon(1e-13));
      CHECK(b.v[node] <= 0.0);
    }
    CHECK(finite > grid->interior_nodes().size() / 2);
  }
}

TEST_CASE("supersolution check at h = 0 reduces to the equation") {
  auto grid = make_grid(1, 65);
  const auto p = make_problem(grid, MetricExpr::conformal(1, ex::Expr::parse("exp(0.5*x1)")).function(),
                              fn("1.2 + 0.2*y1"), fn("0.3*x1^2 + 0.1*x1*y1"));
  const auto sol = solve(p);
  REQUIRE(sol.converged);
  const auto b = build_barrier(c1(0.1), c1(0.0), sol.u, 0.0, 0.0);
  const auto rep = verify_supersolution(b, p.omega, p.density);
  CHECK(rep.pass);
  CHECK(std::abs(rep.deficit) < 1e-8);
  CHECK(rep.checked == grid->interior_nodes().size());
}

TEST_CASE("interior certificate") {
  SUBCASE("affine pluriharmonic data has vanishing quotients") {
    auto grid = make_grid(1, 65);
    const auto p = make_problem(grid, MetricExpr::euclidean(1).function(), fn("1"), fn("0.5*x1 - 0.3*y1 + 1"));
    const auto sol = solve(p);
    REQUIRE(sol.converged);
    const auto cert = certify_interior_c11(sol.u, p, calibrated(p, small_config(1)));
    CHECK(std::abs(cert.sup_quotient) <= 1e-6);
    CHECK(cert.pass);
  }
  SUBCASE("Re(z^2) has quotient one along x") {
    auto grid = make_grid(1, 65);
    const auto p = make_problem(grid, MetricExpr::euclidean(1).function(), fn("1"), fn("x1^2 - y1^2"));
    const auto sol = solve(p);
    REQUIRE(sol.converged);
    const auto cert = certify_interior_c11(sol.u, p, calibrated(p, small_config(1)));
    CHECK(cert.sup_quotient == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(cert.pass);
  }
  SUBCASE("solved conformal instance, full chain") {
    auto grid = make_grid(1, 65);
    const auto p = make_problem(grid, MetricExpr::conformal(1, ex::Expr::parse("exp(0.5*x1)")).function(),
                                fn("1.2 + 0.2*y1"), fn("0.3*x1^2 + 0.1*x1*y1 + 0.2*y1"));
    const auto sol = solve(p);
    REQUIRE(sol.converged);
    const auto cfg = calibrated(p, small_config(1));
    const auto cert = certify_interior_c11(sol.u, p, cfg);
    CHECK(cert.pass);
    REQUIRE(cert.barriers.size() == 2);
    for (const auto& b : cert.barriers) {
      CHECK(b.supersolution.pass);
      CHECK(b.supersolution.concavity_violation <= 1e-12);
      CHECK(b.comparison.outcome == ComparisonOutcome::Pass);
      CHECK(b.sphere_excess <= 1e-12);
    }
    SUBCASE("larger constants keep the certificate") {
      auto more = cfg;
      more.K1 += 5.0;
      CHECK(certify_interior_c11(sol.u, p, more).pass);
      more = cfg;
      more.K2 += 5.0;
      CHECK(certify_interior_c11(sol.u, p, more).pass);
    }
  }
  SUBCASE("n=2 Kahler instance") {
    auto grid = make_grid(2, 33);
    const auto omega = MetricExpr::from_potential(2, ex::Expr::parse("x1^2 + y1^2 + x2^2 + y2^2 + 0.1*exp(0.5*x1)"));
    const auto p = make_problem(grid, omega.function(), fn("1.2 + 0.2*x2"), fn("0.3*(x1^2 + y2^2) + 0.1*x1*y1"));
    const auto sol = solve(p);
    REQUIRE(sol.converged);
    auto cfg = calibrated(p, small_config(2));
    cfg.barrier_pairs = 1;
    const auto cert = certify_interior_c11(sol.u, p, cfg);
    CHECK(cert.bound_holds);
    CHECK(cert.pass);
  }
}

TEST_CASE("smoothed kink: K1 grows as the smoothing scale shrinks") {
  std::vector<double> K1;
  for (const char* phi : {"sqrt(x1^2 + 0.04)", "sqrt(x1^2 + 0.01)", "sqrt(x1^2 + 0.0025)"})
    K1.push_back(estimate_K1(fn(phi), small_config(1)));
  CHECK(K1[1] > K1[0]);
  CHECK(K1[2] > K1[1]);

  auto grid = make_grid(1, 65);
  const auto p = make_problem(grid, MetricExpr::euclidean(1).function(), fn("1"), fn("sqrt(x1^2 + 0.0025)"));
  const auto sol = solve(p);
  REQUIRE(sol.converged);
  CHECK(certify_interior_c11(sol.u, p, calibrated(p, small_config(1))).pass);
}

TEST_CASE("certified constant is unchanged by rescaling a self-similar instance") {
  // u*(z) = 0.2|z|^2 + 0.05 Re(z1^2) satisfies 4 u*(z/2) = u*(z); the rescaled
  // instance is assembled through the rescaling map.
  auto grid = make_grid(2, 33);
  const auto ustar = fn("0.2*(x1^2 + y1^2 + x2^2 + y2^2) + 0.05*(x1^2 - y1^2)");
  const auto rho = fn("1.44");  // Re(z1^2) is pluriharmonic
  const ScalarFunction half = [ustar](const RealPoint& x) {
    RealPoint y = x;
    for (auto& c : y) c *= 0.5;
    return 4.0 * ustar(y);
  };
  const auto omega = MetricExpr::euclidean(2).function();
  const auto p1 = make_problem(grid, omega, rho, ustar);
  const auto p2 = make_problem(grid, omega, rho, half);
  const auto s1 = solve(p1), s2 = solve(p2);
  REQUIRE(s1.converged);
  REQUIRE(s2.converged);
  auto cfg = small_config(2, 100);
  cfg.barrier_pairs = 0;
  const auto c1 = certify_interior_c11(s1.u, p1, calibrated(p1, cfg));
  const auto c2 = certify_interior_c11(s2.u, p2, calibrated(p2, cfg));
  CHECK(c2.sup_quotient == doctest::Approx(c1.sup_quotient).epsilon(0.05));
  CHECK(c2.K1 + c2.K2 == doctest::Approx(c1.K1 + c1.K2).epsilon(0.05));
}
