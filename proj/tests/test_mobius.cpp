#include <doctest.h>

#include <cmath>
#include <random>

#include "cma/mobius.hpp"

using namespace cma;

namespace {

CVec random_point(std::mt19937_64& rng, int n, double radius) {
  std::normal_distribution<double> N;
  std::uniform_real_distribution<double> U;
  CVec z(n);
  for (int k = 0; k < n; ++k) z(k) = cd(N(rng), N(rng));
  return z / z.norm() * radius * std::pow(U(rng), 1.0 / (2 * n));
}

CVec sphere_point(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> N;
  CVec z(n);
  for (int k = 0; k < n; ++k) z(k) = cd(N(rng), N(rng));
  return z / z.norm();
}

CVec c1(cd a) {
  CVec v(1);
  v(0) = a;
  return v;
}

CVec c2(cd a, cd b) {
  CVec v(2);
  v << a, b;
  return v;
}

}  // namespace

TEST_CASE("n=1, a=0.5 reduces to the scalar Mobius map") {
  const BallAutomorphism T(c1(0.5));
  CHECK(std::abs(T.gamma()(0, 0) - 1.0) < 1e-15);
  CHECK(std::abs(T(c1(0.0))(0) + 0.5) < 1e-15);
  CHECK(std::abs(T(c1(0.5))(0)) < 1e-15);
  const cd z(0.2, -0.7);
  CHECK(std::abs(T(c1(z))(0) - (z - 0.5) / (1.0 - 0.5 * z)) < 1e-15);
}

TEST_CASE("a = 0 is the identity") {
  const BallAutomorphism T(c2(0.0, 0.0));
  const CVec z = c2(cd(0.1, 0.2), cd(-0.3, 0.4));
  CHECK((T(z) - z).norm() == 0.0);
}

TEST_CASE("centre maps to zero and the sphere is preserved") {
  std::mt19937_64 rng(7);
  const BallAutomorphism T(c2(0.3, cd(0.0, 0.4)));
  CHECK(T(T.a()).norm() < 1e-12);
  double worst = 0.0;
  for (int s = 0; s < 200; ++s) worst = std::max(worst, std::abs(T(sphere_point(rng, 2)).norm() - 1.0));
  CHECK(worst <= 1e-10);
}

TEST_CASE("T_{-a} inverts T_a") {
  std::mt19937_64 rng(11);
  for (int n : {1, 2}) {
    for (int s = 0; s < 500; ++s) {
      const BallAutomorphism T(random_point(rng, n, 0.95));
      const CVec z = random_point(rng, n, 1.0);
      CHECK((T.inverse()(T(z)) - z).norm() < 1e-12);
    }
  }
}

TEST_CASE("jacobian matches finite differences") {
  const BallAutomorphism T(c2(cd(0.2, 0.1), cd(-0.3, 0.25)));
  const CVec z = c2(cd(0.1, -0.4), cd(0.3, 0.2));
  const CMat J = T.jacobian(z);
  const double h = 1e-6;
  for (int i = 0; i < 2; ++i) {
    CVec e = CVec::Zero(2);
    e(i) = h;
    const CVec fd = (T(z + e) - T(z - e)) / (2 * h);
    CHECK((J.col(i) - fd).norm() < 1e-8);
  }
}

TEST_CASE("translation map") {
  std::mt19937_64 rng(3);
  SUBCASE("h = 0 is the identity") {
    const TranslationMap L(c2(0.3, 0.1), c2(0.0, 0.0));
    const CVec z = c2(cd(0.5, 0.1), 0.2);
    CHECK((L(z) - z).norm() == 0.0);
  }
  SUBCASE("base point goes to a + h") {
    const CVec a = c2(cd(0.2, 0.1), cd(0.0, -0.3)), h = c2(0.05, cd(0.0, 0.05));
    CHECK((TranslationMap(a, h)(a) - (a + h)).norm() < 1e-14);
  }
  SUBCASE("n=1, a=0, h=0.1 composes scalar maps") {
    const TranslationMap L(c1(0.0), c1(0.1));
    const cd z(0.4, 0.3);
    CHECK(std::abs(L(c1(z))(0) - (z + 0.1) / (1.0 + 0.1 * z)) < 1e-15);
  }
  SUBCASE("closed ball to closed ball, holomorphic") {
    for (int s = 0; s < 200; ++s) {
      const CVec a = random_point(rng, 2, 0.8);
      const CVec h = random_point(rng, 2, 0.1);
      const TranslationMap L(a, h);
      CHECK(L(sphere_point(rng, 2)).norm() <= 1.0 + 1e-12);
      CHECK(L(random_point(rng, 2, 1.0)).norm() <= 1.0 + 1e-12);
      CHECK(L.antiholomorphic_probe(random_point(rng, 2, 0.9)).cwiseAbs().maxCoeff() < 1e-8);
    }
  }
  SUBCASE("domain checks") {
    CHECK_THROWS_AS(TranslationMap(c1(0.7), c1(0.4)), std::domain_error);
    CHECK_THROWS_AS(BallAutomorphism(c1(1.0)), std::domain_error);
  }
}

TEST_CASE("pullback of the Euclidean form by a Mobius map") {
  // L(0, h, z) = (z + h) / (1 + conj(h) z), the standard map with centre -h
  const cd h(0.2, -0.1);
  const TranslationMap L(c1(0.0), c1(h));
  const cd z(0.3, 0.5);
  const CMat pulled = pullback_form(L, CMat(CMat::Identity(1, 1)), c1(z));
  const double want = std::pow((1 - std::norm(h)) / std::norm(1.0 + std::conj(h) * z), 2);
  CHECK(pulled(0, 0).real() == doctest::Approx(want).epsilon(1e-14));
}

TEST_CASE("pullback is functorial and keeps positivity") {
  std::mt19937_64 rng(5);
  const MetricFunction g = [](const RealPoint& p) {
    CMat G(2, 2);
    G << std::exp(p[0]), cd(0.2 * p[1], 0.1), cd(0.2 * p[1], -0.1), 1.5 + p[2] * p[3];
    return G;
  };
  for (int s = 0; s < 50; ++s) {
    const TranslationMap L1(random_point(rng, 2, 0.6), random_point(rng, 2, 0.1));
    const TranslationMap L2(random_point(rng, 2, 0.6), random_point(rng, 2, 0.1));
    const CVec z = random_point(rng, 2, 1.0);
    // (L2 o L1)^* g at z with the chain-rule Jacobian
    const CMat J = L2.jacobian(L1(z)) * L1.jacobian(z);
    const CMat direct = J.transpose() * g(to_real(L2(L1(z)))) * J.conjugate();
    const CMat nested = pullback_form(L1, pullback_form(L2, g, L1(z)), z);
    CHECK((direct - nested).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(min_eigenvalue(nested) > 0.0);
  }
}

TEST_CASE("grid pullback of |z|^2 is second-order accurate") {
  const TranslationMap L(c2(cd(0.1, 0.2), 0.0), c2(0.05, cd(0.0, -0.05)));
  const auto r2 = [](const RealPoint& p) { return p[0] * p[0] + p[1] * p[1] + p[2] * p[2] + p[3] * p[3]; };
  auto g = make_grid(2, 17);
  const auto pulled = pullback_scalar(L, ScalarField::from_function(g, r2));
  double worst = 0.0;
  for (std::size_t node : g->interior_nodes())
    worst = std::max(worst, std::abs(pulled[node] - L(g->complex_point(node)).squaredNorm()));
  CHECK(worst < g->spacing() * g->spacing());

  const auto c = pullback_scalar(L, ScalarField::from_function(g, [](const RealPoint&) { return 3.0; }));
  for (std::size_t node : g->interior_nodes()) CHECK(c[node] == doctest::Approx(3.0));
}

TEST_CASE("involution family") {
  std::mt19937_64 rng(11);
  for (int n : {1, 2})
    for (int trial = 0; trial < 200; ++trial) {
      const CVec a = random_point(rng, n, 0.9);
      const BallAutomorphism T(a, MobiusFamily::Involution);
      const CVec z = random_point(rng, n, 0.95);
      CHECK((T(T(z)) - z).norm() < 1e-12);
      CHECK(T(a).norm() < 1e-14);
      CHECK(std::abs(T(sphere_point(rng, n)).norm() - 1.0) < 1e-12);
      // differs from the outer-product map by the reflection I - 2 P_a
      const CMat R = CMat::Identity(n, n) - 2.0 * a * a.adjoint() / a.squaredNorm();
      CHECK((R * T(z) - BallAutomorphism(a)(z)).norm() < 1e-12);
    }
}

TEST_CASE("continuity at a = 0 separates the two families") {
  const CVec z = c2(cd(0.3, 0.1), cd(-0.2, 0.4));
  const double eps = 1e-8;
  const CVec a1 = c2(eps, 0.0), a2 = c2(0.0, eps);
  const double jump_outer = (BallAutomorphism(a1)(z) - BallAutomorphism(a2)(z)).norm();
  const double jump_inv = (BallAutomorphism(a1, MobiusFamily::Involution)(z) -
                           BallAutomorphism(a2, MobiusFamily::Involution)(z))
                              .norm();
  CHECK(jump_outer > 0.1);
  CHECK(jump_inv < 1e-7);
}

TEST_CASE("translation maps agree across families when n = 1") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const CVec a = random_point(rng, 1, 0.8);
    const CVec h = random_point(rng, 1, 0.1);
    const TranslationMap L1(a, h), L2(a, h, MobiusFamily::Involution);
    const CVec z = random_point(rng, 1, 1.0);
    CHECK((L1(z) - L2(z)).norm() < 1e-12);
    CHECK((L2(a) - (a + h)).norm() < 1e-12);
  }
}
