#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cma/fields.hpp"
#include "cma/ma_solver.hpp"
#include "cma/metric.hpp"
#include "cma/mobius.hpp"

namespace cma {

struct TranslationSample {
  CVec a;
  CVec h;
};

/// Sample sets for the interior C^{1,1} estimate. Base points satisfy
/// |a| <= 1 - eta and displacements 0 < |h| <= eta / 2.
struct BarrierConfig {
  double eta = 0.2;
  std::vector<TranslationSample> pairs;
  std::vector<CVec> sphere;  // K1 is a supremum over the unit sphere
  std::vector<CVec> ball;    // K2 is a supremum over the open ball
  double K1 = 0.0;
  double K2 = 0.0;
  double slack_c = 10.0;
  std::size_t barrier_pairs = 4;  // leading pairs used for full grid barriers
  std::size_t polish = 8;         // best samples refined by local search; 0 keeps raw maxima
  // OuterProduct makes L(a, h) discontinuous at a = 0 for n >= 2 and K1 unbounded
  MobiusFamily family = MobiusFamily::Involution;
  std::uint64_t seed = 0;

  int n() const;
  /// Throws std::invalid_argument on a violated bound or a negative constant.
  void validate() const;
};

/// Halton points with a Cranley-Patterson shift drawn from `seed`.
BarrierConfig make_barrier_config(int n, double eta = 0.2, std::size_t pairs = 1000,
                                  std::size_t points = 1000, std::uint64_t seed = 0);
/// Same seed, twice as many pairs and points.
BarrierConfig refine(const BarrierConfig& cfg);

/// U(a, +-h, z) = phi(L(a, +-h, z)) on sphere points, evaluated analytically.
struct BoundaryPair {
  double plus = 0.0;
  double minus = 0.0;
};
BoundaryPair translated_boundary_data(const TranslationMap& plus, const TranslationMap& minus,
                                      const ScalarFunction& phi, const CVec& z);

/// max over samples of [(U(a,h,z) + U(a,-h,z)) / 2 - phi(z)] / |h|^2 on the
/// sphere, floored at 0. The best cfg.polish samples are then improved by a
/// compass search over (a, h, z) inside the admissible set.
double estimate_K1(const ScalarFunction& phi, const BarrierConfig& cfg);

struct K2Estimate {
  double form = 0.0;     // from 2 omega - L1^* omega - L2^* omega + K2 |h|^2 I >= 0
  double density = 0.0;  // from the F(rho^{1/n} omega) deficit
  double value() const { return std::max(form, density); }
  bool bounded() const { return std::isfinite(value()); }
};
/// Per-sample minimal constants, maximised as in estimate_K1.
K2Estimate estimate_K2(const MetricFunction& omega, const ScalarFunction& density, const BarrierConfig& cfg);

/// v(a,h,z) = (U(a,h,z) + U(a,-h,z)) / 2 - K1 |h|^2 + K2 (|z|^2 - 1) |h|^2 with
/// U the pullbacks of u. Pullbacks use cubic interpolation of u restricted to
/// the closed ball; nodes whose interpolation window leaves the ball are NaN.
struct Barrier {
  TranslationMap plus;
  TranslationMap minus;
  double K1 = 0.0;
  double K2 = 0.0;
  ScalarField U_plus;
  ScalarField U_minus;
  ScalarField v;
};
Barrier build_barrier(const CVec& a, const CVec& h, const ScalarField& u, double K1, double K2,
                      MobiusFamily family = MobiusFamily::Involution);

struct SupersolutionReport {
  std::size_t checked = 0;   // interior nodes with a computable Hessian of v
  std::size_t skipped = 0;   // interior nodes whose stencil reaches NaN values of v
  double slack = 0.0;
  double deficit = 0.0;      // max F(rho^{1/n} omega) - F(omega + Hess v)
  double min_eig = 0.0;      // least eigenvalue of omega + Hess v
  double form_min_eig = 0.0; // least eigenvalue of the K2 form combination
  double concavity_violation = 0.0;  // max of 1/2 F(A) + 1/2 F(B) + F(C) - F(A/2 + B/2 + C)
  double transport_error = 0.0;      // max |F(L^* omega + Hess L^* u) - L^*(rho^{1/n}) F(L^* omega)|
  bool pass = false;
  std::vector<std::string> failures;
};
SupersolutionReport verify_supersolution(const Barrier& b, const MetricFunction& omega,
                                         const ScalarFunction& density, double slack_c = 10.0);

struct QuotientSample {
  double h_norm = 0.0;
  std::vector<int> offset;  // lattice displacement in grid steps
  double sup = 0.0;         // over interior nodes with |z| <= 1 - eta
};

struct BarrierCheck {
  TranslationSample sample;
  SupersolutionReport supersolution;
  ComparisonReport comparison;
  double sphere_excess = 0.0;  // max v - u over sphere points, analytic
};

struct C11Certificate {
  double K1 = 0.0;
  double K2 = 0.0;
  double sup_quotient = 0.0;
  double slack = 0.0;
  bool bound_holds = false;
  bool pass = false;
  std::vector<QuotientSample> quotients;
  std::vector<BarrierCheck> barriers;
};

/// Second-difference quotients [(u(z+h) + u(z-h)) / 2 - u(z)] / |h|^2 over
/// interior nodes with |z| <= 1 - eta and lattice displacements 0 < |h| <= eta / 2.
std::vector<QuotientSample> second_difference_quotients(const ScalarField& u, double eta);

/// Uses cfg.K1 and cfg.K2. Passes when sup_quotient <= K1 + K2 + slack and every
/// barrier built from the leading pairs is a supersolution lying below u.
C11Certificate certify_interior_c11(const ScalarField& u, const DirichletProblem& p, const BarrierConfig& cfg);

}  // namespace cma
