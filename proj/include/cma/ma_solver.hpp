#pragma once

#include <functional>
#include <optional>
#include <span>
#include <ostream>
#include <string>
#include <vector>

#include "cma/fields.hpp"
#include "cma/geometry.hpp"
#include "cma/metric.hpp"

namespace cma {

enum class DensityConvention { PlainF, ExpF };

/// (omega + i ddbar u)^n = rho omega^n on the ball, u = phi on the boundary band.
/// Data are kept as point functions and sampled where needed; at n = 2 a full
/// metric field on a fine grid is too large to hold next to the solver.
struct DirichletProblem {
  GridPtr grid;
  MetricFunction omega;
  ScalarFunction density;   // rho, already normalised to the plain convention
  ScalarFunction boundary;  // phi, evaluated on band and exterior nodes
  DensityConvention convention = DensityConvention::PlainF;

  HermitianMetricField omega_field() const;
  ScalarField density_field() const;
  ScalarField boundary_field() const;
};

/// With ExpF, `density` is f and rho = e^f.
DirichletProblem make_problem(GridPtr grid, MetricFunction omega, ScalarFunction density,
                              ScalarFunction boundary,
                              DensityConvention convention = DensityConvention::PlainF);

struct SolverOptions {
  double tol = 1e-9;               // max-norm of the log-det residual
  int max_newton = 40;             // per continuation stage
  int max_refinements = 16;        // continuation step halvings
  double min_eig_floor = 1e-8;     // positivity required at every trial point
  double sufficient_decrease = 1e-4;
  int max_backtracks = 30;
  std::size_t direct_limit = 4000; // unknowns solved by sparse LU
  std::ostream* log = nullptr;
};

struct SolutionField {
  ScalarField u;        // solved on interior, phi elsewhere
  ScalarField min_eig;  // least eigenvalue of g + Hess u on interior nodes
  double residual_norm = 0.0;
  double min_eig_interior = 0.0;
  int iterations = 0;  // Newton steps over all stages
  int continuation_stages = 0;
  bool converged = false;
  std::string message;
  std::vector<double> residual_history;
};

struct ResidualReport {
  ScalarField r;  // log det(g + Hess u) - log(rho det g) on interior nodes
  std::vector<std::size_t> infeasible;  // interior nodes where g + Hess u is not positive
  double max_abs = 0.0;                 // over feasible nodes
};

ResidualReport residual(const ScalarField& u, const DirichletProblem& p);

/// Damped Newton on the log-det residual with continuation in the density.
/// Never throws on non-convergence; the report carries the last iterate.
SolutionField solve(const DirichletProblem& p, const SolverOptions& opts = {});

/// rho >= 0: solves with rho + delta for each delta in turn and reports the
/// max-norm difference between consecutive solutions.
struct DegenerateSolution {
  std::vector<double> deltas;
  std::vector<SolutionField> solutions;
  std::vector<double> cauchy;  // |u_{k+1} - u_k| over in-ball nodes
};
DegenerateSolution solve_degenerate(const DirichletProblem& p,
                                    std::vector<double> deltas = {1e-2, 1e-3, 1e-4},
                                    const SolverOptions& opts = {});

enum class ComparisonOutcome { Pass, ConclusionFailed, HypothesesNotMet };
std::string to_string(ComparisonOutcome o);

struct ComparisonReport {
  ComparisonOutcome outcome = ComparisonOutcome::Pass;
  double slack = 0.0;
  double boundary_excess = 0.0;   // max (v - u) on the band
  double operator_deficit = 0.0;  // max (F(g + Hess u) - F(g + Hess v)) on interior
  double min_eig_v = 0.0;         // min eigenvalue of g + Hess v on interior
  double interior_excess = 0.0;   // max (v - u) on interior
  std::vector<std::string> failed_hypotheses;
};

/// Checks the hypotheses of the comparison principle for v against u
/// (v <= u on the band, F(g + Hess v) >= F(g + Hess u), g + Hess v > 0), then
/// its conclusion v <= u + slack on the interior. slack = c * spacing^2.
/// F = det^{1/n}.
ComparisonReport comparison_check(const ScalarField& u, const ScalarField& v,
                                  const HermitianMetricField& omega, double slack_c = 10.0);

/// Same check on a sub-domain: `domain` lists interior nodes, and its boundary
/// is every stencil neighbour of a domain node outside the domain.
ComparisonReport comparison_check(const ScalarField& u, const ScalarField& v, const MetricFunction& omega,
                                  std::span<const std::size_t> domain, double slack_c = 10.0);

}  // namespace cma
