#pragma once

#include <functional>
#include <vector>

#include "cma/fields.hpp"
#include "cma/geometry.hpp"

namespace cma {

/// h^j_i = gt_{i kbar} g^{j kbar} as a (down i, up j) tensor, so gt = h g.
class EndomorphismField {
 public:
  EndomorphismField(const HermitianMetricField& g, const HermitianMetricField& gt);

  const TensorField& tensor() const { return h_; }
  CMat at(std::size_t node) const;

  /// Max |h g - gt| over valid in-ball nodes.
  double reconstruction_error(const HermitianMetricField& g, const HermitianMetricField& gt) const;
  /// Least real part and largest |imaginary part| of the eigenvalues.
  double min_eigenvalue() const;
  double max_imag_eigenvalue() const;

 private:
  TensorField h_;
};

/// max over nodes of max(lambda_max(g^{-1} gt), lambda_max(gt^{-1} g)) on valid
/// in-ball nodes with |z| <= radius. Throws std::domain_error on a singular or
/// indefinite metric.
double equivalence_lambda(const HermitianMetricField& g, const HermitianMetricField& gt,
                          double radius = 1.0);

/// The Calabi quantity by three formulas, gt = g + ddbar phi:
///   direct  gt^{j rbar} gt^{s kbar} gt^{m lbar} phi_{j kbar m} conj(phi_{r sbar l}),
///           phi_{j kbar m} = nabla_m nabla_kbar nabla_j phi (nested differences)
///   grad    |nabla^{1,0} gt|^2_gt
///   conn    |theta_gt - theta_g|^2_gt
struct CalabiS {
  HermitianMetricField gt;
  ScalarField direct;
  ScalarField grad;
  ScalarField conn;

  /// Largest pointwise difference among the three relative to max S, over
  /// nodes with |z| <= radius where all are valid.
  double max_relative_deviation(double radius = 1.0) const;
};

/// Throws std::domain_error when gt loses positivity on a node with |z| <= radius.
CalabiS calabi_S(const HermitianMetricField& g, const ScalarField& phi, double radius = 1.0);

/// Residuals of theta_gt - theta_g = (nabla h) h^{-1} and
/// nabla_gt h = h (nabla h) h^{-1}, max-norm over |z| <= radius.
struct ConnectionIdentities {
  double theta_difference = 0.0;
  double conjugate_relation = 0.0;
  double scale = 0.0;  // max |theta_gt - theta_g|
};
ConnectionIdentities connection_identities(const HermitianMetricField& g,
                                           const HermitianMetricField& gt, double radius = 1.0);

/// Fit of  lap S + C1 S^{3/2} + C2 >= 0  with lap the canonical Laplacian of
/// gt, over valid nodes with |z| <= radius. For each C1 the least feasible C2
/// is exact; C1 >= 0 minimises C1 * mean(S^{3/2}) + C2, i.e. the supporting
/// line of the lower hull of (S^{3/2}, -lap S) at the mean abscissa. The
/// defect is then checked against slack = slack_c spacing^2.
struct EllipticFit {
  ScalarField lapS;
  ScalarField defect;  // lap S + C1 S^{3/2} + C2
  double C1 = 0.0;
  double C2 = 0.0;
  double slack = 0.0;
  double min_defect = 0.0;
  std::size_t nodes = 0;
  bool bounded = false;  // finite constants and defect >= -slack everywhere
};
EllipticFit elliptic_defect(const ScalarField& S, const HermitianMetricField& gt,
                            double radius = 0.5, double slack_c = 10.0);

/// Residual fields and max-norms of
///   012  R^l_{m i jbar} - R^l_{i m jbar} - T^l_{m i, jbar}
///   013  R^lbar_{kbar i jbar} - R^lbar_{jbar i kbar} - T^lbar_{jbar kbar, i}
///   014  R^l_{m i jbar, t} - R^l_{m t jbar, i} - T^s_{i t} R^l_{m s jbar}
/// for the Chern connection of g. The term maxima show the residuals are not
/// trivially small.
struct BianchiResiduals {
  TensorField f012;
  TensorField f013;
  TensorField f014;
  double r012 = 0.0;
  double r013 = 0.0;
  double r014 = 0.0;
  double curvature_max = 0.0;
  double torsion_derivative_max = 0.0;
  double curvature_derivative_max = 0.0;
};
BianchiResiduals bianchi_residuals(const HermitianMetricField& g, double radius = 0.8);

/// Pointwise norms of the background geometry that the constants depend on.
struct GeometryNorms {
  double torsion = 0.0;
  double torsion_derivative = 0.0;
  double curvature = 0.0;
  double curvature_derivative = 0.0;
};
GeometryNorms geometry_norms(const HermitianMetricField& g, double radius = 0.8);

struct CalabiDiagnostics {
  CalabiS S;
  double lambda = 0.0;
  EllipticFit fit;
  ConnectionIdentities identities;
  GeometryNorms norms;  // left at 0 unless requested
};
/// The norms carry rank-5 tensors over the whole grid and dominate the cost at n = 2.
CalabiDiagnostics diagnose_calabi(const HermitianMetricField& g, const ScalarField& phi,
                                  double radius = 0.5, double slack_c = 10.0,
                                  bool with_norms = true);

/// (2^{alpha+1} c / ((2^alpha - 1) d))^{1/alpha}. Throws std::domain_error
/// unless 0 < alpha < 1, d > 0 and c >= 0.
double meyers_bound(double c, double alpha, double d);

/// Least c for which u(s) <= c / (r - s) u(r)^{1 - alpha} holds on a
/// samples x samples grid of 0 <= s < r < d, and the resulting bound.
struct MeyersProbe {
  double c = 0.0;
  double bound = 0.0;
  double u0 = 0.0;
  bool holds = false;  // u(0) <= bound
};
MeyersProbe meyers_probe(const std::function<double(double)>& u, double alpha, double d,
                         int samples = 400);

/// q_k = (m/(m-1))^k + (m-1)/2 and r_k = R + (R0 - R) 2^{-k}.
double ladder_exponent(int k, double m);
double ladder_radius(int k, double R, double R0);

struct LadderStep {
  int k = 0;
  double q = 0.0;
  double r = 0.0;
  double norm = 0.0;
};
struct LadderReport {
  std::vector<LadderStep> steps;  // k = 1 .. K
  double sup_norm = 0.0;
  double max_S = 0.0;  // largest node value on B_R
  double gap = 0.0;    // |terminal norm - max_S| / max_S
  bool nondecreasing = false;
};

/// ||S||_{L^q(B_r)} with the volume form omega^n/n!, node quadrature with
/// cell volume spacing^{2n} det g. Throws std::domain_error if B_R0 leaves the
/// unit ball or S is not valid on it, std::invalid_argument on bad parameters.
double lp_norm(const ScalarField& S, const HermitianMetricField& g, double q, double r);
LadderReport lp_ladder(const ScalarField& S, const HermitianMetricField& g, double R, double R0,
                       double m, int steps = 12);

}  // namespace cma
