#pragma once

#include "cma/fields.hpp"
#include "cma/metric.hpp"

namespace cma {

enum class Direction { Holomorphic, Antiholomorphic };

/// Complex Hessian u_{i jbar} from centred second-order differences
///   u_{i jbar} = 1/4 (u_{x_i x_j} + u_{y_i y_j}) + i/4 (u_{x_i y_j} - u_{y_i x_j}).
/// Result has variance (down, bar-down) and margin u.margin() + 1; exact on
/// polynomials of degree <= 2.
TensorField complex_hessian(const ScalarField& u);

/// The same complex Hessian at a single node of a full-grid value array.
CMat complex_hessian_at(const BallGrid& g, std::span<const double> u, std::size_t node);

/// Component-wise complex Hessian; appends (down, bar-down) slots.
TensorField complex_hessian(const TensorField& t);

/// Plain partial derivatives d_m (holomorphic) or dbar_m of every component,
/// appended as a final down or bar-down slot.
TensorField partial(const TensorField& t, Direction dir);
TensorField partial(const ScalarField& f, Direction dir);

HermitianMetricField sample_metric(const GridPtr& grid, const MetricFunction& g);

/// g + complex Hessian of phi, on the nodes where the Hessian is valid.
HermitianMetricField add_hessian(const HermitianMetricField& g, const TensorField& hess);

/// theta^gamma_{alpha beta} = d_alpha g_{beta deltabar} g^{gamma deltabar},
/// slots (up gamma, down alpha, down beta).
TensorField chern_connection(const HermitianMetricField& g);

/// T^gamma_{alpha beta} = theta^gamma_{alpha beta} - theta^gamma_{beta alpha}.
TensorField torsion(const HermitianMetricField& g);
TensorField torsion_from_connection(const TensorField& theta);

/// R^j_{i alpha betabar} = -dbar_beta (d_alpha g g^{-1})^j_i,
/// slots (up j, down i, down alpha, bar-down beta). Only mixed (1,1)
/// components exist in this layout.
TensorField curvature(const HermitianMetricField& g);

/// R_{i jbar alpha betabar} = g_{k jbar} R^k_{i alpha betabar}.
TensorField lower_curvature(const TensorField& r, const HermitianMetricField& g);

bool is_curvature_layout(const TensorField& t);

/// Chern covariant derivative; the new slot is appended last.
/// Holomorphic direction: +theta on up slots, -theta on down slots, bar slots
/// untouched. Antiholomorphic direction: conjugated coefficients on bar
/// slots only.
TensorField covariant_derivative(const TensorField& t, const TensorField& theta, Direction dir);
TensorField covariant_derivative(const TensorField& t, const HermitianMetricField& g,
                                 Direction dir);

/// Pointwise |t|^2_g, contracting each slot with g or g^{-1} according to its kind.
ScalarField tensor_norm_squared(const TensorField& t, const HermitianMetricField& g);
ScalarField tensor_norm(const TensorField& t, const HermitianMetricField& g);

/// 2 g^{i jbar} f_{i jbar}.
ScalarField canonical_laplacian(const ScalarField& f, const HermitianMetricField& g);

/// Wraps a per-node complex field (rank 0) as a tensor and back.
TensorField as_tensor(const ScalarField& f);

/// Largest |value| over nodes that are valid, in the ball, and within `radius`.
double max_abs(const TensorField& t, double radius = 1.0);
double max_abs(const ScalarField& f, double radius = 1.0);

/// a - b component-wise (same grid and variance).
TensorField subtract(const TensorField& a, const TensorField& b);

/// Connection, torsion and curvature of a symbolic metric at single points,
/// from exact derivatives. Components use the same layouts as the grid
/// tensors above.
class AnalyticGeometry {
 public:
  explicit AnalyticGeometry(const MetricExpr& g);

  struct Values {
    CMat g;
    std::vector<cd> theta;      // (up, down, down)
    std::vector<cd> torsion;    // (up, down, down)
    std::vector<cd> curvature;  // (up, down, down, bar-down)
  };
  Values at(const RealPoint& p) const;
  int n() const { return metric_.n; }

 private:
  MetricExpr metric_;
  std::vector<expr::ComplexExpr> d_;    // d_alpha g_{b dbar}, index (b, d, alpha)
  std::vector<expr::ComplexExpr> db_;   // dbar_beta g_{b dbar}, index (b, d, beta)
  std::vector<expr::ComplexExpr> ddb_;  // d_alpha dbar_beta g_{b dbar}, index (b, d, alpha, beta)
};

}  // namespace cma
