#pragma once

#include <functional>

#include "cma/fields.hpp"
#include "cma/metric.hpp"
#include "cma/types.hpp"

namespace cma {

/// Choice of Gamma(a) in T_a(z) = Gamma(a) (z - a) / (1 - a^* z), with
/// v = sqrt(1 - |a|^2), P_a the orthogonal projection onto a, Q_a = I - P_a.
///  OuterProduct: Gamma = a a^* / (1 - v) - v I = P_a - v Q_a, T_{-a} = T_a^{-1},
///                T_0 = id. Not continuous at a = 0 when n >= 2.
///  Involution:   Gamma = -(v I + a a^* / (1 + v)) = -(P_a + v Q_a), the
///                standard involution; T_a^{-1} = T_a, smooth in a.
/// Both agree up to sign when n = 1, and give the same translation maps there.
enum class MobiusFamily { OuterProduct, Involution };

class BallAutomorphism {
 public:
  explicit BallAutomorphism(CVec a, MobiusFamily family = MobiusFamily::OuterProduct);

  const CVec& a() const { return a_; }
  const CMat& gamma() const { return gamma_; }
  double v() const { return v_; }
  MobiusFamily family() const { return family_; }
  int n() const { return static_cast<int>(a_.size()); }

  /// Throws std::domain_error when 1 - a^* z vanishes.
  CVec apply(const CVec& z) const;
  CVec operator()(const CVec& z) const { return apply(z); }

  /// Holomorphic Jacobian J(k, i) = dT^k / dz^i.
  CMat jacobian(const CVec& z) const;

  /// T_{-a} for OuterProduct, T_a itself for Involution.
  BallAutomorphism inverse() const;

 private:
  CVec a_;
  CMat gamma_;
  double v_;
  MobiusFamily family_;
};

inline BallAutomorphism make_automorphism(const CVec& a, MobiusFamily family = MobiusFamily::OuterProduct) {
  return BallAutomorphism(a, family);
}

/// L(a, h, z) = T_{a+h}^{-1}(T_a(z)); L(a, h, a) = a + h and L(a, 0, .) = id.
class TranslationMap {
 public:
  TranslationMap(CVec a, CVec h, MobiusFamily family = MobiusFamily::OuterProduct);

  const CVec& a() const { return a_; }
  const CVec& h() const { return h_; }
  MobiusFamily family() const { return ta_.family(); }
  int n() const { return static_cast<int>(a_.size()); }
  bool is_identity() const { return identity_; }

  CVec apply(const CVec& z) const;
  CVec operator()(const CVec& z) const { return apply(z); }
  CMat jacobian(const CVec& z) const;

  /// Fourth-order finite-difference estimate of the antiholomorphic Jacobian
  /// dL^k / dzbar^i, probing with the given real step.
  CMat antiholomorphic_probe(const CVec& z, double step = 1e-4) const;

 private:
  CVec a_;
  CVec h_;
  BallAutomorphism ta_;
  BallAutomorphism back_;
  bool identity_;
};

inline TranslationMap make_translation(const CVec& a, const CVec& h,
                                       MobiusFamily family = MobiusFamily::OuterProduct) {
  return {a, h, family};
}

using ComplexScalarFunction = std::function<double(const CVec&)>;

/// Analytic pullbacks at a point: no grid involved.
double pullback_scalar(const TranslationMap& L, const ComplexScalarFunction& u, const CVec& z);
/// (L^* g)(z) = J^T g(L z) conj(J).
CMat pullback_form(const TranslationMap& L, const CMat& g_at_image, const CVec& z);
CMat pullback_form(const TranslationMap& L, const MetricFunction& g, const CVec& z);

/// Grid pullbacks: the field is interpolated multilinearly at L(z) for every
/// node z in the closed ball; other nodes are NaN. Throws std::domain_error
/// if an image leaves the sampled region.
ScalarField pullback_scalar(const TranslationMap& L, const ScalarField& u);
HermitianMetricField pullback_form(const TranslationMap& L, const HermitianMetricField& g);

}  // namespace cma
