#include "cma/mobius.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace cma {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

CVec checked_sum(const CVec& a, const CVec& h) {
  if (a.size() != h.size()) throw std::invalid_argument("a and h differ in dimension");
  return a + h;
}

}  // namespace

BallAutomorphism::BallAutomorphism(CVec a, MobiusFamily family) : a_(std::move(a)), family_(family) {
  const int n = this->n();
  const double r2 = a_.squaredNorm();
  if (!(r2 < 1.0)) throw std::domain_error("automorphism centre must lie in the open ball");
  v_ = std::sqrt(1.0 - r2);
  if (family_ == MobiusFamily::Involution) {
    gamma_ = -(v_ * CMat::Identity(n, n) + a_ * a_.adjoint() / (1.0 + v_));
    return;
  }
  if (r2 == 0.0) {
    gamma_ = CMat::Identity(n, n);
    return;
  }
  const CMat P = a_ * a_.adjoint() / r2;
  gamma_ = (1.0 + v_) * P - v_ * CMat::Identity(n, n);
}

BallAutomorphism BallAutomorphism::inverse() const {
  return family_ == MobiusFamily::Involution ? *this : BallAutomorphism(-a_, family_);
}

CVec BallAutomorphism::apply(const CVec& z) const {
  const cd denom = 1.0 - a_.dot(z);  // dot conjugates the first argument
  if (std::abs(denom) < 1e-14) throw std::domain_error("automorphism denominator vanishes");
  return gamma_ * (z - a_) / denom;
}

CMat BallAutomorphism::jacobian(const CVec& z) const {
  const int n = this->n();
  const cd denom = 1.0 - a_.dot(z);
  if (std::abs(denom) < 1e-14) throw std::domain_error("automorphism denominator vanishes");
  const CMat inner = CMat::Identity(n, n) / denom + (z - a_) * a_.adjoint() / (denom * denom);
  return gamma_ * inner;
}

TranslationMap::TranslationMap(CVec a, CVec h, MobiusFamily family)
    : a_(std::move(a)),
      h_(std::move(h)),
      ta_(a_, family),
      back_(BallAutomorphism(checked_sum(a_, h_), family).inverse()),
      identity_(h_.squaredNorm() == 0.0) {
  if (a_.size() != h_.size()) throw std::invalid_argument("a and h differ in dimension");
  if (!(a_.norm() + h_.norm() < 1.0))
    throw std::domain_error("translation map needs |a| + |h| < 1");
}

CVec TranslationMap::apply(const CVec& z) const {
  if (identity_) return z;
  return back_.apply(ta_.apply(z));
}

CMat TranslationMap::jacobian(const CVec& z) const {
  if (identity_) return CMat::Identity(n(), n());
  return back_.jacobian(ta_.apply(z)) * ta_.jacobian(z);
}

CMat TranslationMap::antiholomorphic_probe(const CVec& z, double step) const {
  const int n = this->n();
  CMat out(n, n);
  // f'(0) ~ (8(f(s) - f(-s)) - (f(2s) - f(-2s))) / (12 s)
  const auto d = [&](const CVec& dir) {
    return (8.0 * (apply(z + step * dir) - apply(z - step * dir)) -
            (apply(z + 2 * step * dir) - apply(z - 2 * step * dir))) /
           (12.0 * step);
  };
  for (int i = 0; i < n; ++i) {
    CVec e = CVec::Zero(n);
    e(i) = 1.0;
    const CVec dx = d(e);
    const CVec dy = d(cd(0.0, 1.0) * e);
    out.col(i) = 0.5 * (dx + cd(0.0, 1.0) * dy);
  }
  return out;
}

double pullback_scalar(const TranslationMap& L, const ComplexScalarFunction& u, const CVec& z) {
  return u(L.apply(z));
}

CMat pullback_form(const TranslationMap& L, const CMat& g_at_image, const CVec& z) {
  const CMat J = L.jacobian(z);
  return J.transpose() * g_at_image * J.conjugate();
}

CMat pullback_form(const TranslationMap& L, const MetricFunction& g, const CVec& z) {
  const CVec w = L.apply(z);
  return pullback_form(L, g(to_real(w)), z);
}

ScalarField pullback_scalar(const TranslationMap& L, const ScalarField& u) {
  const auto& g = u.grid();
  ScalarField out(u.grid_ptr(), 0, kNaN);
  for (std::size_t node = 0; node < g.size(); ++node) {
    if (!g.in_ball(node)) continue;
    out[node] = L.is_identity() ? u[node] : u.interpolate(to_real(L.apply(g.complex_point(node))));
  }
  return out;
}

HermitianMetricField pullback_form(const TranslationMap& L, const HermitianMetricField& g) {
  const auto& grid = g.grid();
  const int n = g.n();
  HermitianMetricField out(g.grid_ptr(), 0);
  const CMat nan = CMat::Constant(n, n, cd(kNaN, kNaN));
  for (std::size_t node = 0; node < grid.size(); ++node) {
    if (!grid.in_ball(node)) {
      out.set(node, nan);
      continue;
    }
    if (L.is_identity()) {
      out.set(node, g.at(node));
      continue;
    }
    const CVec z = grid.complex_point(node);
    const auto v = g.tensor().interpolate(to_real(L.apply(z)));
    CMat G(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) G(i, j) = v[i * n + j];
    out.set(node, pullback_form(L, G, z));
  }
  return out;
}

}  // namespace cma
