#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <limits>

#include <Eigen/Dense>

namespace cma {

using cd = std::complex<double>;

// Complex dimension is at most 2, so small vectors and matrices live on the stack.
inline constexpr int kMaxN = 2;
inline constexpr int kMaxDim = 2 * kMaxN;

using CVec = Eigen::Matrix<cd, Eigen::Dynamic, 1, 0, kMaxN, 1>;
using CMat = Eigen::Matrix<cd, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxN, kMaxN>;
using RMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

// Real coordinates (x1, y1, x2, y2); unused trailing entries stay 0.
using RealPoint = std::array<double, kMaxDim>;

inline CVec to_complex(const RealPoint& p, int n) {
  CVec z(n);
  for (int k = 0; k < n; ++k) z(k) = cd(p[2 * k], p[2 * k + 1]);
  return z;
}

inline RealPoint to_real(const CVec& z) {
  RealPoint p{};
  for (int k = 0; k < z.size(); ++k) {
    p[2 * k] = z(k).real();
    p[2 * k + 1] = z(k).imag();
  }
  return p;
}

// F(A) = det(A)^{1/n} on positive Hermitian matrices.
inline double det_root(const CMat& a) {
  const double d = a.determinant().real();
  if (a.rows() == 1) return d;
  // undefined off the positive cone
  if (d < 0.0) return std::numeric_limits<double>::quiet_NaN();
  return a.rows() == 2 ? std::sqrt(d) : std::pow(d, 1.0 / static_cast<double>(a.rows()));
}

// Least eigenvalue of a Hermitian matrix.
inline double min_eigenvalue(const CMat& a) {
  if (a.rows() == 1) return a(0, 0).real();
  if (a.rows() == 2) {
    const double m = 0.5 * (a(0, 0).real() + a(1, 1).real());
    const double d = 0.5 * (a(0, 0).real() - a(1, 1).real());
    return m - std::sqrt(d * d + std::norm(a(0, 1)));
  }
  Eigen::SelfAdjointEigenSolver<CMat> es(a, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

}  // namespace cma
