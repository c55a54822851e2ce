#include "cma/grid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace cma {

namespace {

bool in_closed_ball(const RealPoint& p) {
  double r2 = 0.0;
  for (double c : p) r2 += c * c;
  return r2 <= 1.0 + 1e-12;
}

}  // namespace

std::vector<std::array<int, kMaxDim>> hessian_stencil(int n) {
  std::vector<std::array<int, kMaxDim>> out;
  const int dim = 2 * n;
  for (int a = 0; a < dim; ++a) {
    for (int s : {-1, 1}) {
      std::array<int, kMaxDim> o{};
      o[a] = s;
      out.push_back(o);
    }
  }
  // mixed second derivatives are only needed between different complex coordinates
  for (int a = 0; a < dim; ++a) {
    for (int b = a + 1; b < dim; ++b) {
      if (a / 2 == b / 2) continue;
      for (int sa : {-1, 1}) {
        for (int sb : {-1, 1}) {
          std::array<int, kMaxDim> o{};
          o[a] = sa;
          o[b] = sb;
          out.push_back(o);
        }
      }
    }
  }
  return out;
}

BallGrid::BallGrid(int n, int m, int pad) : n_(n), m_(m), pad_(pad) {
  if (n < 1 || n > kMaxN) throw std::invalid_argument("complex dimension must be 1 or 2");
  if (m < 3) throw std::invalid_argument("need at least 3 nodes per axis, got " + std::to_string(m));
  if (pad < 0) throw std::invalid_argument("negative padding");
  spacing_ = 2.0 / (m - 1);
  const int e = extent();
  size_ = 1;
  for (int a = dim() - 1; a >= 0; --a) {
    strides_[a] = static_cast<std::ptrdiff_t>(size_);
    size_ *= static_cast<std::size_t>(e);
  }

  mask_.assign(size_, static_cast<std::uint8_t>(NodeKind::Exterior));
  const auto stencil = hessian_stencil(n);
  for (std::size_t node = 0; node < size_; ++node) {
    const RealPoint p = point(node);
    if (!in_closed_ball(p)) continue;
    bool full = true;
    for (const auto& o : stencil) {
      RealPoint q = p;
      for (int a = 0; a < dim(); ++a) q[a] += o[a] * spacing_;
      if (!in_closed_ball(q)) {
        full = false;
        break;
      }
    }
    if (full) {
      mask_[node] = static_cast<std::uint8_t>(NodeKind::Interior);
      interior_.push_back(node);
    } else {
      mask_[node] = static_cast<std::uint8_t>(NodeKind::BoundaryBand);
      band_.push_back(node);
    }
  }
}

std::array<int, kMaxDim> BallGrid::multi_index(std::size_t node) const {
  std::array<int, kMaxDim> idx{};
  const auto e = static_cast<std::size_t>(extent());
  for (int a = dim() - 1; a >= 0; --a) {
    idx[a] = static_cast<int>(node % e);
    node /= e;
  }
  return idx;
}

std::size_t BallGrid::node(std::span<const int> index) const {
  std::size_t out = 0;
  for (int a = 0; a < dim(); ++a) out += static_cast<std::size_t>(index[a]) * strides_[a];
  return out;
}

RealPoint BallGrid::point(std::size_t node) const {
  const auto idx = multi_index(node);
  RealPoint p{};
  for (int a = 0; a < dim(); ++a) p[a] = coordinate(idx[a]);
  return p;
}

int BallGrid::depth(std::size_t node) const {
  const auto idx = multi_index(node);
  int d = extent();
  for (int a = 0; a < dim(); ++a) d = std::min({d, idx[a], extent() - 1 - idx[a]});
  return d;
}

bool BallGrid::locate(const RealPoint& p, std::array<int, kMaxDim>& cell,
                      std::array<double, kMaxDim>& frac) const {
  for (int a = 0; a < dim(); ++a) {
    const double t = (p[a] + 1.0) / spacing_ + pad_;
    int i = static_cast<int>(std::floor(t));
    double f = t - i;
    // points on the last face belong to the last cell
    if (i == extent() - 1 && f < 1e-9) {
      i -= 1;
      f = 1.0;
    }
    if (i < 0 || i >= extent() - 1) return false;
    cell[a] = i;
    frac[a] = f;
  }
  return true;
}

}  // namespace cma
