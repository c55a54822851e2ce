#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "cma/types.hpp"

namespace cma {

enum class NodeKind : std::uint8_t { Interior, BoundaryBand, Exterior };

/// Uniform Cartesian sampling of [-1, 1]^{2n} with `pad` extra layers of
/// exterior nodes on every face, masked to the closed unit ball.
///
/// A node is Interior when every neighbour used by the second-order complex
/// Hessian stencil (axial +-e_a and the mixed diagonals +-e_a +-e_b between
/// different complex coordinates) lies in the closed ball. Remaining in-ball
/// nodes form the boundary band, where Dirichlet data is imposed.
class BallGrid {
 public:
  BallGrid(int n, int m, int pad = 1);

  int n() const { return n_; }
  int m() const { return m_; }
  int pad() const { return pad_; }
  int dim() const { return 2 * n_; }
  int extent() const { return m_ + 2 * pad_; }  // nodes per axis including padding
  double spacing() const { return spacing_; }
  std::size_t size() const { return size_; }

  std::ptrdiff_t stride(int axis) const { return strides_[axis]; }
  std::array<int, kMaxDim> multi_index(std::size_t node) const;
  std::size_t node(std::span<const int> index) const;

  double coordinate(int index) const { return -1.0 + (index - pad_) * spacing_; }
  RealPoint point(std::size_t node) const;
  CVec complex_point(std::size_t node) const { return to_complex(point(node), n_); }

  NodeKind kind(std::size_t node) const { return static_cast<NodeKind>(mask_[node]); }
  bool in_ball(std::size_t node) const { return kind(node) != NodeKind::Exterior; }
  bool is_interior(std::size_t node) const { return kind(node) == NodeKind::Interior; }

  const std::vector<std::size_t>& interior_nodes() const { return interior_; }
  const std::vector<std::size_t>& band_nodes() const { return band_; }

  /// Distance in nodes to the nearest face of the padded cube. A field whose
  /// values are valid at depth >= k supports k more nested centred differences.
  int depth(std::size_t node) const;

  /// Lower corner and fractional offsets of the cell containing a real point;
  /// false when the point falls outside the padded cube.
  bool locate(const RealPoint& p, std::array<int, kMaxDim>& cell,
              std::array<double, kMaxDim>& frac) const;

  bool same_as(const BallGrid& other) const {
    return n_ == other.n_ && m_ == other.m_ && pad_ == other.pad_;
  }

 private:
  int n_;
  int m_;
  int pad_;
  double spacing_;
  std::size_t size_;
  std::array<std::ptrdiff_t, kMaxDim> strides_{};
  std::vector<std::uint8_t> mask_;
  std::vector<std::size_t> interior_;
  std::vector<std::size_t> band_;
};

using GridPtr = std::shared_ptr<const BallGrid>;

inline GridPtr make_grid(int n, int m, int pad = 1) {
  return std::make_shared<const BallGrid>(n, m, pad);
}

/// Offsets (in units of the grid step, per real axis) of the complex
/// Hessian stencil around a node, excluding the centre.
std::vector<std::array<int, kMaxDim>> hessian_stencil(int n);

}  // namespace cma
