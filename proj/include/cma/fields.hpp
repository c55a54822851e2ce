#pragma once

#include <functional>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "cma/expr.hpp"
#include "cma/grid.hpp"
#include "cma/types.hpp"

namespace cma {

/// Real scalar sampled on every node of a grid. Values are trusted on nodes
/// with depth >= margin(); anything shallower is NaN.
class ScalarField {
 public:
  ScalarField() = default;
  explicit ScalarField(GridPtr grid, int margin = 0,
                       double fill = std::numeric_limits<double>::quiet_NaN());

  static ScalarField from_function(GridPtr grid, const std::function<double(const RealPoint&)>& f);
  static ScalarField from_expr(GridPtr grid, const expr::Expr& e);

  const BallGrid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const { return grid_; }
  int margin() const { return margin_; }
  bool valid(std::size_t node) const { return grid_->depth(node) >= margin_; }

  double& operator[](std::size_t node) { return values_[node]; }
  double operator[](std::size_t node) const { return values_[node]; }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  /// Multilinear interpolation; throws std::domain_error if any corner of the
  /// enclosing cell is not valid.
  double interpolate(const RealPoint& p) const;
  /// Tensor-product cubic Lagrange interpolation (4 nodes per axis, window
  /// shifted inwards near the edge of the valid region). NaN values inside the
  /// window propagate; throws std::domain_error if p is outside the valid box.
  double interpolate_cubic(const RealPoint& p) const;

 private:
  GridPtr grid_;
  int margin_ = 0;
  std::vector<double> values_;
};

/// Kind of each tensor slot. Bar kinds belong to the conjugate bundle.
enum class Index { Up, Down, BarUp, BarDown };

std::string to_string(Index k);

/// Complex multi-indexed field: n^rank components per node, stored
/// contiguously with the last slot varying fastest.
class TensorField {
 public:
  TensorField() = default;
  TensorField(GridPtr grid, std::vector<Index> variance, int margin);

  const BallGrid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const { return grid_; }
  const std::vector<Index>& variance() const { return variance_; }
  int rank() const { return static_cast<int>(variance_.size()); }
  int components() const { return components_; }
  int margin() const { return margin_; }
  bool valid(std::size_t node) const { return grid_->depth(node) >= margin_; }

  std::span<cd> at(std::size_t node) {
    return {data_.data() + node * components_, static_cast<std::size_t>(components_)};
  }
  std::span<const cd> at(std::size_t node) const {
    return {data_.data() + node * components_, static_cast<std::size_t>(components_)};
  }

  /// Flat component offset for a multi-index (one entry per slot, each in [0, n)).
  int offset(std::span<const int> index) const;
  int offset(std::initializer_list<int> index) const {
    return offset(std::span<const int>(index.begin(), index.size()));
  }
  cd& operator()(std::size_t node, std::initializer_list<int> index) {
    return data_[node * components_ + offset(index)];
  }
  cd operator()(std::size_t node, std::initializer_list<int> index) const {
    return data_[node * components_ + offset(index)];
  }

  /// Component-wise multilinear interpolation at a real point.
  std::vector<cd> interpolate(const RealPoint& p) const;

 private:
  GridPtr grid_;
  std::vector<Index> variance_;
  int margin_ = 0;
  int components_ = 1;
  std::vector<cd> data_;
};

/// Per-node positive Hermitian matrix g_{i jbar}, stored as a (Down, BarDown)
/// tensor.
class HermitianMetricField {
 public:
  HermitianMetricField() = default;
  explicit HermitianMetricField(TensorField t);
  HermitianMetricField(GridPtr grid, int margin);

  static HermitianMetricField from_function(GridPtr grid,
                                            const std::function<CMat(const RealPoint&)>& g);

  const BallGrid& grid() const { return tensor_.grid(); }
  const GridPtr& grid_ptr() const { return tensor_.grid_ptr(); }
  int n() const { return tensor_.grid().n(); }
  int margin() const { return tensor_.margin(); }
  bool valid(std::size_t node) const { return tensor_.valid(node); }

  CMat at(std::size_t node) const;
  void set(std::size_t node, const CMat& g);
  const TensorField& tensor() const { return tensor_; }

  /// Throws std::domain_error naming the first node (valid and in the ball)
  /// whose matrix is not Hermitian positive definite.
  void validate(double hermitian_tol = 1e-10) const;

 private:
  TensorField tensor_;
};

/// Sample-point sets stored as CSV rows of interleaved real/imaginary parts.
std::vector<CVec> read_points_csv(const std::string& path, int n);
void write_points_csv(const std::string& path, std::span<const CVec> points);

/// Field files: a JSON header next to a CSV of values in row-major node order.
void write_field(const std::string& stem, const ScalarField& f);
ScalarField read_field(const std::string& stem);

}  // namespace cma
