#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "cma/grid.hpp"

namespace cma::detail {

/// Non-divergence second-order operator
///   (A x)(z) = sum_a c_a D_aa x + sum_p m_p D_{a_p b_p} x
/// on the interior nodes of a grid, with homogeneous Dirichlet data on every
/// other node. D are the centred differences of the complex Hessian stencil;
/// mixed pairs only couple different complex coordinates.
struct StencilLayout {
  explicit StencilLayout(GridPtr grid);

  GridPtr grid;
  int dim = 0;
  std::vector<std::pair<int, int>> pairs;
  int ncoef = 0;  // dim + pairs.size()
  std::vector<std::size_t> nodes;         // unknown -> node
  std::vector<std::int32_t> unknown_of;   // node -> unknown, -1 if pinned
  std::vector<std::ptrdiff_t> stride;
  double inv_h2 = 0.0;

  std::size_t size() const { return nodes.size(); }

  /// Operator applied at one node of a full-grid array.
  double apply_at(const double* c, const double* x, std::size_t node) const;
  double diagonal(const double* c) const;
};

struct LinearStats {
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
};

/// Solves A x = b for the operator above. Small systems use a sparse LU;
/// larger ones use BiCGSTAB preconditioned by a geometric multigrid V-cycle
/// (Gauss-Seidel smoothing, full-weighting restriction, multilinear
/// prolongation, injected coefficients, sparse LU on the coarsest level).
class EllipticSolver {
 public:
  struct Options {
    std::size_t direct_limit = 4000;
    int smoothing = 2;
    int max_iterations = 300;
    int coarsest_m = 9;
  };

  explicit EllipticSolver(GridPtr grid);
  EllipticSolver(GridPtr grid, Options opts);
  ~EllipticSolver();
  EllipticSolver(const EllipticSolver&) = delete;
  EllipticSolver& operator=(const EllipticSolver&) = delete;

  const StencilLayout& layout() const;
  std::size_t size() const { return layout().size(); }

  /// Coefficients, ncoef per unknown; must be set before solve().
  std::span<double> coefficients();
  void coefficients_changed();

  void apply(std::span<const double> x, std::span<double> y);
  LinearStats solve(std::span<const double> b, std::span<double> x, double rel_tol);

 private:
  struct Level;
  void prepare();
  void vcycle(std::size_t level);
  void smooth(Level& L, std::span<const double> b, bool forward);
  void factorize(Level& L);

  Options opts_;
  std::vector<std::unique_ptr<Level>> levels_;
  std::vector<double> scratch_;
  bool dirty_ = true;
};

}  // namespace cma::detail
