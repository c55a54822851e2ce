#include "stencil_solver.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cma::detail {

StencilLayout::StencilLayout(GridPtr g) : grid(std::move(g)) {
  dim = grid->dim();
  for (int a = 0; a < dim; ++a)
    for (int b = a + 1; b < dim; ++b)
      if (a / 2 != b / 2) pairs.emplace_back(a, b);
  ncoef = dim + static_cast<int>(pairs.size());
  nodes = grid->interior_nodes();
  unknown_of.assign(grid->size(), -1);
  for (std::size_t k = 0; k < nodes.size(); ++k) unknown_of[nodes[k]] = static_cast<std::int32_t>(k);
  for (int a = 0; a < dim; ++a) stride.push_back(grid->stride(a));
  inv_h2 = 1.0 / (grid->spacing() * grid->spacing());
}

double StencilLayout::apply_at(const double* c, const double* x, std::size_t node) const {
  const double xc = x[node];
  double acc = 0.0;
  for (int a = 0; a < dim; ++a) {
    const auto s = stride[a];
    acc += c[a] * (x[node + s] - 2.0 * xc + x[node - s]);
  }
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto sa = stride[pairs[p].first];
    const auto sb = stride[pairs[p].second];
    acc += 0.25 * c[dim + p] *
           (x[node + sa + sb] - x[node + sa - sb] - x[node - sa + sb] + x[node - sa - sb]);
  }
  return acc * inv_h2;
}

double StencilLayout::diagonal(const double* c) const {
  double d = 0.0;
  for (int a = 0; a < dim; ++a) d += c[a];
  return -2.0 * d * inv_h2;
}

struct EllipticSolver::Level {
  explicit Level(GridPtr g) : layout(std::move(g)) {}
  StencilLayout layout;
  std::vector<double> coeff;
  std::vector<double> x;  // full grid, zero off the unknowns
  std::vector<double> r;  // full grid, zero off the unknowns
  std::vector<double> b;  // per unknown
  std::vector<std::size_t> fine_node;  // per unknown, matching node one level finer
  std::vector<std::pair<std::ptrdiff_t, double>> weighting;  // full weighting on the finer level
  std::unique_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>>> lu;
};

EllipticSolver::EllipticSolver(GridPtr grid) : EllipticSolver(std::move(grid), Options{}) {}

EllipticSolver::EllipticSolver(GridPtr grid, Options opts) : opts_(opts) {
  levels_.push_back(std::make_unique<Level>(grid));
  auto& top = *levels_.front();
  top.coeff.assign(top.layout.size() * top.layout.ncoef, 0.0);
  scratch_.assign(grid->size(), 0.0);
  if (top.layout.size() <= opts_.direct_limit) return;

  top.x.assign(grid->size(), 0.0);
  top.r.assign(grid->size(), 0.0);
  top.b.assign(top.layout.size(), 0.0);
  GridPtr fine = grid;
  while ((fine->m() - 1) % 2 == 0 && (fine->m() - 1) / 2 + 1 >= opts_.coarsest_m) {
    auto coarse = make_grid(fine->n(), (fine->m() - 1) / 2 + 1, fine->pad());
    auto L = std::make_unique<Level>(coarse);
    if (L->layout.size() == 0) break;
    const int dim = coarse->dim();
    L->fine_node.resize(L->layout.size());
    for (std::size_t k = 0; k < L->layout.size(); ++k) {
      auto idx = coarse->multi_index(L->layout.nodes[k]);
      for (int a = 0; a < dim; ++a) idx[a] = fine->pad() + 2 * (idx[a] - coarse->pad());
      L->fine_node[k] = fine->node(std::span<const int>(idx.data(), dim));
    }
    // tensor product of (1/4, 1/2, 1/4)
    int total = 1;
    for (int a = 0; a < dim; ++a) total *= 3;
    for (int code = 0; code < total; ++code) {
      std::ptrdiff_t off = 0;
      double w = 1.0;
      int c = code;
      for (int a = 0; a < dim; ++a) {
        const int o = c % 3 - 1;
        c /= 3;
        off += o * fine->stride(a);
        w *= o == 0 ? 0.5 : 0.25;
      }
      L->weighting.emplace_back(off, w);
    }
    L->coeff.assign(L->layout.size() * L->layout.ncoef, 0.0);
    L->x.assign(coarse->size(), 0.0);
    L->r.assign(coarse->size(), 0.0);
    L->b.assign(L->layout.size(), 0.0);
    levels_.push_back(std::move(L));
    fine = coarse;
    if (fine->m() <= opts_.coarsest_m) break;
  }
}

EllipticSolver::~EllipticSolver() = default;

const StencilLayout& EllipticSolver::layout() const { return levels_.front()->layout; }

std::span<double> EllipticSolver::coefficients() { return levels_.front()->coeff; }

void EllipticSolver::coefficients_changed() { dirty_ = true; }

void EllipticSolver::factorize(Level& L) {
  const auto& S = L.layout;
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(S.size() * (1 + 2 * S.dim + 4 * S.pairs.size()));
  const auto add = [&](std::size_t row, std::size_t node, double v) {
    const auto col = S.unknown_of[node];
    if (col >= 0) trip.emplace_back(static_cast<int>(row), col, v);
  };
  for (std::size_t k = 0; k < S.size(); ++k) {
    const double* c = &L.coeff[k * S.ncoef];
    const std::size_t node = S.nodes[k];
    trip.emplace_back(static_cast<int>(k), static_cast<int>(k), S.diagonal(c));
    for (int a = 0; a < S.dim; ++a) {
      add(k, node + S.stride[a], c[a] * S.inv_h2);
      add(k, node - S.stride[a], c[a] * S.inv_h2);
    }
    for (std::size_t p = 0; p < S.pairs.size(); ++p) {
      const auto sa = S.stride[S.pairs[p].first];
      const auto sb = S.stride[S.pairs[p].second];
      const double w = 0.25 * c[S.dim + p] * S.inv_h2;
      add(k, node + sa + sb, w);
      add(k, node + sa - sb, -w);
      add(k, node - sa + sb, -w);
      add(k, node - sa - sb, w);
    }
  }
  Eigen::SparseMatrix<double> A(static_cast<int>(S.size()), static_cast<int>(S.size()));
  A.setFromTriplets(trip.begin(), trip.end());
  A.makeCompressed();
  L.lu = std::make_unique<Eigen::SparseLU<Eigen::SparseMatrix<double>>>();
  L.lu->compute(A);
  if (L.lu->info() != Eigen::Success) throw std::runtime_error("sparse LU factorisation failed");
}

void EllipticSolver::prepare() {
  for (std::size_t l = 1; l < levels_.size(); ++l) {
    auto& C = *levels_[l];
    const auto& F = *levels_[l - 1];
    const int nc = C.layout.ncoef;
    for (std::size_t k = 0; k < C.layout.size(); ++k) {
      const auto fu = F.layout.unknown_of[C.fine_node[k]];
      if (fu < 0) throw std::logic_error("coarse interior node is not interior on the finer grid");
      std::copy_n(&F.coeff[fu * nc], nc, &C.coeff[k * nc]);
    }
  }
  factorize(*levels_.back());
  dirty_ = false;
}

void EllipticSolver::apply(std::span<const double> x, std::span<double> y) {
  const auto& S = layout();
  const auto& coeff = levels_.front()->coeff;
  for (std::size_t k = 0; k < S.size(); ++k) scratch_[S.nodes[k]] = x[k];
  for (std::size_t k = 0; k < S.size(); ++k)
    y[k] = S.apply_at(&coeff[k * S.ncoef], scratch_.data(), S.nodes[k]);
}

void EllipticSolver::smooth(Level& L, std::span<const double> b, bool forward) {
  const auto& S = L.layout;
  const std::size_t N = S.size();
  for (std::size_t i = 0; i < N; ++i) {
    const std::size_t k = forward ? i : N - 1 - i;
    const double* c = &L.coeff[k * S.ncoef];
    const std::size_t node = S.nodes[k];
    L.x[node] += (b[k] - S.apply_at(c, L.x.data(), node)) / S.diagonal(c);
  }
}

void EllipticSolver::vcycle(std::size_t l) {
  auto& L = *levels_[l];
  const auto& S = L.layout;
  if (l + 1 == levels_.size()) {
    const Eigen::Map<const Eigen::VectorXd> rhs(L.b.data(), static_cast<int>(L.b.size()));
    const Eigen::VectorXd sol = L.lu->solve(rhs);
    for (std::size_t k = 0; k < S.size(); ++k) L.x[S.nodes[k]] = sol[static_cast<int>(k)];
    return;
  }
  for (std::size_t node : S.nodes) L.x[node] = 0.0;
  for (int s = 0; s < opts_.smoothing; ++s) smooth(L, L.b, true);
  for (std::size_t k = 0; k < S.size(); ++k)
    L.r[S.nodes[k]] = L.b[k] - S.apply_at(&L.coeff[k * S.ncoef], L.x.data(), S.nodes[k]);

  auto& C = *levels_[l + 1];
  for (std::size_t k = 0; k < C.layout.size(); ++k) {
    const std::size_t f = C.fine_node[k];
    double acc = 0.0;
    for (const auto& [off, w] : C.weighting) acc += w * L.r[f + off];
    C.b[k] = acc;
  }
  vcycle(l + 1);

  const auto& fg = *S.grid;
  const auto& cg = *C.layout.grid;
  const int dim = S.dim;
  const int pad = fg.pad();
  for (std::size_t node : S.nodes) {
    const auto idx = fg.multi_index(node);
    std::array<int, kMaxDim> lo{};
    std::array<bool, kMaxDim> odd{};
    for (int a = 0; a < dim; ++a) {
      const int t = idx[a] - pad;
      odd[a] = t % 2 != 0;
      lo[a] = t / 2 + cg.pad();
    }
    double acc = 0.0;
    for (int mask = 0; mask < (1 << dim); ++mask) {
      double w = 1.0;
      std::size_t cn = 0;
      bool skip = false;
      for (int a = 0; a < dim; ++a) {
        const bool up = (mask >> a) & 1;
        if (up && !odd[a]) {
          skip = true;
          break;
        }
        if (odd[a]) w *= 0.5;
        cn += static_cast<std::size_t>(lo[a] + (up ? 1 : 0)) * cg.stride(a);
      }
      if (!skip) acc += w * C.x[cn];
    }
    L.x[node] += acc;
  }
  for (int s = 0; s < opts_.smoothing; ++s) smooth(L, L.b, false);
}

LinearStats EllipticSolver::solve(std::span<const double> b, std::span<double> x, double rel_tol) {
  if (dirty_) prepare();
  const std::size_t N = size();
  LinearStats stats;
  if (levels_.size() == 1) {
    const Eigen::Map<const Eigen::VectorXd> rhs(b.data(), static_cast<int>(N));
    Eigen::Map<Eigen::VectorXd>(x.data(), static_cast<int>(N)) = levels_.front()->lu->solve(rhs);
    stats.iterations = 1;
    stats.converged = true;
    return stats;
  }

  using Vec = Eigen::VectorXd;
  const int n = static_cast<int>(N);
  const Eigen::Map<const Vec> bv(b.data(), n);
  Eigen::Map<Vec> xv(x.data(), n);
  auto& top = *levels_.front();
  const auto precondition = [&](const Vec& in, Vec& out) {
    std::copy(in.data(), in.data() + n, top.b.begin());
    vcycle(0);
    for (int k = 0; k < n; ++k) out[k] = top.x[top.layout.nodes[k]];
  };
  const auto A = [&](const Vec& in, Vec& out) {
    apply(std::span<const double>(in.data(), N), std::span<double>(out.data(), N));
  };

  const double bnorm = bv.norm();
  xv.setZero();
  if (bnorm == 0.0) {
    stats.converged = true;
    return stats;
  }
  Vec r = bv, rhat = bv, p = Vec::Zero(n), v = Vec::Zero(n), s(n), t(n), ph(n), sh(n);
  double rho = 1.0, alpha = 1.0, omega = 1.0;
  for (int it = 1; it <= opts_.max_iterations; ++it) {
    stats.iterations = it;
    const double rho_new = rhat.dot(r);
    if (rho_new == 0.0) break;
    const double beta = (rho_new / rho) * (alpha / omega);
    p = r + beta * (p - omega * v);
    precondition(p, ph);
    A(ph, v);
    alpha = rho_new / rhat.dot(v);
    s = r - alpha * v;
    if (s.norm() <= rel_tol * bnorm) {
      xv += alpha * ph;
      stats.relative_residual = s.norm() / bnorm;
      stats.converged = true;
      return stats;
    }
    precondition(s, sh);
    A(sh, t);
    omega = t.dot(s) / t.dot(t);
    xv += alpha * ph + omega * sh;
    r = s - omega * t;
    stats.relative_residual = r.norm() / bnorm;
    if (stats.relative_residual <= rel_tol) {
      stats.converged = true;
      return stats;
    }
    rho = rho_new;
  }
  return stats;
}

}  // namespace cma::detail
