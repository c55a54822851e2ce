#include "cma/ma_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "stencil_solver.hpp"

namespace cma {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// g packed per unknown: n = 1 -> (g11); n = 2 -> (g11, g22, re g12, im g12).
int packed_size(int n) { return n == 1 ? 1 : 4; }

void pack(const CMat& g, double* out) {
  out[0] = g(0, 0).real();
  if (g.rows() == 1) return;
  out[1] = g(1, 1).real();
  out[2] = g(0, 1).real();
  out[3] = g(0, 1).imag();
}

CMat unpack(const double* in, int n) {
  CMat g(n, n);
  g(0, 0) = in[0];
  if (n == 1) return g;
  g(1, 1) = in[1];
  g(0, 1) = cd(in[2], in[3]);
  g(1, 0) = cd(in[2], -in[3]);
  return g;
}

double hermitian_det(const CMat& a) {
  if (a.rows() == 1) return a(0, 0).real();
  return a(0, 0).real() * a(1, 1).real() - std::norm(a(0, 1));
}

// Coefficients of tr(B Hess x) on the real second differences, in the layout
// of StencilLayout (axial first, then mixed pairs across complex coordinates).
void linearised_coefficients(const CMat& B, const detail::StencilLayout& S, double* c) {
  const int n = static_cast<int>(B.rows());
  for (int i = 0; i < n; ++i) {
    c[2 * i] = 0.25 * B(i, i).real();
    c[2 * i + 1] = 0.25 * B(i, i).real();
  }
  for (std::size_t p = 0; p < S.pairs.size(); ++p) {
    const auto [a, b] = S.pairs[p];
    const int i = a / 2, j = b / 2;
    const bool ya = a % 2, yb = b % 2;
    const cd Bij = B(i, j);
    double m;
    if (ya == yb) m = 0.5 * Bij.real();  // x_i x_j or y_i y_j
    else if (!ya) m = 0.5 * Bij.imag();  // x_i y_j
    else m = -0.5 * Bij.imag();          // y_i x_j
    c[S.dim + p] = m;
  }
}

class Newton {
 public:
  Newton(const DirichletProblem& p, const SolverOptions& opts)
      : p_(p),
        opts_(opts),
        grid_(*p.grid),
        n_(p.grid->n()),
        lin_(p.grid, detail::EllipticSolver::Options{opts.direct_limit, 2, 300, 9}),
        S_(lin_.layout()) {
    const std::size_t N = S_.size();
    if (N == 0) throw std::invalid_argument("grid has no interior nodes");
    const int ps = packed_size(n_);
    gpack_.resize(N * ps);
    detg_.resize(N);
    rho_.resize(N);
    for (std::size_t k = 0; k < N; ++k) {
      const RealPoint x = grid_.point(S_.nodes[k]);
      const CMat g = p.omega(x);
      if (!(min_eigenvalue(g) > 0.0)) {
        std::ostringstream os;
        os << "reference metric not positive definite at node " << S_.nodes[k];
        throw std::domain_error(os.str());
      }
      pack(g, &gpack_[k * ps]);
      detg_[k] = hermitian_det(g);
      rho_[k] = p.density(x);
      if (!(rho_[k] > 0.0)) {
        std::ostringstream os;
        os << "density must be positive on interior nodes (node " << S_.nodes[k] << ", rho = " << rho_[k]
           << "); use solve_degenerate for rho >= 0";
        throw std::invalid_argument(os.str());
      }
    }
  }

  CMat g(std::size_t k) const { return unpack(&gpack_[k * packed_size(n_)], n_); }

  void log(const std::string& s) const {
    if (opts_.log) *opts_.log << s << '\n';
  }

  // Harmonic extension of band data: x = data on pinned nodes, A x = 0 inside.
  std::vector<double> harmonic(const std::vector<double>& data) {
    const std::size_t N = S_.size();
    auto c = lin_.coefficients();
    for (std::size_t k = 0; k < N; ++k) linearised_coefficients(CMat::Identity(n_, n_), S_, &c[k * S_.ncoef]);
    lin_.coefficients_changed();
    std::vector<double> rhs(N), d(N);
    for (std::size_t k = 0; k < N; ++k) rhs[k] = -S_.apply_at(&c[k * S_.ncoef], data.data(), S_.nodes[k]);
    lin_.solve(rhs, d, 1e-10);
    std::vector<double> out = data;
    for (std::size_t k = 0; k < N; ++k) out[S_.nodes[k]] += d[k];
    return out;
  }

  // Max residual and least eigenvalue for rho_t; returns false if any node
  // falls below the positivity floor.
  bool evaluate(const std::vector<double>& u, double t, std::vector<double>* F, double& norm,
                double& min_eig) const {
    norm = 0.0;
    min_eig = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < S_.size(); ++k) {
      const CMat A = g(k) + complex_hessian_at(grid_, u, S_.nodes[k]);
      const double le = min_eigenvalue(A);
      min_eig = std::min(min_eig, le);
      if (!(le >= opts_.min_eig_floor)) return false;
      const double rt = (1.0 - t) * rho0_[k] + t * rho_[k];
      const double r = std::log(hermitian_det(A)) - std::log(rt * detg_[k]);
      if (F) (*F)[k] = r;
      norm = std::max(norm, std::abs(r));
    }
    return true;
  }

  bool stage(std::vector<double>& u, double t, double tol, SolutionField& out) {
    const std::size_t N = S_.size();
    std::vector<double> F(N), delta(N), trial;
    double norm = 0.0, min_eig = 0.0;
    if (!evaluate(u, t, &F, norm, min_eig)) return false;
    for (int it = 0; it < opts_.max_newton; ++it) {
      out.residual_history.push_back(norm);
      if (norm <= tol) return true;
      auto c = lin_.coefficients();
      for (std::size_t k = 0; k < N; ++k) {
        const CMat A = g(k) + complex_hessian_at(grid_, u, S_.nodes[k]);
        linearised_coefficients(A.inverse(), S_, &c[k * S_.ncoef]);
      }
      lin_.coefficients_changed();
      for (std::size_t k = 0; k < N; ++k) F[k] = -F[k];
      const double eta = std::clamp(norm, 1e-12, 1e-2);
      const auto stats = lin_.solve(F, delta, eta);
      ++out.iterations;

      double alpha = 1.0;
      bool accepted = false;
      for (int bt = 0; bt <= opts_.max_backtracks; ++bt, alpha *= 0.5) {
        trial = u;
        for (std::size_t k = 0; k < N; ++k) trial[S_.nodes[k]] += alpha * delta[k];
        double tn = 0.0, te = 0.0;
        if (!evaluate(trial, t, nullptr, tn, te)) continue;
        if (tn <= (1.0 - opts_.sufficient_decrease * alpha) * norm) {
          accepted = true;
          break;
        }
      }
      {
        std::ostringstream os;
        os << "  t=" << t << " it=" << it << " |F|=" << norm << " lin_it=" << stats.iterations
           << " lin_res=" << stats.relative_residual << " step=" << (accepted ? alpha : 0.0);
        log(os.str());
      }
      if (!accepted) return false;
      u.swap(trial);
      if (!evaluate(u, t, &F, norm, min_eig)) return false;
    }
    out.residual_history.push_back(norm);
    return norm <= tol;
  }

  double least_eigenvalue(const std::vector<double>& u) const {
    double le = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < S_.size(); ++k)
      le = std::min(le, min_eigenvalue(g(k) + complex_hessian_at(grid_, u, S_.nodes[k])));
    return le;
  }

  // u0 = H(phi - c|z|^2) + c|z|^2 with H the harmonic extension; c is raised
  // until g + Hess u0 is safely positive.
  void harmonic_guess(const std::vector<double>& phi, std::vector<double>& u) {
    const std::size_t N = S_.size();
    std::vector<double> r2(grid_.size());
    for (std::size_t node = 0; node < grid_.size(); ++node) r2[node] = grid_.complex_point(node).squaredNorm();
    const auto w0 = harmonic(phi);
    const auto w1 = harmonic(r2);
    double gmin = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < N; ++k) gmin = std::min(gmin, min_eigenvalue(g(k)));
    double c = 0.0;
    for (int attempt = 0;; ++attempt) {
      for (std::size_t k = 0; k < N; ++k) {
        const auto node = S_.nodes[k];
        u[node] = w0[node] - c * w1[node] + c * r2[node];
      }
      if (least_eigenvalue(u) >= 0.1 * gmin) break;
      if (attempt > 60) throw std::runtime_error("could not find a positive initial guess");
      c = c == 0.0 ? 0.05 : 2.0 * c;
    }
    std::ostringstream os;
    os << "harmonic initial guess, c=" << c << ", unknowns=" << N;
    log(os.str());
  }

  // Nested iteration: solve on the grid with half the resolution and
  // interpolate the interior correction u - phi.
  bool coarse_guess(const std::vector<double>& phi, std::vector<double>& u) {
    if (S_.size() <= opts_.direct_limit || (grid_.m() - 1) % 2 != 0 || grid_.m() < 17) return false;
    DirichletProblem coarse = p_;
    coarse.grid = make_grid(grid_.n(), (grid_.m() - 1) / 2 + 1, grid_.pad());
    const SolutionField cs = Newton(coarse, opts_).run();
    if (!cs.converged) return false;
    ScalarField d(coarse.grid, 0, 0.0);
    for (std::size_t node : coarse.grid->interior_nodes())
      d[node] = cs.u[node] - coarse.boundary(coarse.grid->point(node));
    std::vector<double> trial = phi;
    for (std::size_t node : S_.nodes) trial[node] += d.interpolate_cubic(grid_.point(node));
    if (!(least_eigenvalue(trial) >= opts_.min_eig_floor)) return false;
    u.swap(trial);
    std::ostringstream os;
    os << "coarse-grid initial guess from m=" << coarse.grid->m() << ", unknowns=" << S_.size();
    log(os.str());
    return true;
  }

  SolutionField run() {
    const std::size_t N = S_.size();
    SolutionField out;
    std::vector<double> phi(grid_.size());
    for (std::size_t node = 0; node < grid_.size(); ++node) phi[node] = p_.boundary(grid_.point(node));

    std::vector<double> u = phi;
    if (!coarse_guess(phi, u)) harmonic_guess(phi, u);
    rho0_.resize(N);
    for (std::size_t k = 0; k < N; ++k)
      rho0_[k] = hermitian_det(g(k) + complex_hessian_at(grid_, u, S_.nodes[k])) / detg_[k];

    double t = 0.0, dt = 1.0;
    int refinements = 0;
    while (t < 1.0) {
      const double target = std::min(1.0, t + dt);
      const double stage_tol = target >= 1.0 ? opts_.tol : std::max(opts_.tol, 1e-6);
      std::vector<double> work = u;
      if (stage(work, target, stage_tol, out)) {
        u.swap(work);
        t = target;
        ++out.continuation_stages;
        dt = std::min(1.0, 2.0 * dt);
      } else {
        if (++refinements > opts_.max_refinements) {
          out.message = "Newton failed after " + std::to_string(refinements - 1) +
                        " continuation refinements at t=" + std::to_string(t);
          break;
        }
        dt *= 0.5;
        std::ostringstream os;
        os << "stage to t=" << target << " failed, dt=" << dt;
        log(os.str());
      }
    }

    out.u = ScalarField(p_.grid, 0);
    std::copy(u.begin(), u.end(), out.u.values().begin());
    out.min_eig = ScalarField(p_.grid, 0, kNaN);
    out.min_eig_interior = std::numeric_limits<double>::infinity();
    double norm = 0.0;
    for (std::size_t k = 0; k < N; ++k) {
      const auto node = S_.nodes[k];
      const CMat A = g(k) + complex_hessian_at(grid_, u, node);
      const double le = min_eigenvalue(A);
      out.min_eig[node] = le;
      out.min_eig_interior = std::min(out.min_eig_interior, le);
      const double r = le > 0.0 ? std::log(hermitian_det(A)) - std::log(rho_[k] * detg_[k])
                                : std::numeric_limits<double>::infinity();
      norm = std::max(norm, std::abs(r));
    }
    out.residual_norm = norm;
    out.converged = t >= 1.0 && norm <= opts_.tol && out.min_eig_interior > 0.0;
    if (out.converged) out.message = "converged";
    else if (out.message.empty()) out.message = "residual above tolerance";
    return out;
  }

 private:
  const DirichletProblem& p_;
  SolverOptions opts_;
  const BallGrid& grid_;
  int n_;
  detail::EllipticSolver lin_;
  const detail::StencilLayout& S_;
  std::vector<double> gpack_, detg_, rho_, rho0_;
};

}  // namespace

HermitianMetricField DirichletProblem::omega_field() const {
  return HermitianMetricField::from_function(grid, omega);
}

ScalarField DirichletProblem::density_field() const {
  return ScalarField::from_function(grid, density);
}

ScalarField DirichletProblem::boundary_field() const {
  return ScalarField::from_function(grid, boundary);
}

DirichletProblem make_problem(GridPtr grid, MetricFunction omega, ScalarFunction density,
                              ScalarFunction boundary, DensityConvention convention) {
  DirichletProblem p;
  p.grid = std::move(grid);
  p.omega = std::move(omega);
  p.boundary = std::move(boundary);
  p.convention = convention;
  if (convention == DensityConvention::ExpF)
    p.density = [f = std::move(density)](const RealPoint& x) { return std::exp(f(x)); };
  else
    p.density = std::move(density);
  return p;
}

ResidualReport residual(const ScalarField& u, const DirichletProblem& p) {
  const auto& g = *p.grid;
  if (!u.grid().same_as(g)) throw std::invalid_argument("u and problem live on different grids");
  ResidualReport rep;
  rep.r = ScalarField(p.grid, 0, kNaN);
  for (std::size_t node : g.interior_nodes()) {
    const RealPoint x = g.point(node);
    const CMat G = p.omega(x);
    const CMat A = G + complex_hessian_at(g, u.values(), node);
    if (!(min_eigenvalue(A) > 0.0)) {
      rep.infeasible.push_back(node);
      continue;
    }
    const double r = std::log(hermitian_det(A)) - std::log(p.density(x) * hermitian_det(G));
    rep.r[node] = r;
    rep.max_abs = std::max(rep.max_abs, std::abs(r));
  }
  return rep;
}

SolutionField solve(const DirichletProblem& p, const SolverOptions& opts) {
  Newton newton(p, opts);
  return newton.run();
}

DegenerateSolution solve_degenerate(const DirichletProblem& p, std::vector<double> deltas,
                                    const SolverOptions& opts) {
  DegenerateSolution out;
  out.deltas = deltas;
  for (double d : deltas) {
    DirichletProblem q = p;
    q.density = [rho = p.density, d](const RealPoint& x) { return std::max(rho(x), 0.0) + d; };
    out.solutions.push_back(solve(q, opts));
    if (out.solutions.size() > 1) {
      const auto& a = out.solutions[out.solutions.size() - 2].u;
      const auto& b = out.solutions.back().u;
      double diff = 0.0;
      for (std::size_t node = 0; node < p.grid->size(); ++node)
        if (p.grid->in_ball(node)) diff = std::max(diff, std::abs(a[node] - b[node]));
      out.cauchy.push_back(diff);
    }
  }
  return out;
}

std::string to_string(ComparisonOutcome o) {
  switch (o) {
    case ComparisonOutcome::Pass: return "pass";
    case ComparisonOutcome::ConclusionFailed: return "conclusion-failed";
    case ComparisonOutcome::HypothesesNotMet: return "hypotheses-not-met";
  }
  return "?";
}

namespace {

template <class MetricAt>
ComparisonReport compare_on(const ScalarField& u, const ScalarField& v, std::span<const std::size_t> domain,
                            std::span<const std::size_t> boundary, const MetricAt& metric, double slack_c) {
  const auto& g = u.grid();
  ComparisonReport rep;
  rep.slack = slack_c * g.spacing() * g.spacing();
  rep.boundary_excess = -std::numeric_limits<double>::infinity();
  rep.operator_deficit = -std::numeric_limits<double>::infinity();
  rep.interior_excess = -std::numeric_limits<double>::infinity();
  rep.min_eig_v = std::numeric_limits<double>::infinity();
  // NaN comparisons fail the hypotheses through the negated tests below
  for (std::size_t node : boundary) {
    const double e = v[node] - u[node];
    rep.boundary_excess = std::isnan(e) ? e : std::max(rep.boundary_excess, e);
    if (std::isnan(e)) break;
  }
  for (std::size_t node : domain) {
    const CMat G = metric(node);
    const CMat Au = G + complex_hessian_at(g, u.values(), node);
    const CMat Av = G + complex_hessian_at(g, v.values(), node);
    const double le = min_eigenvalue(Av);
    rep.min_eig_v = std::min(rep.min_eig_v, le);
    const double Fu = min_eigenvalue(Au) > 0.0 ? det_root(Au) : 0.0;
    const double Fv = le > 0.0 ? det_root(Av) : 0.0;
    rep.operator_deficit = std::max(rep.operator_deficit, Fu - Fv);
    rep.interior_excess = std::max(rep.interior_excess, v[node] - u[node]);
  }
  if (!(rep.boundary_excess <= rep.slack)) rep.failed_hypotheses.push_back("v <= u on the boundary band");
  if (!(rep.operator_deficit <= rep.slack))
    rep.failed_hypotheses.push_back("F(g + Hess v) >= F(g + Hess u) on the interior");
  if (!(rep.min_eig_v > 0.0)) rep.failed_hypotheses.push_back("g + Hess v positive on the interior");
  if (!rep.failed_hypotheses.empty()) rep.outcome = ComparisonOutcome::HypothesesNotMet;
  else if (!(rep.interior_excess <= rep.slack)) rep.outcome = ComparisonOutcome::ConclusionFailed;
  else rep.outcome = ComparisonOutcome::Pass;
  return rep;
}

}  // namespace

ComparisonReport comparison_check(const ScalarField& u, const ScalarField& v,
                                  const HermitianMetricField& omega, double slack_c) {
  const auto& g = u.grid();
  if (!g.same_as(v.grid()) || !g.same_as(omega.grid()))
    throw std::invalid_argument("comparison_check: fields live on different grids");
  return compare_on(u, v, g.interior_nodes(), g.band_nodes(), [&](std::size_t node) { return omega.at(node); },
                    slack_c);
}

ComparisonReport comparison_check(const ScalarField& u, const ScalarField& v, const MetricFunction& omega,
                                  std::span<const std::size_t> domain, double slack_c) {
  const auto& g = u.grid();
  if (!g.same_as(v.grid())) throw std::invalid_argument("comparison_check: fields live on different grids");
  std::vector<std::uint8_t> inside(g.size(), 0);
  for (std::size_t node : domain) {
    if (!g.is_interior(node)) throw std::invalid_argument("comparison_check: domain node without a full stencil");
    inside[node] = 1;
  }
  std::vector<std::size_t> boundary;
  const auto stencil = hessian_stencil(g.n());
  for (std::size_t node : domain)
    for (const auto& off : stencil) {
      std::ptrdiff_t nb = static_cast<std::ptrdiff_t>(node);
      for (int a = 0; a < g.dim(); ++a) nb += off[a] * g.stride(a);
      if (!inside[nb]) {
        inside[nb] = 2;
        boundary.push_back(static_cast<std::size_t>(nb));
      }
    }
  return compare_on(u, v, domain, boundary, [&](std::size_t node) { return omega(g.point(node)); }, slack_c);
}

}  // namespace cma
