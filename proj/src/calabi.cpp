#include "cma/calabi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace cma {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
const cd kNaNc{kNaN, kNaN};

bool in_region(const BallGrid& g, std::size_t node, double radius) {
  return g.in_ball(node) && g.complex_point(node).norm() <= radius + 1e-12;
}

bool finite(const CMat& a) { return a.allFinite(); }

CMat block(std::span<const cd> v, int n) {
  CMat m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = v[i * n + j];
  return m;
}

// (i, j) block of a rank-3 tensor for a fixed last index m.
CMat block_last(std::span<const cd> v, int m, int n) {
  CMat out(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) out(i, j) = v[(i * n + j) * n + m];
  return out;
}

// theta_m as a matrix M(beta, gamma) = theta^gamma_{m beta}.
CMat connection_matrix(std::span<const cd> th, int m, int n) {
  CMat out(n, n);
  for (int b = 0; b < n; ++b)
    for (int g = 0; g < n; ++g) out(b, g) = th[(g * n + m) * n + b];
  return out;
}

void require_same_grid(const BallGrid& a, const BallGrid& b) {
  if (!a.same_as(b)) throw std::invalid_argument("fields live on different grids");
}

[[noreturn]] void throw_at(const char* what, std::size_t node) {
  std::ostringstream os;
  os << what << " at node " << node;
  throw std::domain_error(os.str());
}

double max_abs_finite(const TensorField& t, double radius) {
  const auto& g = t.grid();
  double best = 0.0;
  for (std::size_t node = 0; node < g.size(); ++node) {
    if (!t.valid(node) || !in_region(g, node, radius)) continue;
    for (const cd& c : t.at(node))
      if (std::isfinite(c.real()) && std::isfinite(c.imag())) best = std::max(best, std::abs(c));
  }
  return best;
}

double max_finite(const ScalarField& f, double radius) {
  const auto& g = f.grid();
  double best = 0.0;
  for (std::size_t node = 0; node < g.size(); ++node) {
    if (!f.valid(node) || !in_region(g, node, radius)) continue;
    if (std::isfinite(f[node])) best = std::max(best, std::abs(f[node]));
  }
  return best;
}

ScalarField full_norm_squared(const TensorField& t, const TensorField& theta,
                              const HermitianMetricField& g) {
  const ScalarField a = tensor_norm_squared(covariant_derivative(t, theta, Direction::Holomorphic), g);
  const ScalarField b =
      tensor_norm_squared(covariant_derivative(t, theta, Direction::Antiholomorphic), g);
  ScalarField out(a.grid_ptr(), std::max(a.margin(), b.margin()));
  for (std::size_t node = 0; node < out.grid().size(); ++node)
    if (out.valid(node)) out[node] = a[node] + b[node];
  return out;
}

double max_root(const ScalarField& sq, double radius) { return std::sqrt(max_finite(sq, radius)); }

}  // namespace

EndomorphismField::EndomorphismField(const HermitianMetricField& g, const HermitianMetricField& gt)
    : h_(g.grid_ptr(), {Index::Down, Index::Up}, std::max(g.margin(), gt.margin())) {
  require_same_grid(g.grid(), gt.grid());
  const int n = g.n();
  for (std::size_t node = 0; node < g.grid().size(); ++node) {
    auto v = h_.at(node);
    const CMat G = g.at(node);
    const CMat Gt = gt.at(node);
    if (!h_.valid(node) || !finite(G) || !finite(Gt)) {
      std::fill(v.begin(), v.end(), kNaNc);
      continue;
    }
    const CMat H = Gt * G.inverse();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) v[i * n + j] = H(i, j);
  }
}

CMat EndomorphismField::at(std::size_t node) const { return block(h_.at(node), h_.grid().n()); }

double EndomorphismField::reconstruction_error(const HermitianMetricField& g,
                                               const HermitianMetricField& gt) const {
  const auto& grid = h_.grid();
  double err = 0.0;
  for (std::size_t node = 0; node < grid.size(); ++node) {
    if (!h_.valid(node) || !grid.in_ball(node)) continue;
    const CMat H = at(node);
    if (!finite(H)) continue;
    err = std::max(err, (H * g.at(node) - gt.at(node)).cwiseAbs().maxCoeff());
  }
  return err;
}

double EndomorphismField::min_eigenvalue() const {
  const auto& grid = h_.grid();
  double lo = std::numeric_limits<double>::infinity();
  for (std::size_t node = 0; node < grid.size(); ++node) {
    if (!h_.valid(node) || !grid.in_ball(node)) continue;
    const CMat H = at(node);
    if (!finite(H)) continue;
    const Eigen::ComplexEigenSolver<CMat> es(H, false);
    for (int k = 0; k < H.rows(); ++k) lo = std::min(lo, es.eigenvalues()(k).real());
  }
  return lo;
}

double EndomorphismField::max_imag_eigenvalue() const {
  const auto& grid = h_.grid();
  double hi = 0.0;
  for (std::size_t node = 0; node < grid.size(); ++node) {
    if (!h_.valid(node) || !grid.in_ball(node)) continue;
    const CMat H = at(node);
    if (!finite(H)) continue;
    const Eigen::ComplexEigenSolver<CMat> es(H, false);
    for (int k = 0; k < H.rows(); ++k) hi = std::max(hi, std::abs(es.eigenvalues()(k).imag()));
  }
  return hi;
}

double equivalence_lambda(const HermitianMetricField& g, const HermitianMetricField& gt,
                          double radius) {
  require_same_grid(g.grid(), gt.grid());
  const auto& grid = g.grid();
  double lambda = 1.0;
  for (std::size_t node = 0; node < grid.size(); ++node) {
    if (!g.valid(node) || !gt.valid(node) || !in_region(grid, node, radius)) continue;
    const CMat G = g.at(node);
    const CMat Gt = gt.at(node);
    const Eigen::LLT<CMat> llt(G);
    if (llt.info() != Eigen::Success) throw_at("singular or indefinite metric g", node);
    // L^{-1} gt L^{-*} has the eigenvalues of g^{-1} gt
    const CMat Linv = CMat(llt.matrixL()).inverse();
    const CMat M = Linv * Gt * Linv.adjoint();
    const Eigen::SelfAdjointEigenSolver<CMat> es(M, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues()(0);
    const double hi = es.eigenvalues()(M.rows() - 1);
    if (!(lo > 0.0)) throw_at("singular or indefinite metric gt", node);
    lambda = std::max({lambda, hi, 1.0 / lo});
  }
  return lambda;
}

double CalabiS::max_relative_deviation(double radius) const {
  const auto& grid = direct.grid();
  const ScalarField* f[3] = {&direct, &grad, &conn};
  double scale = 0.0;
  double diff = 0.0;
  for (std::size_t node = 0; node < grid.size(); ++node) {
    if (!in_region(grid, node, radius)) continue;
    if (!direct.valid(node) || !grad.valid(node) || !conn.valid(node)) continue;
    for (int a = 0; a < 3; ++a) {
      scale = std::max(scale, std::abs((*f[a])[node]));
      for (int b = a + 1; b < 3; ++b) diff = std::max(diff, std::abs((*f[a])[node] - (*f[b])[node]));
    }
  }
  return scale > 0.0 ? diff / scale : diff;
}

CalabiS calabi_S(const HermitianMetricField& g, const ScalarField& phi, double radius) {
  require_same_grid(g.grid(), phi.grid());
  CalabiS out;
  out.gt = add_hessian(g, complex_hessian(phi));
  const auto& grid = g.grid();
  for (std::size_t node = 0; node < grid.size(); ++node) {
    if (!out.gt.valid(node) || !in_region(grid, node, radius)) continue;
    const CMat Gt = out.gt.at(node);
    if (!finite(Gt) || !(min_eigenvalue(Gt) > 0.0)) throw_at("g + ddbar phi is not positive", node);
  }
  const TensorField theta = chern_connection(g);
  const TensorField theta_t = chern_connection(out.gt);

  // phi_{j kbar m}: d_j, then dbar_k (no connection on a (1,0) slot), then nabla_m
  const TensorField d1 = covariant_derivative(as_tensor(phi), theta, Direction::Holomorphic);
  const TensorField d2 = covariant_derivative(d1, theta, Direction::Antiholomorphic);
  const TensorField d3 = covariant_derivative(d2, theta, Direction::Holomorphic);
  out.direct = tensor_norm_squared(d3, out.gt);

  out.grad = tensor_norm_squared(covariant_derivative(out.gt.tensor(), theta, Direction::Holomorphic),
                                 out.gt);
  out.conn = tensor_norm_squared(subtract(theta_t, theta), out.gt);
  return out;
}

ConnectionIdentities connection_identities(const HermitianMetricField& g,
                                           const HermitianMetricField& gt, double radius) {
  require_same_grid(g.grid(), gt.grid());
  const int n = g.n();
  const EndomorphismField h(g, gt);
  const TensorField theta = chern_connection(g);
  const TensorField theta_t = chern_connection(gt);
  const TensorField Dh = covariant_derivative(h.tensor(), theta, Direction::Holomorphic);
  const TensorField Dth = covariant_derivative(h.tensor(), theta_t, Direction::Holomorphic);
  const int margin = std::max(Dh.margin(), Dth.margin());
  const auto& grid = g.grid();
  ConnectionIdentities out;
  for (std::size_t node = 0; node < grid.size(); ++node) {
    if (grid.depth(node) < margin || !in_region(grid, node, radius)) continue;
    const CMat H = h.at(node);
    if (!finite(H)) continue;
    const CMat Hinv = H.inverse();
    for (int m = 0; m < n; ++m) {
      const CMat diff = connection_matrix(theta_t.at(node), m, n) - connection_matrix(theta.at(node), m, n);
      const CMat D = block_last(Dh.at(node), m, n);
      const CMat Dt = block_last(Dth.at(node), m, n);
      if (!finite(diff) || !finite(D) || !finite(Dt)) continue;
      out.scale = std::max(out.scale, diff.cwiseAbs().maxCoeff());
      out.theta_difference = std::max(out.theta_difference, (diff - D * Hinv).cwiseAbs().maxCoeff());
      out.conjugate_relation =
          std::max(out.conjugate_relation, (Dt - H * D * Hinv).cwiseAbs().maxCoeff());
    }
  }
  return out;
}

EllipticFit elliptic_defect(const ScalarField& S, const HermitianMetricField& gt, double radius,
                            double slack_c) {
  EllipticFit fit;
  fit.lapS = canonical_laplacian(S, gt);
  const auto& grid = S.grid();

  std::vector<std::size_t> nodes;
  std::vector<double> s, y;
  for (std::size_t node = 0; node < grid.size(); ++node) {
    if (!fit.lapS.valid(node) || !in_region(grid, node, radius)) continue;
    const double lap = fit.lapS[node];
    const double v = S[node];
    if (!std::isfinite(lap) || !std::isfinite(v)) continue;
    nodes.push_back(node);
    // S^{3/2} at S = 0 is 0; rounding can leave tiny negatives
    s.push_back(std::pow(std::max(v, 0.0), 1.5));
    y.push_back(lap);
  }
  fit.nodes = nodes.size();
  fit.slack = slack_c * grid.spacing() * grid.spacing();
  fit.defect = ScalarField(S.grid_ptr(), fit.lapS.margin());
  if (nodes.empty()) return fit;

  double s_mean = 0.0;
  for (double v : s) s_mean += v;
  s_mean /= static_cast<double>(s.size());

  // The constants are fitted with zero slack; the slack only enters the check.
  // Walk the upper envelope of the lines -y - s C1 until the objective
  // C1 * s_mean + max(0, envelope) stops decreasing.
  const auto envelope = [&](double c1) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < s.size(); ++k) best = std::max(best, -y[k] - s[k] * c1);
    return best;
  };
  double c1 = 0.0;
  for (std::size_t iter = 0; iter <= s.size(); ++iter) {
    const double top = envelope(c1);
    if (top <= 0.0) break;
    const double tol = 1e-12 * (1.0 + std::abs(top));
    double s_active = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < s.size(); ++k)
      if (-y[k] - s[k] * c1 >= top - tol) s_active = std::min(s_active, s[k]);
    if (s_mean - s_active >= 0.0) break;
    double step = top / s_active;  // envelope of the active line reaches 0
    for (std::size_t k = 0; k < s.size(); ++k) {
      if (s[k] >= s_active) continue;
      const double gap = top - (-y[k] - s[k] * c1);
      step = std::min(step, gap / (s_active - s[k]));
    }
    c1 += std::max(step, 0.0);
  }
  fit.C1 = c1;
  fit.C2 = std::max(0.0, envelope(c1));

  fit.min_defect = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const double d = y[k] + fit.C1 * s[k] + fit.C2;
    fit.defect[nodes[k]] = d;
    fit.min_defect = std::min(fit.min_defect, d);
  }
  fit.bounded = std::isfinite(fit.C1) && std::isfinite(fit.C2) &&
                fit.min_defect >= -fit.slack;
  return fit;
}

BianchiResiduals bianchi_residuals(const HermitianMetricField& g, double radius) {
  const int n = g.n();
  const auto& grid = g.grid();
  const TensorField theta = chern_connection(g);
  const TensorField T = torsion_from_connection(theta);
  const TensorField R = curvature(g);
  const TensorField dbT = covariant_derivative(T, theta, Direction::Antiholomorphic);
  const TensorField DR = covariant_derivative(R, theta, Direction::Holomorphic);

  BianchiResiduals out;
  const int m012 = std::max(R.margin(), dbT.margin());
  out.f012 = TensorField(g.grid_ptr(), R.variance(), m012);
  out.f013 = TensorField(g.grid_ptr(), {Index::BarUp, Index::BarDown, Index::Down, Index::BarDown}, m012);
  out.f014 = TensorField(g.grid_ptr(), DR.variance(), std::max(DR.margin(), T.margin()));

  const auto r4 = [n](int a, int b, int c, int d) { return ((a * n + b) * n + c) * n + d; };
  for (std::size_t node = 0; node < grid.size(); ++node) {
    const auto rv = R.at(node);
    const auto tv = T.at(node);
    const auto dtv = dbT.at(node);
    const auto drv = DR.at(node);
    auto a = out.f012.at(node);
    auto b = out.f013.at(node);
    auto c = out.f014.at(node);
    if (!out.f012.valid(node)) {
      std::fill(a.begin(), a.end(), kNaNc);
      std::fill(b.begin(), b.end(), kNaNc);
    } else {
      for (int l = 0; l < n; ++l)
        for (int m = 0; m < n; ++m)
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
              a[r4(l, m, i, j)] = rv[r4(l, m, i, j)] - rv[r4(l, i, m, j)] - dtv[r4(l, m, i, j)];
              // conjugate bundle: R^lbar_{kbar i jbar} = -conj(R^l_{k j ibar}),
              // T^lbar_{jbar kbar, i} = conj(dbar_i T^l_{j k}); here (k, i, j) = (m, i, j)
              b[r4(l, m, i, j)] = -std::conj(rv[r4(l, m, j, i)]) + std::conj(rv[r4(l, j, m, i)]) -
                                  std::conj(dtv[r4(l, j, m, i)]);
            }
    }
    if (!out.f014.valid(node)) {
      std::fill(c.begin(), c.end(), kNaNc);
      continue;
    }
    for (int l = 0; l < n; ++l)
      for (int m = 0; m < n; ++m)
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j)
            for (int t = 0; t < n; ++t) {
              cd torsion_term = 0.0;
              for (int s = 0; s < n; ++s) torsion_term += tv[(s * n + i) * n + t] * rv[r4(l, m, s, j)];
              c[r4(l, m, i, j) * n + t] =
                  drv[r4(l, m, i, j) * n + t] - drv[r4(l, m, t, j) * n + i] - torsion_term;
            }
  }
  out.r012 = max_abs_finite(out.f012, radius);
  out.r013 = max_abs_finite(out.f013, radius);
  out.r014 = max_abs_finite(out.f014, radius);
  out.curvature_max = max_abs_finite(R, radius);
  out.torsion_derivative_max = max_abs_finite(dbT, radius);
  out.curvature_derivative_max = max_abs_finite(DR, radius);
  return out;
}

GeometryNorms geometry_norms(const HermitianMetricField& g, double radius) {
  const TensorField theta = chern_connection(g);
  const TensorField T = torsion_from_connection(theta);
  const TensorField R = curvature(g);
  GeometryNorms out;
  out.torsion = max_root(tensor_norm_squared(T, g), radius);
  out.torsion_derivative = max_root(full_norm_squared(T, theta, g), radius);
  out.curvature = max_root(tensor_norm_squared(R, g), radius);
  out.curvature_derivative = max_root(full_norm_squared(R, theta, g), radius);
  return out;
}

CalabiDiagnostics diagnose_calabi(const HermitianMetricField& g, const ScalarField& phi,
                                  double radius, double slack_c, bool with_norms) {
  CalabiDiagnostics d;
  d.S = calabi_S(g, phi, radius);
  d.lambda = equivalence_lambda(g, d.S.gt, radius);
  d.fit = elliptic_defect(d.S.conn, d.S.gt, radius, slack_c);
  d.identities = connection_identities(g, d.S.gt, radius);
  if (with_norms) d.norms = geometry_norms(g, radius);
  return d;
}

double meyers_bound(double c, double alpha, double d) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::domain_error("meyers_bound: alpha must lie in (0, 1)");
  if (!(d > 0.0)) throw std::domain_error("meyers_bound: d must be positive");
  if (!(c >= 0.0)) throw std::domain_error("meyers_bound: c must be nonnegative");
  const double base = std::pow(2.0, alpha + 1.0) * c / ((std::pow(2.0, alpha) - 1.0) * d);
  return std::pow(base, 1.0 / alpha);
}

MeyersProbe meyers_probe(const std::function<double(double)>& u, double alpha, double d,
                         int samples) {
  meyers_bound(0.0, alpha, d);  // parameter checks
  if (samples < 2) throw std::invalid_argument("meyers_probe: need at least 2 samples");
  std::vector<double> s(samples), v(samples);
  for (int k = 0; k < samples; ++k) {
    s[k] = d * k / samples;
    v[k] = u(s[k]);
    if (!(v[k] >= 0.0)) throw std::invalid_argument("meyers_probe: u must be nonnegative");
    if (k > 0 && v[k] < v[k - 1]) throw std::invalid_argument("meyers_probe: u must be non-decreasing");
  }
  MeyersProbe p;
  for (int i = 0; i < samples; ++i)
    for (int j = i + 1; j < samples; ++j) {
      if (v[i] == 0.0) continue;
      const double need = v[i] * (s[j] - s[i]) / std::pow(v[j], 1.0 - alpha);
      p.c = std::max(p.c, need);
    }
  p.u0 = v[0];
  p.bound = meyers_bound(p.c, alpha, d);
  p.holds = p.u0 <= p.bound * (1.0 + 1e-12);
  return p;
}

double ladder_exponent(int k, double m) {
  if (!(m > 1.0)) throw std::invalid_argument("ladder_exponent: m must exceed 1");
  return std::pow(m / (m - 1.0), k) + 0.5 * (m - 1.0);
}

double ladder_radius(int k, double R, double R0) { return R + (R0 - R) * std::ldexp(1.0, -k); }

double lp_norm(const ScalarField& S, const HermitianMetricField& g, double q, double r) {
  require_same_grid(S.grid(), g.grid());
  if (!(q > 0.0)) throw std::invalid_argument("lp_norm: q must be positive");
  if (!(r > 0.0)) throw std::invalid_argument("lp_norm: radius must be positive");
  if (r > 1.0 + 1e-12) throw std::domain_error("lp_norm: ball leaves the unit ball");
  const auto& grid = S.grid();
  const double cell = std::pow(grid.spacing(), grid.dim());
  std::vector<std::pair<double, double>> terms;  // (S, weight)
  double top = 0.0;
  for (std::size_t node = 0; node < grid.size(); ++node) {
    if (!in_region(grid, node, r)) continue;
    const double v = S[node];
    if (!S.valid(node) || !g.valid(node) || !std::isfinite(v))
      throw_at("lp_norm: S or g not available", node);
    const double w = cell * g.at(node).determinant().real();
    terms.emplace_back(std::max(v, 0.0), w);
    top = std::max(top, v);
  }
  if (top == 0.0) return 0.0;
  double sum = 0.0;
  for (const auto& [v, w] : terms) sum += w * std::pow(v / top, q);
  return top * std::pow(sum, 1.0 / q);
}

LadderReport lp_ladder(const ScalarField& S, const HermitianMetricField& g, double R, double R0,
                       double m, int steps) {
  if (!(R > 0.0 && R < R0)) throw std::invalid_argument("lp_ladder: need 0 < R < R0");
  if (R0 > 1.0 + 1e-12) throw std::domain_error("lp_ladder: B_R0 leaves the unit ball");
  if (steps < 1) throw std::invalid_argument("lp_ladder: need at least one step");
  LadderReport rep;
  const auto& grid = S.grid();
  for (std::size_t node = 0; node < grid.size(); ++node) {
    if (!in_region(grid, node, R0)) continue;
    if (!S.valid(node) || !std::isfinite(S[node])) throw_at("lp_ladder: S not available", node);
    if (in_region(grid, node, R)) rep.max_S = std::max(rep.max_S, S[node]);
  }
  rep.nondecreasing = true;
  for (int k = 1; k <= steps; ++k) {
    LadderStep st;
    st.k = k;
    st.q = ladder_exponent(k, m);
    st.r = ladder_radius(k, R, R0);
    st.norm = lp_norm(S, g, st.q, st.r);
    if (!rep.steps.empty() && st.norm < rep.steps.back().norm * (1.0 - 1e-9)) rep.nondecreasing = false;
    rep.sup_norm = std::max(rep.sup_norm, st.norm);
    rep.steps.push_back(st);
  }
  const double last = rep.steps.back().norm;
  rep.gap = rep.max_S > 0.0 ? std::abs(last - rep.max_S) / rep.max_S : last;
  return rep;
}

}  // namespace cma
