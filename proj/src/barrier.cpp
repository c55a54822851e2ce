#include "cma/barrier.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <stdexcept>

#include "cma/geometry.hpp"

namespace cma {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr int kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};

double radical_inverse(std::uint64_t i, int base) {
  double inv = 1.0 / base, f = inv, r = 0.0;
  while (i > 0) {
    r += f * static_cast<double>(i % base);
    i /= base;
    f *= inv;
  }
  return r;
}

// Shifted Halton sequence in `dim` dimensions, points k = 1..count.
class Halton {
 public:
  Halton(int dim, std::mt19937_64& rng) : shift_(dim) {
    if (dim > static_cast<int>(std::size(kPrimes))) throw std::invalid_argument("Halton dimension too large");
    std::uniform_real_distribution<double> U(0.0, 1.0);
    for (auto& s : shift_) s = U(rng);
  }
  std::vector<double> point(std::uint64_t k) const {
    std::vector<double> x(shift_.size());
    for (std::size_t d = 0; d < shift_.size(); ++d) {
      const double y = radical_inverse(k, kPrimes[d]) + shift_[d];
      x[d] = y - std::floor(y);
    }
    return x;
  }

 private:
  std::vector<double> shift_;
};

// Unit vector in C^n from 2n uniforms (Box-Muller, then normalised).
CVec direction(const double* u, int n) {
  CVec z(n);
  for (int k = 0; k < n; ++k) {
    const double r = std::sqrt(-2.0 * std::log(1.0 - u[2 * k]));
    const double t = 2.0 * std::numbers::pi * u[2 * k + 1];
    z(k) = cd(r * std::cos(t), r * std::sin(t));
  }
  const double norm = z.norm();
  if (!(norm > 0.0)) {
    z.setZero();
    z(0) = 1.0;
    return z;
  }
  return z / norm;
}

// Uniform in the ball of the given radius from 2n + 1 uniforms; never 0.
CVec ball_point(const double* u, int n, double radius) {
  return direction(u, n) * (radius * std::pow(1.0 - u[2 * n], 1.0 / (2.0 * n)));
}

double root_n(double x, int n) {
  if (x < 0.0) throw std::invalid_argument("density must be nonnegative");
  return n == 1 ? x : std::sqrt(x);
}

}  // namespace

int BarrierConfig::n() const {
  if (!pairs.empty()) return static_cast<int>(pairs.front().a.size());
  if (!sphere.empty()) return static_cast<int>(sphere.front().size());
  if (!ball.empty()) return static_cast<int>(ball.front().size());
  return 0;
}

void BarrierConfig::validate() const {
  if (!(eta > 0.0 && eta < 1.0)) throw std::invalid_argument("eta must lie in (0, 1)");
  if (!(std::isfinite(K1) && K1 >= 0.0 && std::isfinite(K2) && K2 >= 0.0))
    throw std::invalid_argument("K1 and K2 must be finite and nonnegative");
  const int dim = n();
  constexpr double tol = 1e-12;
  for (const auto& s : pairs) {
    if (s.a.size() != dim || s.h.size() != dim) throw std::invalid_argument("sample dimension mismatch");
    if (s.a.norm() > 1.0 - eta + tol) throw std::invalid_argument("base point outside |a| <= 1 - eta");
    const double hn = s.h.norm();
    if (!(hn > 0.0) || hn > 0.5 * eta + tol) throw std::invalid_argument("displacement outside 0 < |h| <= eta/2");
  }
  for (const auto& z : sphere) {
    if (z.size() != dim) throw std::invalid_argument("sample dimension mismatch");
    if (std::abs(z.norm() - 1.0) > 1e-10) throw std::invalid_argument("sphere sample off the unit sphere");
  }
  for (const auto& z : ball) {
    if (z.size() != dim) throw std::invalid_argument("sample dimension mismatch");
    if (!(z.norm() < 1.0)) throw std::invalid_argument("ball sample outside the open ball");
  }
}

BarrierConfig make_barrier_config(int n, double eta, std::size_t pairs, std::size_t points, std::uint64_t seed) {
  if (n < 1 || n > kMaxN) throw std::invalid_argument("n must be 1 or 2");
  BarrierConfig cfg;
  cfg.eta = eta;
  cfg.seed = seed;
  std::mt19937_64 rng(seed);
  const Halton hp(4 * n + 2, rng), hs(2 * n, rng), hb(2 * n + 1, rng);
  for (std::size_t k = 1; k <= pairs; ++k) {
    const auto x = hp.point(k);
    cfg.pairs.push_back({ball_point(x.data(), n, 1.0 - eta), ball_point(x.data() + 2 * n + 1, n, 0.5 * eta)});
  }
  for (std::size_t k = 1; k <= points; ++k) {
    cfg.sphere.push_back(direction(hs.point(k).data(), n));
    cfg.ball.push_back(ball_point(hb.point(k).data(), n, 1.0));
  }
  cfg.validate();
  return cfg;
}

BarrierConfig refine(const BarrierConfig& cfg) {
  BarrierConfig out = make_barrier_config(cfg.n(), cfg.eta, 2 * cfg.pairs.size(),
                                          2 * std::max(cfg.sphere.size(), cfg.ball.size()), cfg.seed);
  out.K1 = cfg.K1;
  out.K2 = cfg.K2;
  out.slack_c = cfg.slack_c;
  out.barrier_pairs = cfg.barrier_pairs;
  out.polish = cfg.polish;
  out.family = cfg.family;
  return out;
}

BoundaryPair translated_boundary_data(const TranslationMap& plus, const TranslationMap& minus,
                                      const ScalarFunction& phi, const CVec& z) {
  const CVec wp = plus(z), wm = minus(z);
  if (std::abs(wp.norm() - 1.0) > 1e-10 || std::abs(wm.norm() - 1.0) > 1e-10)
    throw std::logic_error("translation map moved a sphere point off the sphere");
  return {phi(to_real(wp)), phi(to_real(wm))};
}

namespace {

constexpr std::size_t kFresh = static_cast<std::size_t>(-1);
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Per-sample quantities, up to two at once; `k` indexes cached point data or
// is kFresh for points produced by the local search.
using SampleValues = std::array<double, 2>;
using Evaluate = std::function<SampleValues(const TranslationMap&, const TranslationMap&, const CVec&, std::size_t)>;

struct Best {
  double value = kNegInf;
  std::size_t pair = 0;
  std::size_t point = 0;
};

struct Admissible {
  double a_max;
  double h_max;
  bool sphere;  // z on the sphere, otherwise in the closed ball

  void project(CVec& a, CVec& h, CVec& z) const {
    if (a.norm() > a_max) a *= a_max / a.norm();
    const double hn = h.norm();
    if (hn > h_max) h *= h_max / hn;
    if (h.norm() < 1e-3 * h_max) h *= 1e-3 * h_max / std::max(h.norm(), 1e-300);
    if (sphere || z.norm() > 1.0) z /= z.norm();
  }
};

// Compass search on the 6n real coordinates of (a, h, z).
double polish_sample(const Evaluate& eval, int slot, CVec a, CVec h, CVec z, const Admissible& adm,
                     MobiusFamily family) {
  const int n = static_cast<int>(a.size());
  auto value = [&](const CVec& a1, const CVec& h1, const CVec& z1) {
    try {
      return eval(TranslationMap(a1, h1, family), TranslationMap(a1, -h1, family), z1, kFresh)[slot];
    } catch (const std::domain_error&) {
      return kNegInf;
    }
  };
  double best = value(a, h, z);
  for (double step = 0.02; step > 1e-5; step *= 0.5) {
    bool improved = true;
    for (int sweep = 0; improved && sweep < 50; ++sweep) {
      improved = false;
      for (int c = 0; c < 6 * n; ++c)
        for (double sign : {1.0, -1.0}) {
          CVec a1 = a, h1 = h, z1 = z;
          CVec& target = c < 2 * n ? a1 : c < 4 * n ? h1 : z1;
          const int k = (c % (2 * n)) / 2;
          target(k) += (c % 2 == 0 ? cd(sign * step, 0.0) : cd(0.0, sign * step));
          adm.project(a1, h1, z1);
          const double v = value(a1, h1, z1);
          if (v > best) {
            best = v;
            a = a1, h = h1, z = z1;
            improved = true;
          }
        }
    }
  }
  return best;
}

// Sampled maxima of each slot, then polished from the best distinct pairs.
SampleValues sampled_sup(const Evaluate& eval, int slots, const BarrierConfig& cfg, const std::vector<CVec>& points,
                         bool sphere) {
  std::vector<std::array<Best, 2>> per_pair(cfg.pairs.size());
  SampleValues sup{kNegInf, kNegInf};
  for (std::size_t i = 0; i < cfg.pairs.size(); ++i) {
    const auto& s = cfg.pairs[i];
    const TranslationMap plus(s.a, s.h, cfg.family), minus(s.a, -s.h, cfg.family);
    for (std::size_t k = 0; k < points.size(); ++k) {
      const auto q = eval(plus, minus, points[k], k);
      for (int j = 0; j < slots; ++j) {
        if (!std::isfinite(q[j])) return {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
        if (q[j] > per_pair[i][j].value) per_pair[i][j] = {q[j], i, k};
        sup[j] = std::max(sup[j], q[j]);
      }
    }
  }
  const Admissible adm{1.0 - cfg.eta, 0.5 * cfg.eta, sphere};
  for (int j = 0; j < slots; ++j) {
    std::vector<Best> order;
    for (const auto& b : per_pair) order.push_back(b[j]);
    const std::size_t top = std::min(cfg.polish, order.size());
    std::partial_sort(order.begin(), order.begin() + top, order.end(),
                      [](const Best& x, const Best& y) { return x.value > y.value; });
    for (std::size_t t = 0; t < top; ++t) {
      const auto& s = cfg.pairs[order[t].pair];
      sup[j] = std::max(sup[j], polish_sample(eval, j, s.a, s.h, points[order[t].point], adm, cfg.family));
    }
  }
  return sup;
}

}  // namespace

double estimate_K1(const ScalarFunction& phi, const BarrierConfig& cfg) {
  if (cfg.pairs.empty() || cfg.sphere.empty()) throw std::invalid_argument("estimate_K1: empty sample set");
  std::vector<double> base(cfg.sphere.size());
  for (std::size_t k = 0; k < base.size(); ++k) base[k] = phi(to_real(cfg.sphere[k]));
  const Evaluate eval = [&](const TranslationMap& plus, const TranslationMap& minus, const CVec& z, std::size_t k) {
    const auto U = translated_boundary_data(plus, minus, phi, z);
    const double phi0 = k == kFresh ? phi(to_real(z)) : base[k];
    return SampleValues{(0.5 * (U.plus + U.minus) - phi0) / plus.h().squaredNorm(), kNegInf};
  };
  return std::max(0.0, sampled_sup(eval, 1, cfg, cfg.sphere, true)[0]);
}

K2Estimate estimate_K2(const MetricFunction& omega, const ScalarFunction& density, const BarrierConfig& cfg) {
  if (cfg.pairs.empty() || cfg.ball.empty()) throw std::invalid_argument("estimate_K2: empty sample set");
  const int n = cfg.n();
  std::vector<CMat> g(cfg.ball.size());
  std::vector<double> F0(cfg.ball.size());
  for (std::size_t k = 0; k < g.size(); ++k) {
    const RealPoint x = to_real(cfg.ball[k]);
    g[k] = omega(x);
    F0[k] = root_n(density(x), n) * det_root(g[k]);
  }
  const Evaluate eval = [&](const TranslationMap& plus, const TranslationMap& minus, const CVec& z, std::size_t k) {
    CMat gz;
    double f0;
    if (k == kFresh) {
      gz = omega(to_real(z));
      f0 = root_n(density(to_real(z)), n) * det_root(gz);
    } else {
      gz = g[k];
      f0 = F0[k];
    }
    const double h2 = plus.h().squaredNorm();
    const CVec wp = plus(z), wm = minus(z);
    const CMat Pp = pullback_form(plus, omega(to_real(wp)), z);
    const CMat Pm = pullback_form(minus, omega(to_real(wm)), z);
    const double kf = -min_eigenvalue(2.0 * gz - Pp - Pm) / h2;
    const double kd =
        (2.0 * f0 - root_n(density(to_real(wp)), n) * det_root(Pp) - root_n(density(to_real(wm)), n) * det_root(Pm)) /
        h2;
    return SampleValues{kf, kd};
  };
  const auto sup = sampled_sup(eval, 2, cfg, cfg.ball, false);
  return {std::max(0.0, sup[0]), std::max(0.0, sup[1])};
}

Barrier build_barrier(const CVec& a, const CVec& h, const ScalarField& u, double K1, double K2,
                      MobiusFamily family) {
  const BallGrid& g = u.grid();
  if (a.size() != g.n() || h.size() != g.n()) throw std::invalid_argument("build_barrier: dimension mismatch");
  Barrier b{TranslationMap(a, h, family), TranslationMap(a, -h, family), K1, K2, ScalarField(u.grid_ptr(), 0),
            ScalarField(u.grid_ptr(), 0), ScalarField(u.grid_ptr(), 0)};
  ScalarField inside(u.grid_ptr(), u.margin());
  for (std::size_t node = 0; node < g.size(); ++node)
    if (g.in_ball(node)) inside[node] = u[node];
  const double h2 = h.squaredNorm();
  for (std::size_t node = 0; node < g.size(); ++node) {
    if (!g.in_ball(node)) continue;
    const CVec z = g.complex_point(node);
    const double up = inside.interpolate_cubic(to_real(b.plus(z)));
    const double um = inside.interpolate_cubic(to_real(b.minus(z)));
    b.U_plus[node] = up;
    b.U_minus[node] = um;
    b.v[node] = 0.5 * (up + um) - K1 * h2 + K2 * (z.squaredNorm() - 1.0) * h2;
  }
  return b;
}

SupersolutionReport verify_supersolution(const Barrier& b, const MetricFunction& omega,
                                         const ScalarFunction& density, double slack_c) {
  const BallGrid& g = b.v.grid();
  const int n = g.n();
  const double h2 = b.plus.h().squaredNorm();
  const CMat K2I = b.K2 * h2 * CMat::Identity(n, n);
  SupersolutionReport rep;
  rep.slack = slack_c * g.spacing() * g.spacing();
  rep.deficit = -std::numeric_limits<double>::infinity();
  rep.min_eig = rep.form_min_eig = std::numeric_limits<double>::infinity();
  std::size_t positivity = 0, concavity = 0;
  for (std::size_t node : g.interior_nodes()) {
    const CMat Hv = complex_hessian_at(g, b.v.values(), node);
    if (!Hv.allFinite()) {
      ++rep.skipped;
      continue;
    }
    ++rep.checked;
    const RealPoint x = g.point(node);
    const CVec z = g.complex_point(node);
    const CMat G = omega(x);
    const CMat Av = G + Hv;
    const double le = min_eigenvalue(Av);
    rep.min_eig = std::min(rep.min_eig, le);
    if (!(le > 0.0)) ++positivity;
    const double target = root_n(density(x), n) * det_root(G);
    rep.deficit = std::max(rep.deficit, target - (le > 0.0 ? det_root(Av) : 0.0));

    // the concavity chain on the assembled matrices
    const CVec wp = b.plus(z), wm = b.minus(z);
    const CMat Pp = pullback_form(b.plus, omega(to_real(wp)), z);
    const CMat Pm = pullback_form(b.minus, omega(to_real(wm)), z);
    const CMat A = Pp + complex_hessian_at(g, b.U_plus.values(), node);
    const CMat B = Pm + complex_hessian_at(g, b.U_minus.values(), node);
    const CMat W = (G - Pp) + (G - Pm) + K2I;
    const CMat C = 0.5 * (W + K2I);
    rep.form_min_eig = std::min(rep.form_min_eig, min_eigenvalue(W));
    if (min_eigenvalue(A) >= 0.0 && min_eigenvalue(B) >= 0.0 && min_eigenvalue(C) >= 0.0) {
      const double rhs = 0.5 * det_root(A) + 0.5 * det_root(B) + det_root(C);
      const double viol = rhs - det_root(0.5 * A + 0.5 * B + C);
      rep.concavity_violation = std::max(rep.concavity_violation, viol);
      if (viol > 1e-12 * (1.0 + std::abs(rhs))) ++concavity;
      rep.transport_error = std::max(
          {rep.transport_error, std::abs(det_root(A) - root_n(density(to_real(wp)), n) * det_root(Pp)),
           std::abs(det_root(B) - root_n(density(to_real(wm)), n) * det_root(Pm))});
    }
  }
  if (rep.checked == 0) rep.failures.push_back("no interior node has a computable Hessian of v");
  if (positivity > 0) rep.failures.push_back(std::to_string(positivity) + " nodes where omega + Hess v is not positive");
  if (!(rep.deficit <= rep.slack)) rep.failures.push_back("F(omega + Hess v) below F(rho^{1/n} omega) beyond slack");
  if (concavity > 0) rep.failures.push_back(std::to_string(concavity) + " concavity violations");
  rep.pass = rep.failures.empty();
  return rep;
}

std::vector<QuotientSample> second_difference_quotients(const ScalarField& u, double eta) {
  const BallGrid& g = u.grid();
  const int dim = g.dim();
  const double s = g.spacing();
  const double hmax = 0.5 * eta;
  const int R = static_cast<int>(std::floor(hmax / s + 1e-12));
  std::vector<std::size_t> nodes;
  for (std::size_t node : g.interior_nodes())
    if (g.complex_point(node).norm() <= 1.0 - eta + 1e-12) nodes.push_back(node);

  std::vector<QuotientSample> out;
  std::array<int, kMaxDim> k{};
  const long total = static_cast<long>(std::pow(2 * R + 1, dim));
  for (long code = 0; code < total; ++code) {
    long c = code;
    long norm2 = 0;
    int first = 0;
    for (int a = 0; a < dim; ++a) {
      k[a] = static_cast<int>(c % (2 * R + 1)) - R;
      c /= 2 * R + 1;
      norm2 += static_cast<long>(k[a]) * k[a];
    }
    for (int a = 0; a < dim && first == 0; ++a) first = k[a];
    // one of each pair +-k
    if (first <= 0 || norm2 * s * s > hmax * hmax * (1.0 + 1e-12)) continue;
    std::ptrdiff_t off = 0;
    for (int a = 0; a < dim; ++a) off += k[a] * g.stride(a);
    const double h2 = norm2 * s * s;
    QuotientSample q;
    q.h_norm = std::sqrt(h2);
    q.offset.assign(k.begin(), k.begin() + dim);
    q.sup = -std::numeric_limits<double>::infinity();
    for (std::size_t node : nodes) {
      const double val = (0.5 * (u[node + off] + u[node - off]) - u[node]) / h2;
      q.sup = std::isnan(val) ? val : std::max(q.sup, val);
      if (std::isnan(val)) break;
    }
    out.push_back(std::move(q));
  }
  return out;
}

C11Certificate certify_interior_c11(const ScalarField& u, const DirichletProblem& p, const BarrierConfig& cfg) {
  cfg.validate();
  const BallGrid& g = u.grid();
  if (!g.same_as(*p.grid)) throw std::invalid_argument("certify_interior_c11: solution and problem grids differ");
  if (cfg.n() != g.n()) throw std::invalid_argument("certify_interior_c11: sample dimension mismatch");
  C11Certificate cert;
  cert.K1 = cfg.K1;
  cert.K2 = cfg.K2;
  cert.slack = cfg.slack_c * g.spacing() * g.spacing();
  cert.quotients = second_difference_quotients(u, cfg.eta);
  if (cert.quotients.empty())
    throw std::invalid_argument("certify_interior_c11: grid spacing exceeds eta/2, no lattice displacement fits");
  cert.sup_quotient = -std::numeric_limits<double>::infinity();
  for (const auto& q : cert.quotients) {
    cert.sup_quotient = std::isnan(q.sup) ? q.sup : std::max(cert.sup_quotient, q.sup);
    if (std::isnan(q.sup)) break;
  }
  cert.bound_holds = cert.sup_quotient <= cfg.K1 + cfg.K2 + cert.slack;

  bool barriers_ok = true;
  const std::size_t count = std::min(cfg.barrier_pairs, cfg.pairs.size());
  for (std::size_t i = 0; i < count; ++i) {
    const auto& s = cfg.pairs[i];
    const Barrier b = build_barrier(s.a, s.h, u, cfg.K1, cfg.K2, cfg.family);
    BarrierCheck check;
    check.sample = s;
    check.supersolution = verify_supersolution(b, p.omega, p.density, cfg.slack_c);
    std::vector<std::size_t> domain;
    for (std::size_t node : g.interior_nodes())
      if (std::isfinite(b.v[node]) && complex_hessian_at(g, b.v.values(), node).allFinite()) domain.push_back(node);
    check.comparison = comparison_check(u, b.v, p.omega, domain, cfg.slack_c);
    check.sphere_excess = -std::numeric_limits<double>::infinity();
    const double h2 = s.h.squaredNorm();
    for (const auto& z : cfg.sphere) {
      const auto U = translated_boundary_data(b.plus, b.minus, p.boundary, z);
      check.sphere_excess = std::max(check.sphere_excess, 0.5 * (U.plus + U.minus) - cfg.K1 * h2 - p.boundary(to_real(z)));
    }
    barriers_ok = barriers_ok && check.supersolution.pass && check.comparison.outcome == ComparisonOutcome::Pass &&
                  check.sphere_excess <= 1e-12;
    cert.barriers.push_back(std::move(check));
  }
  cert.pass = cert.bound_holds && barriers_ok;
  return cert;
}

}  // namespace cma
