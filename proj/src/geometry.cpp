#include "cma/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace cma {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
const cd kNaNc{kNaN, kNaN};

// Centred first difference along real axis a.
template <typename Get>
auto d1(const BallGrid& g, std::size_t node, int a, Get&& get) {
  const auto s = g.stride(a);
  return (get(node + s) - get(node - s)) * (0.5 / g.spacing());
}

// Centred second difference along real axes a, b.
template <typename Get>
auto d2(const BallGrid& g, std::size_t node, int a, int b, Get&& get) {
  const double h = g.spacing();
  const auto sa = g.stride(a);
  if (a == b) return (get(node + sa) - 2.0 * get(node) + get(node - sa)) / (h * h);
  const auto sb = g.stride(b);
  return (get(node + sa + sb) - get(node + sa - sb) - get(node - sa + sb) +
          get(node - sa - sb)) /
         (4.0 * h * h);
}

template <typename Get>
cd wirtinger(const BallGrid& g, std::size_t node, int k, Direction dir, Get&& get) {
  const cd fx = d1(g, node, 2 * k, get);
  const cd fy = d1(g, node, 2 * k + 1, get);
  const cd i(0.0, 1.0);
  return dir == Direction::Holomorphic ? 0.5 * (fx - i * fy) : 0.5 * (fx + i * fy);
}

template <typename Get>
cd hessian_entry(const BallGrid& g, std::size_t node, int i, int j, Get&& get) {
  const int xi = 2 * i, yi = 2 * i + 1, xj = 2 * j, yj = 2 * j + 1;
  const cd re = 0.25 * (cd(d2(g, node, xi, xj, get)) + cd(d2(g, node, yi, yj, get)));
  if (i == j) return re;
  const cd im = 0.25 * (cd(d2(g, node, xi, yj, get)) - cd(d2(g, node, yi, xj, get)));
  return re + cd(0.0, 1.0) * im;
}

std::vector<Index> with(std::vector<Index> v, std::initializer_list<Index> extra) {
  v.insert(v.end(), extra);
  return v;
}

void require_same_grid(const BallGrid& a, const BallGrid& b) {
  if (!a.same_as(b)) throw std::invalid_argument("fields live on different grids");
}

CMat matrix_at(const TensorField& t, std::size_t node, int base, int n) {
  // n x n block of components starting at `base` with row stride n
  CMat m(n, n);
  const auto v = t.at(node);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = v[base + i * n + j];
  return m;
}

void fill_nan(std::span<cd> v) { std::fill(v.begin(), v.end(), kNaNc); }

// Components of an (n x n) metric tensor with a trailing derivative slot
// (slots beta, deltabar, alpha) gathered as d_alpha G.
CMat derivative_block(std::span<const cd> v, int alpha, int n) {
  CMat m(n, n);
  for (int b = 0; b < n; ++b)
    for (int d = 0; d < n; ++d) m(b, d) = v[(b * n + d) * n + alpha];
  return m;
}

}  // namespace

TensorField complex_hessian(const ScalarField& u) {
  const auto& g = u.grid();
  const int n = g.n();
  TensorField out(u.grid_ptr(), {Index::Down, Index::BarDown}, u.margin() + 1);
  const auto get = [&](std::size_t k) { return u[k]; };
  for (std::size_t node = 0; node < g.size(); ++node) {
    auto v = out.at(node);
    if (!out.valid(node)) {
      fill_nan(v);
      continue;
    }
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) {
        const cd e = hessian_entry(g, node, i, j, get);
        v[i * n + j] = e;
        v[j * n + i] = std::conj(e);
      }
  }
  return out;
}

CMat complex_hessian_at(const BallGrid& g, std::span<const double> u, std::size_t node) {
  const int n = g.n();
  const auto get = [&](std::size_t k) { return u[k]; };
  CMat H(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      H(i, j) = hessian_entry(g, node, i, j, get);
      if (j != i) H(j, i) = std::conj(H(i, j));
    }
  return H;
}

TensorField complex_hessian(const TensorField& t) {
  const auto& g = t.grid();
  const int n = g.n();
  const int c = t.components();
  TensorField out(t.grid_ptr(), with(t.variance(), {Index::Down, Index::BarDown}),
                  t.margin() + 1);
  for (std::size_t node = 0; node < g.size(); ++node) {
    auto v = out.at(node);
    if (!out.valid(node)) {
      fill_nan(v);
      continue;
    }
    for (int k = 0; k < c; ++k) {
      const auto get = [&](std::size_t q) { return t.at(q)[k]; };
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) v[(k * n + i) * n + j] = hessian_entry(g, node, i, j, get);
    }
  }
  return out;
}

TensorField partial(const TensorField& t, Direction dir) {
  const auto& g = t.grid();
  const int n = g.n();
  const int c = t.components();
  const Index slot = dir == Direction::Holomorphic ? Index::Down : Index::BarDown;
  TensorField out(t.grid_ptr(), with(t.variance(), {slot}), t.margin() + 1);
  for (std::size_t node = 0; node < g.size(); ++node) {
    auto v = out.at(node);
    if (!out.valid(node)) {
      fill_nan(v);
      continue;
    }
    for (int k = 0; k < c; ++k) {
      const auto get = [&](std::size_t q) { return t.at(q)[k]; };
      for (int m = 0; m < n; ++m) v[k * n + m] = wirtinger(g, node, m, dir, get);
    }
  }
  return out;
}

TensorField partial(const ScalarField& f, Direction dir) { return partial(as_tensor(f), dir); }

TensorField as_tensor(const ScalarField& f) {
  TensorField out(f.grid_ptr(), {}, f.margin());
  for (std::size_t node = 0; node < f.grid().size(); ++node) out.at(node)[0] = cd(f[node], 0.0);
  return out;
}

HermitianMetricField sample_metric(const GridPtr& grid, const MetricFunction& g) {
  return HermitianMetricField::from_function(grid, g);
}

HermitianMetricField add_hessian(const HermitianMetricField& g, const TensorField& hess) {
  require_same_grid(g.grid(), hess.grid());
  if (hess.variance() != std::vector<Index>{Index::Down, Index::BarDown})
    throw std::invalid_argument("add_hessian expects a (down, bar-down) tensor");
  const int margin = std::max(g.margin(), hess.margin());
  HermitianMetricField out(g.grid_ptr(), margin);
  const int n = g.n();
  for (std::size_t node = 0; node < g.grid().size(); ++node) {
    if (!out.valid(node)) {
      out.set(node, CMat::Constant(n, n, kNaNc));
      continue;
    }
    out.set(node, g.at(node) + matrix_at(hess, node, 0, n));
  }
  return out;
}

TensorField chern_connection(const HermitianMetricField& g) {
  const int n = g.n();
  const TensorField dg = partial(g.tensor(), Direction::Holomorphic);  // (beta, deltabar, alpha)
  TensorField theta(g.grid_ptr(), {Index::Up, Index::Down, Index::Down}, dg.margin());
  for (std::size_t node = 0; node < g.grid().size(); ++node) {
    auto v = theta.at(node);
    if (!theta.valid(node)) {
      fill_nan(v);
      continue;
    }
    const CMat G = g.at(node);
    const Eigen::PartialPivLU<CMat> lu(G);
    if (!(std::abs(lu.determinant()) > 0.0))
      throw std::domain_error("singular metric at node " + std::to_string(node));
    const CMat Ginv = lu.inverse();
    const auto dv = dg.at(node);
    for (int a = 0; a < n; ++a) {
      const CMat M = derivative_block(dv, a, n) * Ginv;  // M(beta, gamma)
      for (int gm = 0; gm < n; ++gm)
        for (int b = 0; b < n; ++b) v[(gm * n + a) * n + b] = M(b, gm);
    }
  }
  return theta;
}

TensorField torsion_from_connection(const TensorField& theta) {
  const int n = theta.grid().n();
  TensorField t(theta.grid_ptr(), theta.variance(), theta.margin());
  for (std::size_t node = 0; node < theta.grid().size(); ++node) {
    const auto th = theta.at(node);
    auto v = t.at(node);
    for (int gm = 0; gm < n; ++gm)
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
          v[(gm * n + a) * n + b] = th[(gm * n + a) * n + b] - th[(gm * n + b) * n + a];
  }
  return t;
}

TensorField torsion(const HermitianMetricField& g) {
  return torsion_from_connection(chern_connection(g));
}

TensorField curvature(const HermitianMetricField& g) {
  const int n = g.n();
  const TensorField dg = partial(g.tensor(), Direction::Holomorphic);       // (i, kbar, alpha)
  const TensorField dbg = partial(g.tensor(), Direction::Antiholomorphic);  // (i, kbar, betabar)
  const TensorField ddg = complex_hessian(g.tensor());                      // (i, kbar, alpha, betabar)
  TensorField r(g.grid_ptr(), {Index::Up, Index::Down, Index::Down, Index::BarDown}, dg.margin());
  for (std::size_t node = 0; node < g.grid().size(); ++node) {
    auto v = r.at(node);
    if (!r.valid(node)) {
      fill_nan(v);
      continue;
    }
    const Eigen::PartialPivLU<CMat> lu(g.at(node));
    if (!(std::abs(lu.determinant()) > 0.0))
      throw std::domain_error("singular metric at node " + std::to_string(node));
    const CMat Ginv = lu.inverse();
    const auto dv = dg.at(node);
    const auto dbv = dbg.at(node);
    const auto ddv = ddg.at(node);
    for (int a = 0; a < n; ++a) {
      const CMat A = derivative_block(dv, a, n) * Ginv;
      for (int b = 0; b < n; ++b) {
        CMat H(n, n);
        for (int i = 0; i < n; ++i)
          for (int k = 0; k < n; ++k) H(i, k) = ddv[((i * n + k) * n + a) * n + b];
        const CMat M = -H * Ginv + A * derivative_block(dbv, b, n) * Ginv;  // M(i, j)
        for (int j = 0; j < n; ++j)
          for (int i = 0; i < n; ++i) v[((j * n + i) * n + a) * n + b] = M(i, j);
      }
    }
  }
  return r;
}

bool is_curvature_layout(const TensorField& t) {
  return t.variance() == std::vector<Index>{Index::Up, Index::Down, Index::Down, Index::BarDown};
}

TensorField lower_curvature(const TensorField& r, const HermitianMetricField& g) {
  if (!is_curvature_layout(r)) throw std::invalid_argument("not a curvature tensor");
  require_same_grid(r.grid(), g.grid());
  const int n = g.n();
  TensorField out(r.grid_ptr(), {Index::Down, Index::BarDown, Index::Down, Index::BarDown},
                  std::max(r.margin(), g.margin()));
  for (std::size_t node = 0; node < g.grid().size(); ++node) {
    auto v = out.at(node);
    if (!out.valid(node)) {
      fill_nan(v);
      continue;
    }
    const CMat G = g.at(node);
    const auto rv = r.at(node);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int a = 0; a < n; ++a)
          for (int b = 0; b < n; ++b) {
            cd acc = 0.0;
            for (int k = 0; k < n; ++k) acc += G(k, j) * rv[((k * n + i) * n + a) * n + b];
            v[((i * n + j) * n + a) * n + b] = acc;
          }
  }
  return out;
}

TensorField covariant_derivative(const TensorField& t, const TensorField& theta, Direction dir) {
  require_same_grid(t.grid(), theta.grid());
  if (theta.variance() != std::vector<Index>{Index::Up, Index::Down, Index::Down})
    throw std::invalid_argument("connection must have variance (up, down, down)");
  const int n = t.grid().n();
  const int rank = t.rank();
  const bool holo = dir == Direction::Holomorphic;
  TensorField out = partial(t, dir);
  const int margin = std::max(out.margin(), theta.margin());
  if (margin != out.margin()) {
    TensorField widened(out.grid_ptr(), out.variance(), margin);
    for (std::size_t node = 0; node < t.grid().size(); ++node) {
      auto dst = widened.at(node);
      const auto src = out.at(node);
      std::copy(src.begin(), src.end(), dst.begin());
    }
    out = std::move(widened);
  }

  // slots touched by the connection in this direction
  std::vector<int> slots;
  for (int k = 0; k < rank; ++k) {
    const Index s = t.variance()[k];
    const bool barred = s == Index::BarUp || s == Index::BarDown;
    if (barred != holo) slots.push_back(k);
  }
  if (slots.empty()) return out;

  std::vector<int> stride(rank, 1);
  for (int k = rank - 2; k >= 0; --k) stride[k] = stride[k + 1] * n;

  for (std::size_t node = 0; node < t.grid().size(); ++node) {
    auto v = out.at(node);
    if (!out.valid(node)) {
      fill_nan(v);
      continue;
    }
    const auto tv = t.at(node);
    const auto th = theta.at(node);
    const auto coeff = [&](int gm, int m, int b) {
      const cd c = th[(gm * n + m) * n + b];
      return holo ? c : std::conj(c);
    };
    for (int c = 0; c < t.components(); ++c) {
      for (int m = 0; m < n; ++m) {
        cd acc = 0.0;
        for (int k : slots) {
          const int ik = (c / stride[k]) % n;
          const int base = c - ik * stride[k];
          const Index s = t.variance()[k];
          if (s == Index::Up || s == Index::BarUp) {
            for (int b = 0; b < n; ++b) acc += coeff(ik, m, b) * tv[base + b * stride[k]];
          } else {
            for (int gm = 0; gm < n; ++gm) acc -= coeff(gm, m, ik) * tv[base + gm * stride[k]];
          }
        }
        v[c * n + m] += acc;
      }
    }
  }
  return out;
}

TensorField covariant_derivative(const TensorField& t, const HermitianMetricField& g,
                                 Direction dir) {
  return covariant_derivative(t, chern_connection(g), dir);
}

ScalarField tensor_norm_squared(const TensorField& t, const HermitianMetricField& g) {
  require_same_grid(t.grid(), g.grid());
  const int n = g.n();
  const int rank = t.rank();
  const int comps = t.components();
  std::vector<int> stride(rank, 1);
  for (int k = rank - 2; k >= 0; --k) stride[k] = stride[k + 1] * n;
  ScalarField out(t.grid_ptr(), std::max(t.margin(), g.margin()));
  std::vector<cd> w(comps), next(comps);
  for (std::size_t node = 0; node < t.grid().size(); ++node) {
    if (!out.valid(node)) continue;
    const CMat G = g.at(node);
    const CMat Ginv = G.inverse();
    const auto tv = t.at(node);
    std::copy(tv.begin(), tv.end(), w.begin());
    // w_b = sum_a t_a prod_k F_k(a_k, b_k), one slot at a time
    for (int k = 0; k < rank; ++k) {
      const Index s = t.variance()[k];
      for (int c = 0; c < comps; ++c) {
        const int bk = (c / stride[k]) % n;
        const int base = c - bk * stride[k];
        cd acc = 0.0;
        for (int ak = 0; ak < n; ++ak) {
          cd f;
          switch (s) {
            case Index::Down: f = Ginv(bk, ak); break;
            case Index::Up: f = G(ak, bk); break;
            case Index::BarDown: f = Ginv(ak, bk); break;
            case Index::BarUp: f = G(bk, ak); break;
          }
          acc += w[base + ak * stride[k]] * f;
        }
        next[c] = acc;
      }
      std::swap(w, next);
    }
    double acc = 0.0;
    for (int c = 0; c < comps; ++c) acc += (w[c] * std::conj(tv[c])).real();
    out[node] = acc;
  }
  return out;
}

ScalarField tensor_norm(const TensorField& t, const HermitianMetricField& g) {
  ScalarField out = tensor_norm_squared(t, g);
  for (auto& x : out.values()) x = std::sqrt(std::max(x, 0.0));
  return out;
}

ScalarField canonical_laplacian(const ScalarField& f, const HermitianMetricField& g) {
  require_same_grid(f.grid(), g.grid());
  const TensorField H = complex_hessian(f);
  const int n = g.n();
  ScalarField out(f.grid_ptr(), std::max(H.margin(), g.margin()));
  for (std::size_t node = 0; node < f.grid().size(); ++node) {
    if (!out.valid(node)) continue;
    const CMat Ginv = g.at(node).inverse();
    out[node] = 2.0 * (Ginv * matrix_at(H, node, 0, n)).trace().real();
  }
  return out;
}

double max_abs(const TensorField& t, double radius) {
  const auto& g = t.grid();
  double best = 0.0;
  for (std::size_t node = 0; node < g.size(); ++node) {
    if (!g.in_ball(node) || !t.valid(node)) continue;
    if (g.complex_point(node).norm() > radius + 1e-12) continue;
    for (const cd& c : t.at(node)) best = std::max(best, std::abs(c));
  }
  return best;
}

double max_abs(const ScalarField& f, double radius) {
  const auto& g = f.grid();
  double best = 0.0;
  for (std::size_t node = 0; node < g.size(); ++node) {
    if (!g.in_ball(node) || !f.valid(node)) continue;
    if (g.complex_point(node).norm() > radius + 1e-12) continue;
    best = std::max(best, std::abs(f[node]));
  }
  return best;
}

TensorField subtract(const TensorField& a, const TensorField& b) {
  require_same_grid(a.grid(), b.grid());
  if (a.variance() != b.variance()) throw std::invalid_argument("variance mismatch in subtract");
  TensorField out(a.grid_ptr(), a.variance(), std::max(a.margin(), b.margin()));
  for (std::size_t node = 0; node < a.grid().size(); ++node) {
    auto v = out.at(node);
    const auto av = a.at(node);
    const auto bv = b.at(node);
    for (int c = 0; c < a.components(); ++c) v[c] = av[c] - bv[c];
  }
  return out;
}

}  // namespace cma

namespace cma {

AnalyticGeometry::AnalyticGeometry(const MetricExpr& g) : metric_(g) {
  const int n = g.n;
  for (int b = 0; b < n; ++b)
    for (int d = 0; d < n; ++d) {
      const auto e = g.full_entry(b, d);
      for (int a = 0; a < n; ++a) {
        d_.push_back(expr::d_holo(e, a));
        db_.push_back(expr::d_antiholo(e, a));
      }
      for (int a = 0; a < n; ++a)
        for (int be = 0; be < n; ++be) ddb_.push_back(expr::d_holo(expr::d_antiholo(e, be), a));
    }
}

AnalyticGeometry::Values AnalyticGeometry::at(const RealPoint& p) const {
  const int n = metric_.n;
  const auto ev = [&](const expr::ComplexExpr& e) { return cd(e.re.eval(p), e.im.eval(p)); };
  Values out;
  out.g = metric_.eval(p);
  const CMat Ginv = out.g.inverse();
  std::vector<CMat> D(n, CMat(n, n)), Db(n, CMat(n, n));
  for (int b = 0; b < n; ++b)
    for (int d = 0; d < n; ++d)
      for (int a = 0; a < n; ++a) {
        D[a](b, d) = ev(d_[(b * n + d) * n + a]);
        Db[a](b, d) = ev(db_[(b * n + d) * n + a]);
      }
  out.theta.assign(n * n * n, 0.0);
  out.torsion.assign(n * n * n, 0.0);
  for (int a = 0; a < n; ++a) {
    const CMat M = D[a] * Ginv;
    for (int gm = 0; gm < n; ++gm)
      for (int b = 0; b < n; ++b) out.theta[(gm * n + a) * n + b] = M(b, gm);
  }
  for (int gm = 0; gm < n; ++gm)
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        out.torsion[(gm * n + a) * n + b] =
            out.theta[(gm * n + a) * n + b] - out.theta[(gm * n + b) * n + a];
  out.curvature.assign(n * n * n * n, 0.0);
  for (int a = 0; a < n; ++a)
    for (int be = 0; be < n; ++be) {
      CMat H(n, n);
      for (int b = 0; b < n; ++b)
        for (int d = 0; d < n; ++d) H(b, d) = ev(ddb_[((b * n + d) * n + a) * n + be]);
      const CMat M = -H * Ginv + D[a] * Ginv * Db[be] * Ginv;
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) out.curvature[((j * n + i) * n + a) * n + be] = M(i, j);
    }
  return out;
}

}  // namespace cma
