#include "cma/fields.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <filesystem>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace cma {

namespace {

// Visits the 2^dim corners of the cell containing p with their multilinear weights.
template <typename Fn>
void for_each_corner(const BallGrid& g, const RealPoint& p, Fn&& fn) {
  std::array<int, kMaxDim> cell{};
  std::array<double, kMaxDim> frac{};
  if (!g.locate(p, cell, frac))
    throw std::domain_error("interpolation point outside the sampled cube");
  const int dim = g.dim();
  for (int mask = 0; mask < (1 << dim); ++mask) {
    double w = 1.0;
    std::array<int, kMaxDim> idx{};
    for (int a = 0; a < dim; ++a) {
      const bool up = (mask >> a) & 1;
      idx[a] = cell[a] + (up ? 1 : 0);
      w *= up ? frac[a] : 1.0 - frac[a];
    }
    if (w == 0.0) continue;
    fn(g.node(std::span<const int>(idx.data(), dim)), w);
  }
}

}  // namespace

ScalarField::ScalarField(GridPtr grid, int margin, double fill)
    : grid_(std::move(grid)), margin_(margin), values_(grid_->size(), fill) {}

ScalarField ScalarField::from_function(GridPtr grid,
                                       const std::function<double(const RealPoint&)>& f) {
  ScalarField out(grid, 0);
  for (std::size_t node = 0; node < grid->size(); ++node) out[node] = f(grid->point(node));
  return out;
}

ScalarField ScalarField::from_expr(GridPtr grid, const expr::Expr& e) {
  if (e.max_axis() >= grid->dim())
    throw std::invalid_argument("expression uses a coordinate beyond complex dimension " +
                                std::to_string(grid->n()));
  return from_function(grid, [&](const RealPoint& p) { return e.eval(p); });
}

double ScalarField::interpolate(const RealPoint& p) const {
  double acc = 0.0;
  for_each_corner(*grid_, p, [&](std::size_t node, double w) {
    if (!valid(node)) throw std::domain_error("interpolation stencil touches an invalid node");
    acc += w * values_[node];
  });
  return acc;
}

double ScalarField::interpolate_cubic(const RealPoint& p) const {
  const BallGrid& g = *grid_;
  const int dim = g.dim();
  const int lo = margin_, hi = g.extent() - 1 - margin_;
  if (hi - lo < 3) throw std::domain_error("valid region too small for cubic interpolation");
  std::array<int, kMaxDim> start{};
  std::array<std::array<double, 4>, kMaxDim> w{};
  for (int a = 0; a < dim; ++a) {
    double x = (p[a] + 1.0) / g.spacing() + g.pad();
    if (std::abs(x - std::round(x)) < 1e-10) x = std::round(x);
    if (!(x >= lo - 1e-9 && x <= hi + 1e-9)) throw std::domain_error("cubic interpolation point outside the valid region");
    start[a] = std::clamp(static_cast<int>(std::floor(x)) - 1, lo, hi - 3);
    const double t = x - start[a];
    for (int s = 0; s < 4; ++s) {
      double ws = 1.0;
      for (int r = 0; r < 4; ++r)
        if (r != s) ws *= (t - r) / (s - r);
      w[a][s] = ws;
    }
  }
  std::size_t base = 0;
  for (int a = 0; a < dim; ++a) base += start[a] * g.stride(a);
  const int total = 1 << (2 * dim);
  double acc = 0.0;
  for (int c = 0; c < total; ++c) {
    std::size_t node = base;
    double wc = 1.0;
    for (int a = 0; a < dim; ++a) {
      const int s = (c >> (2 * a)) & 3;
      node += s * g.stride(a);
      wc *= w[a][s];
    }
    if (wc != 0.0) acc += wc * values_[node];
  }
  return acc;
}

std::string to_string(Index k) {
  switch (k) {
    case Index::Up: return "up";
    case Index::Down: return "down";
    case Index::BarUp: return "bar-up";
    case Index::BarDown: return "bar-down";
  }
  return "?";
}

TensorField::TensorField(GridPtr grid, std::vector<Index> variance, int margin)
    : grid_(std::move(grid)), variance_(std::move(variance)), margin_(margin) {
  components_ = 1;
  for (std::size_t k = 0; k < variance_.size(); ++k) components_ *= grid_->n();
  data_.assign(grid_->size() * components_, cd(0.0, 0.0));
}

int TensorField::offset(std::span<const int> index) const {
  if (static_cast<int>(index.size()) != rank())
    throw std::invalid_argument("tensor index has " + std::to_string(index.size()) +
                                " slots, rank is " + std::to_string(rank()));
  int off = 0;
  for (int i : index) off = off * grid_->n() + i;
  return off;
}

std::vector<cd> TensorField::interpolate(const RealPoint& p) const {
  std::vector<cd> acc(components_, cd(0.0, 0.0));
  for_each_corner(*grid_, p, [&](std::size_t node, double w) {
    if (!valid(node)) throw std::domain_error("interpolation stencil touches an invalid node");
    const auto v = at(node);
    for (int c = 0; c < components_; ++c) acc[c] += w * v[c];
  });
  return acc;
}

HermitianMetricField::HermitianMetricField(TensorField t) : tensor_(std::move(t)) {
  if (tensor_.variance() != std::vector<Index>{Index::Down, Index::BarDown})
    throw std::invalid_argument("metric tensor must have variance (down, bar-down)");
}

HermitianMetricField::HermitianMetricField(GridPtr grid, int margin)
    : tensor_(std::move(grid), {Index::Down, Index::BarDown}, margin) {}

HermitianMetricField HermitianMetricField::from_function(
    GridPtr grid, const std::function<CMat(const RealPoint&)>& g) {
  HermitianMetricField out(grid, 0);
  for (std::size_t node = 0; node < grid->size(); ++node) out.set(node, g(grid->point(node)));
  return out;
}

CMat HermitianMetricField::at(std::size_t node) const {
  const int n = this->n();
  const auto v = tensor_.at(node);
  CMat g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g(i, j) = v[i * n + j];
  return g;
}

void HermitianMetricField::set(std::size_t node, const CMat& g) {
  const int n = this->n();
  auto v = tensor_.at(node);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) v[i * n + j] = g(i, j);
}

void HermitianMetricField::validate(double hermitian_tol) const {
  const auto& g = grid();
  for (std::size_t node = 0; node < g.size(); ++node) {
    if (!g.in_ball(node) || !valid(node)) continue;
    const CMat a = at(node);
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    if ((a - a.adjoint()).cwiseAbs().maxCoeff() > hermitian_tol * scale) {
      std::ostringstream os;
      os << "metric not Hermitian at node " << node;
      throw std::domain_error(os.str());
    }
    if (!(min_eigenvalue(a) > 0.0)) {
      std::ostringstream os;
      os << "metric not positive definite at node " << node << " (min eigenvalue "
         << min_eigenvalue(a) << ")";
      throw std::domain_error(os.str());
    }
  }
}

std::vector<CVec> read_points_csv(const std::string& path, int n) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<CVec> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::vector<double> vals;
    std::string cell;
    while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    if (static_cast<int>(vals.size()) != 2 * n)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected " +
                               std::to_string(2 * n) + " columns");
    CVec z(n);
    for (int k = 0; k < n; ++k) z(k) = cd(vals[2 * k], vals[2 * k + 1]);
    out.push_back(z);
  }
  return out;
}

void write_points_csv(const std::string& path, std::span<const CVec> points) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << std::setprecision(17);
  for (const auto& z : points) {
    for (int k = 0; k < z.size(); ++k) {
      if (k) out << ',';
      out << z(k).real() << ',' << z(k).imag();
    }
    out << '\n';
  }
}

void write_field(const std::string& stem, const ScalarField& f) {
  const auto& g = f.grid();
  const std::string csv = stem + ".csv";
  nlohmann::json header = {{"format", "cma-field-v1"},
                           {"n", g.n()},
                           {"m", g.m()},
                           {"pad", g.pad()},
                           {"spacing", g.spacing()},
                           {"margin", f.margin()},
                           {"layout", "row-major"},
                           {"count", g.size()},
                           {"values", std::filesystem::path(csv).filename().string()}};
  std::ofstream hj(stem + ".json");
  if (!hj) throw std::runtime_error("cannot write " + stem + ".json");
  hj << header.dump(2) << '\n';
  std::ofstream out(csv);
  if (!out) throw std::runtime_error("cannot write " + csv);
  out << std::setprecision(17);
  for (double v : f.values()) out << v << '\n';
}

ScalarField read_field(const std::string& stem) {
  std::ifstream hj(stem + ".json");
  if (!hj) throw std::runtime_error("cannot open " + stem + ".json");
  const auto header = nlohmann::json::parse(hj);
  auto grid = make_grid(header.at("n").get<int>(), header.at("m").get<int>(),
                        header.at("pad").get<int>());
  ScalarField f(grid, header.at("margin").get<int>());
  const auto dir = std::filesystem::path(stem).parent_path();
  const auto csv = (dir / header.at("values").get<std::string>()).string();
  std::ifstream in(csv);
  if (!in) throw std::runtime_error("cannot open " + csv);
  std::string line;
  std::size_t i = 0;
  while (std::getline(in, line) && i < f.values().size()) f[i++] = std::stod(line);
  if (i != f.values().size())
    throw std::runtime_error(csv + ": expected " + std::to_string(f.values().size()) +
                             " values, found " + std::to_string(i));
  return f;
}

}  // namespace cma
