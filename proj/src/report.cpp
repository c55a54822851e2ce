#include "cma/report.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>

#include "cma/barrier.hpp"
#include "cma/calabi.hpp"
#include "cma/geometry.hpp"

#ifndef CMA_VERSION
#define CMA_VERSION "0.0.0"
#endif

namespace cma {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const std::map<std::string, std::set<std::string>>& option_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"solve", {"tol", "max_newton", "convergence_grids", "order_min", "order_max", "exact_floor"}},
      {"verify-interior",
       {"eta", "pairs", "points", "barrier_pairs", "polish", "slack_c", "family", "refine", "max_refine_delta",
        "max_quotient"}},
      {"verify-calabi", {"radius", "slack_c", "with_norms", "deviation_c", "max_S"}},
      {"check-identities", {"grids", "radius", "potential", "min_order", "floor", "expect_kahler"}},
      {"lp-ladder", {"R", "R0", "m", "steps", "max_gap"}},
  };
  return keys;
}

void only_keys(const json& j, const std::string& path, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ScenarioError("field '" + path + "': expected an object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw ScenarioError("field '" + path + "." + k + "': unknown key");
}

const json& require(const json& j, const std::string& key, const std::string& path) {
  if (!j.contains(key)) throw ScenarioError("field '" + path + key + "': missing");
  return j[key];
}

expr::Expr parse_expr(const json& j, const std::string& field, int n) {
  expr::Expr e;
  try {
    e = expr::Expr::from_json(j);
  } catch (const std::exception& ex) {
    throw ScenarioError("field '" + field + "': " + ex.what());
  }
  if (e.max_axis() >= 2 * n)
    throw ScenarioError("field '" + field + "': uses a coordinate beyond complex dimension " + std::to_string(n));
  return e;
}

ScalarFunction to_function(const expr::Expr& e) {
  return [e](const RealPoint& x) { return e.eval(x); };
}

void check_option_types(const json& opts) {
  static const std::set<std::string> integers = {"max_newton", "pairs", "points", "barrier_pairs", "polish", "steps"};
  static const std::set<std::string> booleans = {"refine", "with_norms", "expect_kahler"};
  static const std::set<std::string> lists = {"convergence_grids", "grids"};
  static const std::set<std::string> strings = {"family"};
  for (const auto& [stage, o] : opts.items()) {
    for (const auto& [k, v] : o.items()) {
      const std::string field = "options." + stage + "." + k;
      if (integers.count(k)) {
        if (!v.is_number_integer() || v.get<long long>() < 0)
          throw ScenarioError("field '" + field + "': expected a non-negative integer");
      } else if (booleans.count(k)) {
        if (!v.is_boolean()) throw ScenarioError("field '" + field + "': expected true or false");
      } else if (lists.count(k)) {
        if (!v.is_array() || v.size() < 2) throw ScenarioError("field '" + field + "': expected at least two grid sizes");
        for (std::size_t i = 0; i < v.size(); ++i) {
          if (!v[i].is_number_integer() || v[i].get<int>() < 5)
            throw ScenarioError("field '" + field + "': grid sizes must be integers >= 5");
          if (i > 0 && v[i].get<int>() <= v[i - 1].get<int>())
            throw ScenarioError("field '" + field + "': grid sizes must increase");
        }
      } else if (strings.count(k)) {
        if (!v.is_string()) throw ScenarioError("field '" + field + "': expected a string");
      } else if (k == "potential") {
        if (!v.is_string() && !v.is_object() && !v.is_number())
          throw ScenarioError("field '" + field + "': expected an expression");
      } else if (!v.is_number()) {
        throw ScenarioError("field '" + field + "': expected a number");
      }
    }
  }
  if (opts.contains("verify-interior") && opts["verify-interior"].contains("family")) {
    const auto f = opts["verify-interior"]["family"].get<std::string>();
    if (f != "involution" && f != "outer-product")
      throw ScenarioError("field 'options.verify-interior.family': expected \"involution\" or \"outer-product\"");
  }
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// NaN and inf are not JSON numbers; they are written as null.
json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

// ---------------------------------------------------------------- stages

std::string to_string(Stage s) {
  switch (s) {
    case Stage::Solve: return "solve";
    case Stage::VerifyInterior: return "verify-interior";
    case Stage::VerifyCalabi: return "verify-calabi";
    case Stage::CheckIdentities: return "check-identities";
    case Stage::LpLadder: return "lp-ladder";
  }
  return "?";
}

Stage stage_from_string(const std::string& s) {
  for (Stage st : {Stage::Solve, Stage::VerifyInterior, Stage::VerifyCalabi, Stage::CheckIdentities, Stage::LpLadder})
    if (to_string(st) == s) return st;
  throw ScenarioError("unknown stage '" + s + "'");
}

bool needs_solution(Stage s) {
  return s == Stage::VerifyInterior || s == Stage::VerifyCalabi || s == Stage::LpLadder;
}

std::string to_string(StageStatus s) {
  switch (s) {
    case StageStatus::Pass: return "pass";
    case StageStatus::Fail: return "fail";
    case StageStatus::Skipped: return "skipped";
    case StageStatus::Error: return "error";
  }
  return "?";
}

// ---------------------------------------------------------------- scenario

Scenario Scenario::from_json(const json& j) {
  if (!j.is_object()) throw ScenarioError("scenario: expected a JSON object at top level");
  only_keys(j, "scenario", {"name", "seed", "grid", "problem", "pipeline", "options", "description"});
  Scenario sc;
  const auto& name = require(j, "name", "");
  if (!name.is_string() || name.get<std::string>().empty())
    throw ScenarioError("field 'name': expected a non-empty string");
  sc.name = name.get<std::string>();
  for (char c : sc.name)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.'))
      throw ScenarioError("field 'name': only letters, digits, '-', '_' and '.' are allowed");

  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw ScenarioError("field 'seed': expected a non-negative integer");
    sc.seed = j["seed"].get<std::uint64_t>();
  }

  const auto& grid = require(j, "grid", "");
  only_keys(grid, "grid", {"n", "m"});
  const auto& n = require(grid, "n", "grid.");
  const auto& m = require(grid, "m", "grid.");
  if (!n.is_number_integer() || (n.get<int>() != 1 && n.get<int>() != 2))
    throw ScenarioError("field 'grid.n': expected 1 or 2");
  if (!m.is_number_integer() || m.get<int>() < 5) throw ScenarioError("field 'grid.m': expected an integer >= 5");
  sc.n = n.get<int>();
  sc.m = m.get<int>();

  const auto& prob = require(j, "problem", "");
  only_keys(prob, "problem", {"omega", "density", "convention", "boundary", "exact"});
  try {
    sc.omega = prob.contains("omega") ? MetricExpr::from_json(prob["omega"], sc.n) : MetricExpr::euclidean(sc.n);
  } catch (const std::exception& e) {
    throw ScenarioError(std::string("field 'problem.omega': ") + e.what());
  }
  for (const auto& c : sc.omega.upper)
    if (c.re.max_axis() >= 2 * sc.n || c.im.max_axis() >= 2 * sc.n)
      throw ScenarioError("field 'problem.omega': uses a coordinate beyond complex dimension " +
                          std::to_string(sc.n));
  if (prob.contains("exact")) sc.exact = parse_expr(prob["exact"], "problem.exact", sc.n);
  if (prob.contains("convention")) {
    const auto& c = prob["convention"];
    if (c == "plain") sc.convention = DensityConvention::PlainF;
    else if (c == "exp") sc.convention = DensityConvention::ExpF;
    else throw ScenarioError("field 'problem.convention': expected \"plain\" or \"exp\"");
  }
  if (!prob.contains("density")) {
    if (sc.exact) sc.density_from_exact = true;
    else sc.density = expr::Expr(1.0);
  } else if (prob["density"] == "from_exact") {
    if (!sc.exact) throw ScenarioError("field 'problem.density': \"from_exact\" needs 'problem.exact'");
    sc.density_from_exact = true;
  } else {
    sc.density = parse_expr(prob["density"], "problem.density", sc.n);
  }
  if (sc.density_from_exact && sc.convention != DensityConvention::PlainF)
    throw ScenarioError("field 'problem.convention': a density derived from the exact solution is plain");
  if (prob.contains("boundary")) sc.boundary = parse_expr(prob["boundary"], "problem.boundary", sc.n);
  else if (sc.exact) sc.boundary = *sc.exact;
  else throw ScenarioError("field 'problem.boundary': missing (and no 'problem.exact' to take it from)");

  const auto& pipe = require(j, "pipeline", "");
  if (!pipe.is_array() || pipe.empty()) throw ScenarioError("field 'pipeline': expected a non-empty list of stages");
  for (std::size_t i = 0; i < pipe.size(); ++i) {
    const std::string field = "pipeline[" + std::to_string(i) + "]";
    if (!pipe[i].is_string()) throw ScenarioError("field '" + field + "': expected a stage name");
    try {
      sc.pipeline.push_back(stage_from_string(pipe[i].get<std::string>()));
    } catch (const ScenarioError& e) {
      throw ScenarioError("field '" + field + "': " + e.what());
    }
  }

  if (j.contains("options")) {
    const auto& o = j["options"];
    if (!o.is_object()) throw ScenarioError("field 'options': expected an object");
    for (const auto& [stage, v] : o.items()) {
      if (!option_keys().count(stage)) throw ScenarioError("field 'options." + stage + "': unknown stage");
      only_keys(v, "options." + stage, option_keys().at(stage));
    }
    check_option_types(o);
    if (o.contains("check-identities") && o["check-identities"].contains("potential"))
      parse_expr(o["check-identities"]["potential"], "options.check-identities.potential", sc.n);
    sc.options = o;
  }
  return sc;
}

Scenario Scenario::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError(path + ": cannot open (" + std::strerror(errno) + ")");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ScenarioError(path + ": " + e.what());
  }
  try {
    return from_json(j);
  } catch (const ScenarioError& e) {
    throw ScenarioError(path + ": " + e.what());
  }
}

DirichletProblem Scenario::problem(int m) const {
  auto grid = make_grid(n, m);
  ScalarFunction rho;
  if (density_from_exact) {
    const MetricExpr solved = omega.plus_hessian(*exact);
    const MetricExpr base = omega;
    rho = [solved, base](const RealPoint& x) {
      return (solved.eval(x).determinant() / base.eval(x).determinant()).real();
    };
  } else {
    rho = to_function(density);
  }
  return make_problem(grid, omega.function(), rho, to_function(boundary), convention);
}

// ---------------------------------------------------------------- report

bool Check::pass() const { return std::isfinite(value) && margin() >= 0.0; }

bool EstimateReport::pass() const {
  if (stages.empty()) return false;
  for (const auto& s : stages)
    if (s.status != StageStatus::Pass) return false;
  return true;
}

const StageResult* EstimateReport::find(Stage s) const {
  for (const auto& r : stages)
    if (r.stage == s) return &r;
  return nullptr;
}

std::string version_string() { return CMA_VERSION; }

json EstimateReport::to_json(bool with_timings) const {
  json j;
  j["format"] = "cma-report-v1";
  j["scenario"] = scenario;
  j["seed"] = seed;
  j["grid"] = {{"n", n}, {"m", m}};
  j["versions"] = {{"cma", version_string()},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)},
                   {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                         std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                         std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
  j["pass"] = pass();
  json st = json::array();
  json timings = json::object();
  for (const auto& s : stages) {
    json e;
    e["stage"] = cma::to_string(s.stage);
    e["status"] = cma::to_string(s.status);
    e["message"] = s.message;
    json checks = json::array();
    for (const auto& c : s.checks)
      checks.push_back({{"name", c.name},
                        {"value", number(c.value)},
                        {"limit", number(c.limit)},
                        {"relation", c.upper ? "<=" : ">="},
                        {"margin", number(c.margin())},
                        {"pass", c.pass()}});
    e["checks"] = checks;
    e["results"] = s.results;
    json tables = json::array();
    for (const auto& t : s.tables) tables.push_back({{"name", t.name}, {"columns", t.columns}, {"rows", t.rows.size()}});
    e["tables"] = tables;
    e["artifacts"] = s.artifacts;
    st.push_back(e);
    timings[cma::to_string(s.stage)] = s.seconds;
  }
  j["stages"] = st;
  if (with_timings) {
    timings["total"] = seconds;
    j["timings"] = timings;
  }
  return j;
}

std::vector<std::string> emit_plot_data(const EstimateReport& report, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir + ": " + ec.message());
  std::vector<std::string> written;
  for (const auto& s : report.stages) {
    for (const auto& t : s.tables) {
      const std::string path = (fs::path(dir) / (t.name + ".csv")).string();
      std::ofstream out(path, std::ios::binary);
      if (!out) throw std::runtime_error("cannot write " + path + ": " + std::strerror(errno));
      for (std::size_t c = 0; c < t.columns.size(); ++c) out << (c ? "," : "") << t.columns[c];
      out << '\n';
      for (const auto& row : t.rows) {
        for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << format_double(row[c]);
        out << '\n';
      }
      out.close();
      if (!out) throw std::runtime_error("error writing " + path + ": " + std::strerror(errno));
      written.push_back(path);
    }
  }
  return written;
}

namespace {

struct RunState {
  const Scenario& sc;
  int m;
  std::uint64_t seed;
  double tol;
  std::string out;
  DirichletProblem problem;
  std::optional<ScalarField> u;
  std::optional<ScalarField> S;  // connection variant left by verify-calabi
};

template <class T>
T opt(const RunState& st, Stage s, const std::string& key, T fallback) {
  return st.sc.option<T>(s, key, fallback);
}

std::vector<double> coords(const BallGrid& g, std::size_t node) {
  const RealPoint x = g.point(node);
  return std::vector<double>(x.begin(), x.begin() + g.dim());
}

std::vector<std::string> coord_columns(int n) {
  std::vector<std::string> c;
  for (int k = 1; k <= n; ++k) {
    c.push_back("x" + std::to_string(k));
    c.push_back("y" + std::to_string(k));
  }
  return c;
}

bool within(const BallGrid& g, std::size_t node, double radius) {
  return g.in_ball(node) && g.complex_point(node).norm() <= radius + 1e-12;
}

double max_error(const ScalarField& u, const expr::Expr& exact) {
  const auto& g = u.grid();
  double e = 0.0;
  for (std::size_t node = 0; node < g.size(); ++node)
    if (g.in_ball(node)) e = std::max(e, std::abs(u[node] - exact.eval(g.point(node))));
  return e;
}

double order(double e_coarse, double e_fine, double h_coarse, double h_fine) {
  return std::log(e_coarse / e_fine) / std::log(h_coarse / h_fine);
}

json history(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(number(x));
  return a;
}

void run_solve(RunState& st, StageResult& r) {
  const Stage s = Stage::Solve;
  SolverOptions so;
  so.tol = st.tol;
  so.max_newton = opt(st, s, "max_newton", so.max_newton);
  const auto sol = solve(st.problem, so);
  r.results = {{"converged", sol.converged},
               {"message", sol.message},
               {"iterations", sol.iterations},
               {"continuation_stages", sol.continuation_stages},
               {"residual_norm", number(sol.residual_norm)},
               {"min_eig_interior", number(sol.min_eig_interior)},
               {"residual_history", history(sol.residual_history)}};
  r.checks.push_back({"residual max-norm", sol.residual_norm, so.tol, true});
  r.checks.push_back({"least eigenvalue of omega + Hess u", sol.min_eig_interior, 0.0, false});
  if (sol.converged) st.u = sol.u;
  else r.message = sol.message;

  if (!st.sc.exact) return;
  const double err = max_error(sol.u, *st.sc.exact);
  r.results["max_error"] = number(err);

  if (!st.sc.options.contains("solve") || !st.sc.options["solve"].contains("convergence_grids")) return;
  const auto grids = st.sc.options["solve"]["convergence_grids"].get<std::vector<int>>();
  Table t{"convergence", {"m", "spacing", "max_error", "order"}, {}};
  std::vector<double> errs, hs;
  int unconverged = 0;
  for (int m : grids) {
    double e = err;
    if (m != st.m) {
      const auto other = solve(st.sc.problem(m), so);
      if (!other.converged) ++unconverged;
      e = max_error(other.u, *st.sc.exact);
    } else if (!sol.converged) {
      ++unconverged;
    }
    errs.push_back(e);
    hs.push_back(2.0 / (m - 1));
  }
  const double floor = opt(st, s, "exact_floor", 1e-9);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  json table = json::array();
  for (std::size_t i = 0; i < grids.size(); ++i) {
    const double o = i == 0 ? kNaN : order(errs[i - 1], errs[i], hs[i - 1], hs[i]);
    if (i > 0) lo = std::min(lo, o), hi = std::max(hi, o);
    t.rows.push_back({double(grids[i]), hs[i], errs[i], o});
    table.push_back({{"m", grids[i]}, {"spacing", hs[i]}, {"max_error", number(errs[i])}, {"order", number(o)}});
  }
  r.results["convergence"] = table;
  r.checks.push_back({"unconverged refinement solves", double(unconverged), 0.0, true});
  if (*std::max_element(errs.begin(), errs.end()) <= floor) {
    // the discretisation is exact for this solution, no order is observable
    r.checks.push_back({"max error on every grid", *std::max_element(errs.begin(), errs.end()), floor, true});
  } else {
    r.checks.push_back({"least observed order", lo, opt(st, s, "order_min", 1.7), false});
    r.checks.push_back({"largest observed order", hi, opt(st, s, "order_max", 2.3), true});
  }
  r.tables.push_back(std::move(t));
}

double k_sum(const ScalarFunction& phi, const DirichletProblem& p, const BarrierConfig& cfg, double& K1, double& K2) {
  K1 = estimate_K1(phi, cfg);
  K2 = estimate_K2(p.omega, p.density, cfg).value();
  return K1 + K2;
}

void run_verify_interior(RunState& st, StageResult& r) {
  const Stage s = Stage::VerifyInterior;
  const auto& p = st.problem;
  const int n = st.sc.n;
  auto cfg = make_barrier_config(n, opt(st, s, "eta", 0.2), opt<std::size_t>(st, s, "pairs", 1000),
                                 opt<std::size_t>(st, s, "points", 1000), st.seed);
  cfg.slack_c = opt(st, s, "slack_c", cfg.slack_c);
  cfg.barrier_pairs = opt(st, s, "barrier_pairs", cfg.barrier_pairs);
  cfg.polish = opt(st, s, "polish", cfg.polish);
  if (opt<std::string>(st, s, "family", "involution") == "outer-product") cfg.family = MobiusFamily::OuterProduct;
  cfg.K1 = estimate_K1(p.boundary, cfg);
  const auto k2 = estimate_K2(p.omega, p.density, cfg);
  cfg.K2 = k2.value();
  const auto cert = certify_interior_c11(*st.u, p, cfg);

  r.results = {{"eta", cfg.eta},
               {"pairs", cfg.pairs.size()},
               {"sphere_points", cfg.sphere.size()},
               {"ball_points", cfg.ball.size()},
               {"family", cfg.family == MobiusFamily::Involution ? "involution" : "outer-product"},
               {"K1", number(cert.K1)},
               {"K2", number(cert.K2)},
               {"K2_form", number(k2.form)},
               {"K2_density", number(k2.density)},
               {"sup_quotient", number(cert.sup_quotient)},
               {"slack", cert.slack},
               {"bound_holds", cert.bound_holds},
               {"pass", cert.pass},
               {"quotient_samples", cert.quotients.size()}};
  r.checks.push_back({"sup quotient <= K1 + K2 + slack", cert.sup_quotient, cert.K1 + cert.K2 + cert.slack, true});

  json barriers = json::array();
  for (std::size_t i = 0; i < cert.barriers.size(); ++i) {
    const auto& b = cert.barriers[i];
    const std::string tag = "barrier " + std::to_string(i) + ": ";
    barriers.push_back({{"a_norm", b.sample.a.norm()},
                        {"h_norm", b.sample.h.norm()},
                        {"checked_nodes", b.supersolution.checked},
                        {"skipped_nodes", b.supersolution.skipped},
                        {"deficit", number(b.supersolution.deficit)},
                        {"min_eig", number(b.supersolution.min_eig)},
                        {"form_min_eig", number(b.supersolution.form_min_eig)},
                        {"concavity_violation", number(b.supersolution.concavity_violation)},
                        {"transport_error", number(b.supersolution.transport_error)},
                        {"supersolution_failures", b.supersolution.failures},
                        {"comparison", to_string(b.comparison.outcome)},
                        {"failed_hypotheses", b.comparison.failed_hypotheses},
                        {"interior_excess", number(b.comparison.interior_excess)},
                        {"sphere_excess", number(b.sphere_excess)}});
    r.checks.push_back({tag + "supersolution deficit", b.supersolution.deficit, b.supersolution.slack, true});
    r.checks.push_back({tag + "supersolution failures", double(b.supersolution.failures.size()), 0.0, true});
    r.checks.push_back({tag + "comparison hypotheses not met", double(b.comparison.failed_hypotheses.size()), 0.0, true});
    r.checks.push_back({tag + "v - u on the interior", b.comparison.interior_excess, b.comparison.slack, true});
    r.checks.push_back({tag + "v - u on the sphere", b.sphere_excess, 1e-12, true});
  }
  r.results["barriers"] = barriers;

  if (st.sc.options.contains("verify-interior") && st.sc.options["verify-interior"].contains("max_quotient"))
    r.checks.push_back({"sup quotient", cert.sup_quotient, opt(st, s, "max_quotient", 0.0), true});

  if (opt(st, s, "refine", true)) {
    const auto fine = refine(cfg);
    double K1f = 0.0, K2f = 0.0;
    const double coarse = cert.K1 + cert.K2;
    const double sum = k_sum(p.boundary, p, fine, K1f, K2f);
    const double delta = sum > 0.0 ? std::abs(sum - coarse) / sum : std::abs(coarse);
    r.results["refined"] = {{"K1", number(K1f)}, {"K2", number(K2f)}, {"relative_delta", number(delta)}};
    r.checks.push_back({"K1 + K2 refinement delta", delta, opt(st, s, "max_refine_delta", 0.1), true});
  }

  std::vector<std::string> cols = {"h_norm"};
  for (int a = 1; a <= 2 * n; ++a) cols.push_back("offset_" + std::to_string(a));
  cols.push_back("sup");
  Table t{"quotients", cols, {}};
  for (const auto& q : cert.quotients) {
    std::vector<double> row = {q.h_norm};
    for (int o : q.offset) row.push_back(o);
    row.push_back(q.sup);
    t.rows.push_back(std::move(row));
  }
  r.tables.push_back(std::move(t));
}

void run_verify_calabi(RunState& st, StageResult& r) {
  const Stage s = Stage::VerifyCalabi;
  const double radius = opt(st, s, "radius", 0.5);
  const auto g = st.problem.omega_field();
  const auto d = diagnose_calabi(g, *st.u, radius, opt(st, s, "slack_c", 10.0), opt(st, s, "with_norms", false));
  const auto& grid = g.grid();
  const double h = grid.spacing();
  const double maxS = std::max({max_abs(d.S.direct, radius), max_abs(d.S.grad, radius), max_abs(d.S.conn, radius)});
  const double dev = d.S.max_relative_deviation(radius);
  r.results = {{"radius", radius},
               {"max_S", {{"direct", max_abs(d.S.direct, radius)},
                          {"grad", max_abs(d.S.grad, radius)},
                          {"conn", max_abs(d.S.conn, radius)}}},
               {"relative_deviation", number(dev)},
               {"lambda", number(d.lambda)},
               {"C1", number(d.fit.C1)},
               {"C2", number(d.fit.C2)},
               {"slack", d.fit.slack},
               {"min_defect", number(d.fit.min_defect)},
               {"fit_nodes", d.fit.nodes},
               {"bounded", d.fit.bounded},
               {"identities", {{"theta_difference", number(d.identities.theta_difference)},
                               {"conjugate_relation", number(d.identities.conjugate_relation)},
                               {"scale", number(d.identities.scale)}}}};
  if (opt(st, s, "with_norms", false))
    r.results["norms"] = {{"torsion", number(d.norms.torsion)},
                          {"torsion_derivative", number(d.norms.torsion_derivative)},
                          {"curvature", number(d.norms.curvature)},
                          {"curvature_derivative", number(d.norms.curvature_derivative)}};

  // a relative deviation means nothing once S is rounding noise
  constexpr double kVanishing = 1e-12;
  if (maxS <= kVanishing)
    r.checks.push_back({"max S (vanishing)", maxS, kVanishing, true});
  else
    r.checks.push_back({"S variant relative deviation", dev, 1e-6 + opt(st, s, "deviation_c", 10.0) * h * h, true});
  r.checks.push_back({"least elliptic defect", d.fit.min_defect, -d.fit.slack, false});
  r.checks.push_back({"C1 + C2 (finite)", d.fit.C1 + d.fit.C2, std::numeric_limits<double>::max(), true});
  if (st.sc.options.contains("verify-calabi") && st.sc.options["verify-calabi"].contains("max_S"))
    r.checks.push_back({"max S", maxS, opt(st, s, "max_S", 0.0), true});

  auto cols = coord_columns(grid.n());
  Table variants{"s_variants", cols, {}};
  variants.columns.insert(variants.columns.end(), {"direct", "grad", "conn"});
  Table defect{"defect", cols, {}};
  defect.columns.insert(defect.columns.end(), {"S", "lapS", "defect"});
  for (std::size_t node = 0; node < grid.size(); ++node) {
    if (!within(grid, node, radius)) continue;
    if (d.S.direct.valid(node) && d.S.grad.valid(node) && d.S.conn.valid(node)) {
      auto row = coords(grid, node);
      row.insert(row.end(), {d.S.direct[node], d.S.grad[node], d.S.conn[node]});
      variants.rows.push_back(std::move(row));
    }
    if (d.fit.defect.valid(node) && std::isfinite(d.fit.defect[node])) {
      auto row = coords(grid, node);
      row.insert(row.end(), {d.S.conn[node], d.fit.lapS[node], d.fit.defect[node]});
      defect.rows.push_back(std::move(row));
    }
  }
  r.tables.push_back(std::move(variants));
  r.tables.push_back(std::move(defect));
  st.S = d.S.conn;
}

void run_check_identities(RunState& st, StageResult& r) {
  const Stage s = Stage::CheckIdentities;
  const int n = st.sc.n;
  std::vector<int> grids = n == 1 ? std::vector<int>{33, 65} : std::vector<int>{9, 17};
  if (st.sc.options.contains("check-identities") && st.sc.options["check-identities"].contains("grids"))
    grids = st.sc.options["check-identities"]["grids"].get<std::vector<int>>();
  const double radius = opt(st, s, "radius", 0.6);
  expr::Expr psi = st.sc.boundary;
  if (st.sc.options.contains("check-identities") && st.sc.options["check-identities"].contains("potential"))
    psi = expr::Expr::from_json(st.sc.options["check-identities"]["potential"]);
  const MetricExpr tilde = st.sc.omega.plus_hessian(psi);

  const std::vector<std::string> names = {"theta_difference", "conjugate_relation", "bianchi_012",
                                          "bianchi_013",      "bianchi_014",        "torsion_omega"};
  Table t{"identities", {"m", "spacing"}, {}};
  t.columns.insert(t.columns.end(), names.begin(), names.end());
  std::vector<std::vector<double>> vals(names.size());
  std::vector<double> hs;
  json rows = json::array();
  for (int m : grids) {
    auto grid = make_grid(n, m);
    const auto g = sample_metric(grid, st.sc.omega.function());
    const auto gt = sample_metric(grid, tilde.function());
    gt.validate();
    const auto ci = connection_identities(g, gt, radius);
    const auto b = bianchi_residuals(gt, radius);
    const double T = max_abs(torsion(g), radius);
    const std::vector<double> v = {ci.theta_difference, ci.conjugate_relation, b.r012, b.r013, b.r014, T};
    std::vector<double> row = {double(m), grid->spacing()};
    json jr = {{"m", m}, {"spacing", grid->spacing()}};
    for (std::size_t q = 0; q < names.size(); ++q) {
      vals[q].push_back(v[q]);
      row.push_back(v[q]);
      jr[names[q]] = number(v[q]);
    }
    jr["curvature_max"] = number(b.curvature_max);
    jr["theta_scale"] = number(ci.scale);
    hs.push_back(grid->spacing());
    t.rows.push_back(std::move(row));
    rows.push_back(jr);
  }
  r.results = {{"radius", radius}, {"potential", psi.to_string()}, {"grids", rows}};

  const double floor = opt(st, s, "floor", 1e-10);
  const double min_order = opt(st, s, "min_order", 1.7);
  std::vector<std::string> checked = {"theta_difference", "bianchi_012", "bianchi_013", "bianchi_014"};
  if (opt(st, s, "expect_kahler", false)) checked.push_back("torsion_omega");
  json orders = json::object();
  for (std::size_t q = 0; q < names.size(); ++q) {
    double lo = std::numeric_limits<double>::infinity();
    json os = json::array();
    for (std::size_t i = 1; i < hs.size(); ++i) {
      const double o = order(vals[q][i - 1], vals[q][i], hs[i - 1], hs[i]);
      os.push_back(number(o));
      lo = std::min(lo, std::isnan(o) ? -std::numeric_limits<double>::infinity() : o);
    }
    orders[names[q]] = os;
    if (std::find(checked.begin(), checked.end(), names[q]) == checked.end()) continue;
    const double top = *std::max_element(vals[q].begin(), vals[q].end());
    if (top <= floor) r.checks.push_back({names[q] + " residual (rounding level)", top, floor, true});
    else r.checks.push_back({names[q] + " least order", lo, min_order, false});
  }
  r.results["orders"] = orders;
  r.tables.push_back(std::move(t));
}

void run_lp_ladder(RunState& st, StageResult& r) {
  const Stage s = Stage::LpLadder;
  const double R = opt(st, s, "R", 0.5), R0 = opt(st, s, "R0", 0.7);
  const auto g = st.problem.omega_field();
  const ScalarField S = st.S ? *st.S : calabi_S(g, *st.u, R0).conn;
  const auto rep = lp_ladder(S, g, R, R0, opt(st, s, "m", 2.0), opt(st, s, "steps", 12));
  Table t{"ladder", {"k", "q_k", "r_k", "norm"}, {}};
  json steps = json::array();
  for (const auto& k : rep.steps) {
    t.rows.push_back({double(k.k), k.q, k.r, k.norm});
    steps.push_back({{"k", k.k}, {"q", k.q}, {"r", k.r}, {"norm", number(k.norm)}});
  }
  r.results = {{"R", R},
               {"R0", R0},
               {"max_S", number(rep.max_S)},
               {"sup_norm", number(rep.sup_norm)},
               {"gap", number(rep.gap)},
               {"nondecreasing", rep.nondecreasing},
               {"steps", steps}};
  r.checks.push_back({"terminal norm vs max S (relative gap)", rep.gap, opt(st, s, "max_gap", 0.05), true});
  r.tables.push_back(std::move(t));
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

EstimateReport run(const Scenario& sc, const std::vector<Stage>& stages, const RunOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  if (stages.empty()) throw ScenarioError("no stages requested");
  if (opts.grid && *opts.grid < 5) throw ScenarioError("--grid: expected an integer >= 5");
  if (opts.tol && !(*opts.tol > 0.0)) throw ScenarioError("--tol: expected a positive number");
  bool have_solve = opts.solution.has_value();
  for (Stage s : stages) {
    if (needs_solution(s) && !have_solve)
      throw ScenarioError("pipeline: '" + to_string(s) + "' needs 'solve' earlier in the pipeline or a solution file");
    if (s == Stage::Solve) have_solve = true;
  }

  RunState st{sc,
              opts.grid.value_or(sc.m),
              opts.seed.value_or(sc.seed),
              opts.tol.value_or(sc.option(Stage::Solve, "tol", 1e-9)),
              opts.out_dir,
              {},
              std::nullopt,
              std::nullopt};
  st.problem = sc.problem(st.m);
  if (opts.solution) {
    try {
      auto u = read_field(*opts.solution);
      if (!u.grid().same_as(*st.problem.grid))
        throw ScenarioError("grid n=" + std::to_string(u.grid().n()) + ", m=" + std::to_string(u.grid().m()) +
                            " does not match the scenario (n=" + std::to_string(sc.n) +
                            ", m=" + std::to_string(st.m) + ")");
      // rebuild on the problem's grid object so grid checks see one instance
      ScalarField v(st.problem.grid, u.margin());
      std::copy(u.values().begin(), u.values().end(), v.values().begin());
      st.u = std::move(v);
    } catch (const std::exception& e) {
      throw ScenarioError("--solution " + *opts.solution + ": " + e.what());
    }
  }

  EstimateReport rep;
  rep.scenario = sc.name;
  rep.seed = st.seed;
  rep.n = sc.n;
  rep.m = st.m;
  for (Stage s : stages) {
    StageResult r;
    r.stage = s;
    if (needs_solution(s) && !st.u) {
      r.status = StageStatus::Skipped;
      r.message = "skipped: no converged solution available";
      rep.stages.push_back(std::move(r));
      continue;
    }
    const auto ts = std::chrono::steady_clock::now();
    try {
      switch (s) {
        case Stage::Solve: run_solve(st, r); break;
        case Stage::VerifyInterior: run_verify_interior(st, r); break;
        case Stage::VerifyCalabi: run_verify_calabi(st, r); break;
        case Stage::CheckIdentities: run_check_identities(st, r); break;
        case Stage::LpLadder: run_lp_ladder(st, r); break;
      }
      r.status = StageStatus::Pass;
      for (const auto& c : r.checks)
        if (!c.pass()) r.status = StageStatus::Fail;
      if (s == Stage::Solve && !st.u) r.status = StageStatus::Fail;
    } catch (const std::exception& e) {
      r.status = StageStatus::Error;
      r.message = e.what();
      r.tables.clear();
    }
    r.seconds = seconds_since(ts);
    if (s == Stage::Solve && st.u && !st.out.empty()) {
      fs::create_directories(st.out);
      const std::string stem = (fs::path(st.out) / "solution").string();
      write_field(stem, *st.u);
      r.artifacts = {"solution.json", "solution.csv"};
    }
    rep.stages.push_back(std::move(r));
  }
  rep.seconds = seconds_since(t0);

  if (!st.out.empty()) {
    const auto csvs = emit_plot_data(rep, st.out);
    const std::string path = (fs::path(st.out) / "report.json").string();
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path + ": " + std::strerror(errno));
    out << rep.to_json().dump(2) << '\n';
  }
  return rep;
}

EstimateReport run(const std::string& scenario_file, const RunOptions& opts) {
  const auto sc = Scenario::load(scenario_file);
  return run(sc, sc.pipeline, opts);
}

}  // namespace cma
