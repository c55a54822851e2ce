// Command-line front end: runs scenario pipelines and writes reports.
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cma/report.hpp"

namespace {

struct Flags {
  std::string scenario;
  std::string out = "out";
  std::string solution;
  std::uint64_t seed = 0;
  int grid = 0;
  double tol = 0.0;
  bool quiet = false;
};

void print_summary(const cma::EstimateReport& rep, const std::string& out) {
  std::cout << "scenario " << rep.scenario << "  n=" << rep.n << " m=" << rep.m << " seed=" << rep.seed << '\n';
  for (const auto& s : rep.stages) {
    std::size_t ok = 0;
    for (const auto& c : s.checks) ok += c.pass();
    std::cout << "  " << cma::to_string(s.stage) << ": " << cma::to_string(s.status) << " (" << ok << "/"
              << s.checks.size() << " checks, " << s.seconds << " s)";
    if (!s.message.empty()) std::cout << "  " << s.message;
    std::cout << '\n';
    for (const auto& c : s.checks)
      if (!c.pass())
        std::cout << "    FAIL " << c.name << ": " << c.value << (c.upper ? " > " : " < ") << c.limit << '\n';
  }
  std::cout << (rep.pass() ? "PASS" : "FAIL") << "  report: " << out << "/report.json\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dirichlet problem for the complex Monge-Ampere equation on the unit ball: solver and estimate checks"};
  app.require_subcommand(1);
  Flags f;
  struct Sub {
    const char* name;
    const char* help;
  };
  const std::vector<Sub> subs = {
      {"solve", "solve the Dirichlet problem and write the solution field"},
      {"verify-interior", "interior C^{1,1} certificate (solves first unless --solution is given)"},
      {"verify-calabi", "third-order quantity S, its variants and the elliptic fit"},
      {"check-identities", "connection and Bianchi identity residuals under refinement"},
      {"lp-ladder", "L^p norms of S along the shrinking-ball ladder"},
      {"run", "the scenario's full pipeline"},
  };
  std::vector<CLI::App*> apps;
  std::vector<CLI::Option*> seed_opts, grid_opts, tol_opts, sol_opts;
  for (const auto& s : subs) {
    auto* sub = app.add_subcommand(s.name, s.help);
    sub->add_option("--scenario", f.scenario, "scenario JSON file")->required();
    sub->add_option("--out", f.out, "output directory for report.json and CSVs")->capture_default_str();
    seed_opts.push_back(sub->add_option("--seed", f.seed, "override the scenario seed"));
    grid_opts.push_back(sub->add_option("--grid", f.grid, "override nodes per axis m"));
    tol_opts.push_back(sub->add_option("--tol", f.tol, "override the solver tolerance"));
    sol_opts.push_back(sub->add_option("--solution", f.solution, "solution field stem (skips solving)"));
    sub->add_flag("-q,--quiet", f.quiet, "no summary on stdout");
    apps.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  std::size_t which = 0;
  while (!apps[which]->parsed()) ++which;
  const std::string name = subs[which].name;

  cma::RunOptions opts;
  opts.out_dir = f.out;
  if (seed_opts[which]->count()) opts.seed = f.seed;
  if (grid_opts[which]->count()) opts.grid = f.grid;
  if (tol_opts[which]->count()) opts.tol = f.tol;
  if (sol_opts[which]->count()) opts.solution = f.solution;

  try {
    const auto sc = cma::Scenario::load(f.scenario);
    std::vector<cma::Stage> stages;
    if (name == "run") {
      stages = sc.pipeline;
      // a supplied solution replaces the solve stage
      if (opts.solution) std::erase(stages, cma::Stage::Solve);
    } else {
      const cma::Stage s = cma::stage_from_string(name);
      if (cma::needs_solution(s) && !opts.solution) stages.push_back(cma::Stage::Solve);
      stages.push_back(s);
    }
    const auto rep = cma::run(sc, stages, opts);
    if (!f.quiet) print_summary(rep, f.out);
    return rep.pass() ? 0 : 1;
  } catch (const cma::ScenarioError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
