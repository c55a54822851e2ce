#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cma/expr.hpp"
#include "cma/ma_solver.hpp"
#include "cma/metric.hpp"

namespace cma {

enum class Stage { Solve, VerifyInterior, VerifyCalabi, CheckIdentities, LpLadder };

std::string to_string(Stage s);
/// Throws ScenarioError on an unknown name.
Stage stage_from_string(const std::string& s);
bool needs_solution(Stage s);

/// Malformed or invalid scenario input. The message names the line or the
/// offending field.
struct ScenarioError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Scenario {
  std::string name;
  int n = 1;
  int m = 17;
  std::uint64_t seed = 0;
  MetricExpr omega;
  expr::Expr density;  // rho, or f when convention is ExpF
  DensityConvention convention = DensityConvention::PlainF;
  expr::Expr boundary;
  std::optional<expr::Expr> exact;  // known solution; rho may be derived from it
  bool density_from_exact = false;
  std::vector<Stage> pipeline;
  nlohmann::json options = nlohmann::json::object();  // keyed by stage name

  static Scenario from_json(const nlohmann::json& j);
  /// Parse errors carry the line and column.
  static Scenario load(const std::string& path);

  DirichletProblem problem(int m) const;
  /// options[stage][key], or `fallback` when absent.
  template <class T>
  T option(Stage s, const std::string& key, T fallback) const {
    const auto st = to_string(s);
    if (!options.contains(st) || !options[st].contains(key)) return fallback;
    return options[st][key].get<T>();
  }
};

/// A pass/fail flag with the number behind it. margin >= 0 iff pass.
struct Check {
  std::string name;
  double value = 0.0;
  double limit = 0.0;
  bool upper = true;  // value <= limit; otherwise value >= limit

  double margin() const { return upper ? limit - value : value - limit; }
  bool pass() const;
};

struct Table {
  std::string name;  // file stem
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

enum class StageStatus { Pass, Fail, Skipped, Error };
std::string to_string(StageStatus s);

struct StageResult {
  Stage stage = Stage::Solve;
  StageStatus status = StageStatus::Pass;
  std::string message;
  std::vector<Check> checks;
  nlohmann::json results = nlohmann::json::object();
  std::vector<Table> tables;
  std::vector<std::string> artifacts;  // relative to the output directory
  double seconds = 0.0;
};

struct EstimateReport {
  std::string scenario;
  std::uint64_t seed = 0;
  int n = 1;
  int m = 17;
  std::vector<StageResult> stages;
  double seconds = 0.0;

  bool pass() const;
  const StageResult* find(Stage s) const;
  /// Timings go under "timings" only, so reports compare equal without them.
  nlohmann::json to_json(bool with_timings = true) const;
};

struct RunOptions {
  std::string out_dir;  // empty: nothing written
  std::optional<std::string> solution;  // field stem, replaces the solve stage
  std::optional<std::uint64_t> seed;
  std::optional<int> grid;
  std::optional<double> tol;
};

std::string version_string();

/// Runs `stages` in order. A stage needing the solution is skipped when it is
/// unavailable. Writes report.json, the solution field and the plot CSVs into
/// opts.out_dir when set. Throws ScenarioError on bad overrides or an
/// unreadable solution file.
EstimateReport run(const Scenario& sc, const std::vector<Stage>& stages, const RunOptions& opts = {});
EstimateReport run(const std::string& scenario_file, const RunOptions& opts = {});

/// One CSV per table, <dir>/<table>.csv, doubles printed with 17 significant
/// digits. Returns the paths written; I/O failures throw std::runtime_error
/// with the system message.
std::vector<std::string> emit_plot_data(const EstimateReport& report, const std::string& dir);

}  // namespace cma
