#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fblab/checkpoint.hpp"
#include "fblab/parallel.hpp"
#include "scenario.hpp"

namespace fs = std::filesystem;
using namespace fblab;

namespace {

enum Exit { ok = 0, checks_failed = 1, config_error = 2, run_error = 3 };

void log_error(const fs::path& out, const char* kind, const std::exception& e) {
  const nlohmann::json err = {{"error", kind}, {"message", e.what()}};
  std::cerr << err.dump() << "\n";
  std::error_code ec;
  if (fs::is_directory(out, ec)) std::ofstream(out / "error.json") << err.dump(2) << "\n";
}

int run(const std::string& config, const fs::path& out, int threads, const std::string& grid_h) {
  Scenario s;
  std::optional<Problem> problem;
  try {
    s = load_scenario(config);
    if (!grid_h.empty()) s = with_spacing(s, parse_number("--grid-h", grid_h));
    problem = build_problem(s);
  } catch (const ConfigError& e) {
    std::cerr << nlohmann::json{{"error", "config"}, {"message", e.what()}}.dump() << "\n";
    return config_error;
  }
  try {
    const RunOutcome r = run_scenario(s, *problem, out, resolve_threads(threads));
    std::cout << r.summary["checks"].dump() << "\n" << (r.pass ? "pass" : "fail") << "\n";
    return r.pass ? ok : checks_failed;
  } catch (const OutOfDomainError& e) {
    log_error(out, "out_of_domain", e);
  } catch (const ConvergenceError& e) {
    log_error(out, "convergence", e);
  } catch (const SolverFailureError& e) {
    log_error(out, "solver_failure", e);
  } catch (const std::exception& e) {
    log_error(out, "runtime", e);
  }
  return run_error;
}

int report(const std::vector<std::string>& dirs, const std::string& out) {
  try {
    std::vector<fs::path> runs(dirs.begin(), dirs.end());
    const ReportTables t = merge_runs(runs);
    if (!out.empty()) {
      fs::create_directories(out);
      std::ofstream(fs::path(out) / "diagnostics.csv") << t.diagnostics_csv;
      std::ofstream(fs::path(out) / "constants.csv") << t.constants_csv;
    }
    std::cout << t.constants_csv;
    return ok;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return config_error;
  }
}

int field_cat(const std::string& path) {
  try {
    const FieldHeader h = read_field_header(path);
    std::cout << "n=" << h.dim << "\nshape=";
    for (int a = 0; a < h.dim; ++a) std::cout << (a ? "," : "") << h.shape[a];
    std::cout << "\norigin=";
    for (int a = 0; a < h.dim; ++a) std::cout << (a ? "," : "") << format_double(h.origin[a]);
    std::cout << "\nh=" << format_double(h.spacing) << "\ncomponents=" << h.components
              << "\nkind=" << (h.components == 1 ? "scalar" : "matrix") << "\n";
    return ok;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return config_error;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Free boundary diagnostics lab"};
  app.require_subcommand(1);

  std::string config, out, report_out, field_path;
  int threads = 0;
  std::string grid_h;
  std::vector<std::string> runs;

  auto* run_cmd = app.add_subcommand("run", "Run a scenario");
  run_cmd->add_option("--config", config, "Scenario file")->required();
  run_cmd->add_option("--out", out, "Output directory")->required();
  run_cmd->add_option("--threads", threads, "Worker count (default FBLAB_THREADS or 1)");
  run_cmd->add_option("--grid-h", grid_h, "Override the grid spacing, e.g. 1/128");

  auto* report_cmd = app.add_subcommand("report", "Merge run directories");
  report_cmd->add_option("--runs", runs, "Run directories")->required();
  report_cmd->add_option("--out", report_out, "Write merged tables here");

  auto* field_cmd = app.add_subcommand("field", "Field checkpoint tools");
  field_cmd->require_subcommand(1);
  auto* cat_cmd = field_cmd->add_subcommand("cat", "Print a checkpoint header");
  cat_cmd->add_option("path", field_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : config_error;
  }
  if (*run_cmd) return run(config, out, threads, grid_h);
  if (*report_cmd) return report(runs, report_out);
  return field_cat(field_path);
}
