#pragma once

// Scenario files, the run pipeline behind `fblab run`, and the cross-run report.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fblab/diagnostics.hpp"

namespace fblab {

struct Scenario {
  std::string name = "scenario";
  int dim = 2;
  double lo = -1.0;
  double hi = 1.0;
  double h = 1.0 / 64;

  /// identity, scaled_identity, holder_bump, rotated_anisotropic or perturbed
  std::string coefficients = "identity";
  double epsilon = 0.1;
  double exponent = 0.5;
  Point bump_center;
  double aniso_a = 1.0;
  double aniso_b = 2.0;

  /// constant or checkerboard; the checkerboard alternates q+ between q_plus and q_plus_alt.
  std::string phases = "constant";
  double q_plus = 1.0;
  double q_minus = 1.0;
  double q_plus_alt = 2.0;
  int checker_cells = 4;

  /// u_b = slope x1 + offset + amplitude sin(pi x2), clipped at 0 for one-phase runs.
  double slope = 1.0;
  double offset = 0.0;
  double amplitude = 0.0;

  /// closed_form evaluates u_b everywhere; minimize solves for J or J^+.
  std::string mode = "minimize";
  bool plus_only = false;
  /// Coarsest spacing of a grid continuation ending at h.
  std::optional<double> warm_start;
  int max_iterations = 20000;

  bool certify = true;
  double alpha = 0.5;
  int probes = 24;

  int lattice = 3;
  double lattice_extent = 0.5;
  std::vector<double> radii{0.01, 0.05, 0.1};
  GClassParams g;
  std::optional<Point> acf_anchor;
  std::vector<double> acf_radii{0.05, 0.1, 0.15, 0.2, 0.25, 0.3};
  /// Defaults to alpha / (8 (n + 1)).
  std::optional<double> delta;
  Point lipschitz_center;
  double lipschitz_r0 = 0.25;
  int log_depth = 4;

  std::optional<double> omega_tolerance;
  std::optional<double> acf_spread_tolerance;
  std::optional<double> max_kappa_hat;
  std::optional<double> max_lipschitz_ratio;
  std::optional<double> max_continuity_modulus;
  bool check_sign_locality = false;

  double acf_delta() const { return delta ? *delta : alpha / (8.0 * (dim + 1)); }
};

/// Parses INI text with sections [scenario], [coefficients], [phases], [boundary], [solve],
/// [certificate], [diagnostics] and [checks].  Unknown keys and out-of-range values throw
/// ConfigError.
Scenario parse_scenario(std::istream& in);
Scenario load_scenario(const std::filesystem::path& path);

/// Decimal or "a/b"; ConfigError otherwise.
double parse_number(const std::string& key, const std::string& text);

/// The same scenario on another grid spacing, validated again.
Scenario with_spacing(const Scenario& s, double h);

/// The scenario with every key spelled out, in the input format.
std::string echo_scenario(const Scenario& s);

struct Problem {
  Grid grid;
  CoefficientField A;
  PhaseWeights q;
  ScalarField boundary;
};

/// Builds the fields; recipe errors surface as ConfigError.
Problem build_problem(const Scenario& s);

struct RunOutcome {
  nlohmann::json summary;
  bool pass = true;
};

/// Produces the field, the certificate and all diagnostics and writes them under out.
RunOutcome run_scenario(const Scenario& s, const Problem& p, const std::filesystem::path& out, int threads);

struct ReportTables {
  /// Diagnostics rows of every run prefixed by scenario and h.
  std::string diagnostics_csv;
  /// Fitted constants per run with ratios to the next coarser run of the same scenario.
  std::string constants_csv;
};

/// Throws FormatError listing every missing file when a run directory is incomplete.
ReportTables merge_runs(const std::vector<std::filesystem::path>& runs);

}  // namespace fblab
