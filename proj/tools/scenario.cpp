#include "scenario.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "fblab/checkpoint.hpp"
#include "fblab/minimize.hpp"
#include "fblab/report.hpp"

namespace fblab {

namespace fs = std::filesystem;
using std::numbers::pi;

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\"");
  const auto e = s.find_last_not_of(" \t\r\"");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

double number(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  const auto slash = t.find('/');
  auto one = [&](const std::string& part) {
    double v = 0.0;
    const auto res = std::from_chars(part.data(), part.data() + part.size(), v);
    if (part.empty() || res.ec != std::errc() || res.ptr != part.data() + part.size() || !std::isfinite(v))
      throw ConfigError(key + ": not a number: '" + t + "'");
    return v;
  };
  if (slash == std::string::npos) return one(t);
  const double d = one(trim(t.substr(slash + 1)));
  if (d == 0.0) throw ConfigError(key + ": division by zero");
  return one(trim(t.substr(0, slash))) / d;
}

int integer(const std::string& key, const std::string& text) {
  const double v = number(key, text);
  if (v != std::round(v) || std::abs(v) > 1e9) throw ConfigError(key + ": not an integer: '" + trim(text) + "'");
  return static_cast<int>(v);
}

bool boolean(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError(key + ": not a boolean: '" + t + "'");
}

using Raw = std::map<std::string, std::vector<std::string>>;

const std::string& single(const std::string& key, const std::vector<std::string>& v) {
  if (v.size() != 1) throw ConfigError(key + ": expected a single value");
  return v.front();
}

std::vector<double> numbers(const std::string& key, const std::vector<std::string>& v) {
  std::vector<double> out;
  for (const auto& s : v) out.push_back(number(key, s));
  return out;
}

Point point(const std::string& key, const std::vector<std::string>& v, int dim) {
  const auto xs = numbers(key, v);
  if (static_cast<int>(xs.size()) != dim) throw ConfigError(key + ": expected " + std::to_string(dim) + " coordinates");
  return Eigen::Map<const Eigen::VectorXd>(xs.data(), dim);
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

std::string join(const std::vector<double>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? ", " : "") + format_number(xs[i]);
  return s;
}

std::string join(const Point& p) { return join(std::vector<double>(p.data(), p.data() + p.size())); }

bool power_of_two_ratio(double coarse, double fine) {
  const double k = std::log2(coarse / fine);
  return k >= 0.0 && std::abs(k - std::round(k)) < 1e-9;
}

}  // namespace

Scenario parse_scenario(std::istream& in) {
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_config(in);
  } catch (const CLI::Error& e) {
    throw ConfigError(std::string("unreadable config: ") + e.what());
  }
  Raw raw;
  for (const auto& it : items) {
    if (it.name == "++" || it.name == "--") continue;
    if (it.parents.size() != 1) throw ConfigError("key outside a section: " + it.name);
    const std::string key = it.parents.front() + "." + it.name;
    if (raw.count(key)) throw ConfigError("duplicate key " + key);
    std::vector<std::string> values;
    for (const auto& s : it.inputs) values.push_back(trim(s));
    raw[key] = values;
  }

  Scenario s;
  auto take = [&](const std::string& key) -> const std::vector<std::string>* {
    const auto it = raw.find(key);
    if (it == raw.end()) return nullptr;
    return &it->second;
  };
  auto num = [&](const std::string& key, double& dst) {
    if (auto v = take(key)) dst = number(key, single(key, *v));
  };
  auto opt = [&](const std::string& key, std::optional<double>& dst) {
    if (auto v = take(key)) {
      const std::string& t = single(key, *v);
      if (t == "none")
        dst.reset();
      else
        dst = number(key, t);
    }
  };
  auto integ = [&](const std::string& key, int& dst) {
    if (auto v = take(key)) dst = integer(key, single(key, *v));
  };
  auto flag = [&](const std::string& key, bool& dst) {
    if (auto v = take(key)) dst = boolean(key, single(key, *v));
  };
  auto text = [&](const std::string& key, std::string& dst, std::set<std::string> allowed) {
    if (auto v = take(key)) {
      dst = single(key, *v);
      if (!allowed.empty() && !allowed.count(dst)) throw ConfigError(key + ": unknown value '" + dst + "'");
    }
  };

  text("scenario.name", s.name, {});
  integ("scenario.dim", s.dim);
  require(s.dim == 2 || s.dim == 3, "scenario.dim must be 2 or 3");
  num("scenario.lo", s.lo);
  num("scenario.hi", s.hi);
  num("scenario.h", s.h);

  text("coefficients.recipe", s.coefficients,
       {"identity", "scaled_identity", "holder_bump", "rotated_anisotropic", "perturbed"});
  num("coefficients.epsilon", s.epsilon);
  num("coefficients.exponent", s.exponent);
  s.bump_center = Point::Zero(s.dim);
  if (auto v = take("coefficients.center")) s.bump_center = point("coefficients.center", *v, s.dim);
  num("coefficients.a", s.aniso_a);
  num("coefficients.b", s.aniso_b);

  text("phases.recipe", s.phases, {"constant", "checkerboard"});
  num("phases.q_plus", s.q_plus);
  num("phases.q_minus", s.q_minus);
  num("phases.q_plus_alt", s.q_plus_alt);
  integ("phases.cells", s.checker_cells);

  num("boundary.slope", s.slope);
  num("boundary.offset", s.offset);
  num("boundary.amplitude", s.amplitude);

  text("solve.mode", s.mode, {"closed_form", "minimize"});
  flag("solve.plus_only", s.plus_only);
  opt("solve.warm_start", s.warm_start);
  integ("solve.max_iterations", s.max_iterations);

  flag("certificate.enabled", s.certify);
  num("certificate.alpha", s.alpha);
  integ("certificate.probes", s.probes);

  integ("diagnostics.lattice", s.lattice);
  num("diagnostics.extent", s.lattice_extent);
  if (auto v = take("diagnostics.radii")) s.radii = numbers("diagnostics.radii", *v);
  num("diagnostics.tau", s.g.tau);
  num("diagnostics.c0", s.g.c0);
  num("diagnostics.c1", s.g.c1);
  num("diagnostics.r0", s.g.r0);
  if (auto v = take("diagnostics.acf_anchor")) {
    if (!(v->size() == 1 && v->front() == "auto")) s.acf_anchor = point("diagnostics.acf_anchor", *v, s.dim);
  }
  if (auto v = take("diagnostics.acf_radii")) s.acf_radii = numbers("diagnostics.acf_radii", *v);
  opt("diagnostics.delta", s.delta);
  s.lipschitz_center = Point::Zero(s.dim);
  if (auto v = take("diagnostics.lipschitz_center"))
    s.lipschitz_center = point("diagnostics.lipschitz_center", *v, s.dim);
  num("diagnostics.lipschitz_r0", s.lipschitz_r0);
  integ("diagnostics.log_depth", s.log_depth);

  opt("checks.omega_tolerance", s.omega_tolerance);
  opt("checks.acf_spread_tolerance", s.acf_spread_tolerance);
  opt("checks.max_kappa_hat", s.max_kappa_hat);
  opt("checks.max_lipschitz_ratio", s.max_lipschitz_ratio);
  opt("checks.max_continuity_modulus", s.max_continuity_modulus);
  flag("checks.sign_locality", s.check_sign_locality);

  static const std::set<std::string> known = {
      "scenario.name", "scenario.dim", "scenario.lo", "scenario.hi", "scenario.h", "coefficients.recipe",
      "coefficients.epsilon", "coefficients.exponent", "coefficients.center", "coefficients.a", "coefficients.b",
      "phases.recipe", "phases.q_plus", "phases.q_minus", "phases.q_plus_alt", "phases.cells", "boundary.slope",
      "boundary.offset", "boundary.amplitude", "solve.mode", "solve.plus_only", "solve.warm_start",
      "solve.max_iterations", "certificate.enabled", "certificate.alpha", "certificate.probes",
      "diagnostics.lattice", "diagnostics.extent", "diagnostics.radii", "diagnostics.tau", "diagnostics.c0",
      "diagnostics.c1", "diagnostics.r0", "diagnostics.acf_anchor", "diagnostics.acf_radii", "diagnostics.delta",
      "diagnostics.lipschitz_center", "diagnostics.lipschitz_r0", "diagnostics.log_depth", "checks.omega_tolerance",
      "checks.acf_spread_tolerance", "checks.max_kappa_hat", "checks.max_lipschitz_ratio",
      "checks.max_continuity_modulus", "checks.sign_locality"};
  for (const auto& [key, value] : raw)
    if (!known.count(key)) throw ConfigError("unknown key " + key);

  require(s.hi > s.lo, "scenario.hi must exceed scenario.lo");
  require(s.h > 0.0, "scenario.h must be positive");
  const double cells = (s.hi - s.lo) / s.h;
  require(cells >= 4 && std::abs(cells - std::round(cells)) < 1e-9, "scenario.h must divide hi - lo into >= 4 cells");
  if (s.warm_start) {
    require(power_of_two_ratio(*s.warm_start, s.h), "solve.warm_start must be h times a power of two");
    const double coarse = (s.hi - s.lo) / *s.warm_start;
    require(coarse >= 4 && std::abs(coarse - std::round(coarse)) < 1e-9, "solve.warm_start must divide hi - lo");
  }
  require(s.max_iterations > 0, "solve.max_iterations must be positive");
  require(s.q_plus >= 0 && s.q_minus >= 0 && s.q_plus_alt >= 0, "phase weights must be non-negative");
  require(s.checker_cells > 0, "phases.cells must be positive");
  require(s.aniso_a > 0 && s.aniso_b > 0, "coefficients.a and coefficients.b must be positive");
  require(s.exponent > 0 && s.exponent <= 1, "coefficients.exponent must lie in (0, 1]");
  require(s.alpha > 0 && s.alpha <= 1, "certificate.alpha must lie in (0, 1]");
  require(s.probes > 0, "certificate.probes must be positive");
  require(s.lattice > 0, "diagnostics.lattice must be positive");
  require(s.lattice_extent >= 0, "diagnostics.extent must be non-negative");
  require(!s.radii.empty(), "diagnostics.radii must not be empty");
  for (const double r : s.radii) require(r > 0, "diagnostics.radii must be positive");
  for (std::size_t k = 0; k < s.acf_radii.size(); ++k)
    require(s.acf_radii[k] > 0 && (k == 0 || s.acf_radii[k] > s.acf_radii[k - 1]),
            "diagnostics.acf_radii must be positive and ascending");
  require(s.acf_delta() > 0 && s.acf_delta() < s.alpha / (4.0 * (s.dim + 1)),
          "diagnostics.delta must lie in (0, alpha / (4 (n + 1)))");
  require(s.lipschitz_r0 > 0, "diagnostics.lipschitz_r0 must be positive");
  require(s.log_depth >= 0, "diagnostics.log_depth must be non-negative");
  try {
    s.g.validate();
  } catch (const PreconditionError& e) {
    throw ConfigError(std::string("diagnostics: ") + e.what());
  }
  if (s.mode == "closed_form") require(!s.warm_start, "solve.warm_start needs solve.mode = minimize");
  return s;
}

Scenario load_scenario(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  return parse_scenario(in);
}

std::string echo_scenario(const Scenario& s) {
  std::ostringstream o;
  auto opt = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string("none"); };
  o << "[scenario]\nname = " << s.name << "\ndim = " << s.dim << "\nlo = " << format_number(s.lo)
    << "\nhi = " << format_number(s.hi) << "\nh = " << format_number(s.h) << "\n\n";
  o << "[coefficients]\nrecipe = " << s.coefficients << "\nepsilon = " << format_number(s.epsilon)
    << "\nexponent = " << format_number(s.exponent) << "\ncenter = " << join(s.bump_center)
    << "\na = " << format_number(s.aniso_a) << "\nb = " << format_number(s.aniso_b) << "\n\n";
  o << "[phases]\nrecipe = " << s.phases << "\nq_plus = " << format_number(s.q_plus)
    << "\nq_minus = " << format_number(s.q_minus) << "\nq_plus_alt = " << format_number(s.q_plus_alt)
    << "\ncells = " << s.checker_cells << "\n\n";
  o << "[boundary]\nslope = " << format_number(s.slope) << "\noffset = " << format_number(s.offset)
    << "\namplitude = " << format_number(s.amplitude) << "\n\n";
  o << "[solve]\nmode = " << s.mode << "\nplus_only = " << (s.plus_only ? "true" : "false")
    << "\nwarm_start = " << opt(s.warm_start) << "\nmax_iterations = " << s.max_iterations << "\n\n";
  o << "[certificate]\nenabled = " << (s.certify ? "true" : "false") << "\nalpha = " << format_number(s.alpha)
    << "\nprobes = " << s.probes << "\n\n";
  o << "[diagnostics]\nlattice = " << s.lattice << "\nextent = " << format_number(s.lattice_extent)
    << "\nradii = " << join(s.radii) << "\ntau = " << format_number(s.g.tau) << "\nc0 = " << format_number(s.g.c0)
    << "\nc1 = " << format_number(s.g.c1) << "\nr0 = " << format_number(s.g.r0)
    << "\nacf_anchor = " << (s.acf_anchor ? join(*s.acf_anchor) : std::string("auto"))
    << "\nacf_radii = " << join(s.acf_radii) << "\ndelta = " << format_number(s.acf_delta())
    << "\nlipschitz_center = " << join(s.lipschitz_center) << "\nlipschitz_r0 = " << format_number(s.lipschitz_r0)
    << "\nlog_depth = " << s.log_depth << "\n\n";
  o << "[checks]\nomega_tolerance = " << opt(s.omega_tolerance)
    << "\nacf_spread_tolerance = " << opt(s.acf_spread_tolerance) << "\nmax_kappa_hat = " << opt(s.max_kappa_hat)
    << "\nmax_lipschitz_ratio = " << opt(s.max_lipschitz_ratio)
    << "\nmax_continuity_modulus = " << opt(s.max_continuity_modulus)
    << "\nsign_locality = " << (s.check_sign_locality ? "true" : "false") << "\n";
  return o.str();
}

double parse_number(const std::string& key, const std::string& text) { return number(key, text); }

Scenario with_spacing(const Scenario& s, double h) {
  std::string text = echo_scenario(s);
  const auto at = text.find("\nh = ");
  text.replace(at, text.find('\n', at + 1) - at, "\nh = " + format_number(h));
  std::istringstream in(text);
  return parse_scenario(in);
}

namespace {

Matrix scaled_identity(int dim, double f) { return f * Matrix::Identity(dim, dim); }

CoefficientField make_coefficients(const Scenario& s, const Grid& g) {
  const int dim = s.dim;
  const double eps = s.epsilon;
  if (s.coefficients == "identity") return CoefficientField::identity(g);
  if (s.coefficients == "scaled_identity") {
    require(std::abs(eps) < 1.0, "scaled_identity needs |epsilon| < 1");
    return CoefficientField::from_function(
        g, [&](const Point& x) { return scaled_identity(dim, 1.0 + eps * std::sin(pi * x[0]) * std::cos(pi * x[1])); },
        {1.0 - std::abs(eps), 1.0 + std::abs(eps), 1.0, std::abs(eps) * pi * std::sqrt(2.0)});
  }
  if (s.coefficients == "holder_bump") {
    const double reach = std::sqrt(static_cast<double>(dim)) * (s.hi - s.lo);
    const double top = eps * std::pow(reach, s.exponent);
    require(1.0 + std::min(0.0, top) > 0.0, "holder_bump must stay elliptic");
    return CoefficientField::from_function(
        g,
        [&](const Point& x) {
          return scaled_identity(dim, 1.0 + eps * std::pow((x - s.bump_center).norm(), s.exponent));
        },
        {1.0 + std::min(0.0, top), 1.0 + std::max(0.0, top), s.exponent, std::abs(eps)});
  }
  if (s.coefficients == "rotated_anisotropic") {
    const double a = s.aniso_a, b = s.aniso_b;
    return CoefficientField::from_function(
        g,
        [&](const Point& x) {
          const double t = eps * pi * (x[0] + x[1]);
          Matrix R = Matrix::Identity(dim, dim);
          R(0, 0) = std::cos(t);
          R(0, 1) = -std::sin(t);
          R(1, 0) = std::sin(t);
          R(1, 1) = std::cos(t);
          Matrix D = b * Matrix::Identity(dim, dim);
          D(0, 0) = a;
          return Matrix(R * D * R.transpose());
        },
        {std::min(a, b), std::max(a, b), 1.0, 2.0 * std::abs(a - b) * std::abs(eps) * pi * std::sqrt(2.0)});
  }
  require(dim == 2, "the perturbed recipe is planar");
  require(std::abs(eps) < 0.8, "perturbed needs |epsilon| < 0.8");
  return CoefficientField::from_function(
      g,
      [&](const Point& x) {
        Matrix m(2, 2);
        const double c = std::sin(pi * x[0]) * std::cos(pi * x[1]), o = 0.5 * std::sin(pi * (x[0] + x[1]));
        m << 1 + eps * c, eps * o, eps * o, 1 - eps * c;
        return m;
      },
      {1.0 - 1.2 * std::abs(eps), 1.0 + 1.2 * std::abs(eps), 1.0, 2.0 * std::abs(eps) * pi});
}

PhaseWeights make_phases(const Scenario& s, const Grid& g) {
  if (s.phases == "constant") return PhaseWeights::constant(g, s.q_plus, s.q_minus);
  const double width = (s.hi - s.lo) / s.checker_cells;
  const auto qp = ScalarField::from_function(g, [&](const Point& x) {
    int parity = 0;
    for (int a = 0; a < s.dim; ++a)
      parity += std::min(s.checker_cells - 1, static_cast<int>(std::floor((x[a] - s.lo) / width)));
    return parity % 2 == 0 ? s.q_plus : s.q_plus_alt;
  });
  return PhaseWeights(qp, ScalarField::constant(g, s.q_minus));
}

ScalarField make_boundary(const Scenario& s, const Grid& g) {
  return ScalarField::from_function(g, [&](const Point& x) {
    const double v = s.slope * x[0] + s.offset + s.amplitude * std::sin(pi * x[1]);
    return s.plus_only ? std::max(v, 0.0) : v;
  });
}

Problem problem_at(const Scenario& s, double h) {
  const Grid g = Grid::cube(s.dim, s.lo, s.hi, h);
  return {g, make_coefficients(s, g), make_phases(s, g), make_boundary(s, g)};
}

struct Solution {
  ScalarField u;
  std::optional<double> sharp_energy;
  std::vector<nlohmann::json> levels;
};

Solution solve(const Scenario& s, const Problem& p) {
  if (s.mode == "closed_form") return {p.boundary, std::nullopt, {}};
  std::vector<double> hs;
  if (s.warm_start)
    for (double h = *s.warm_start; h > s.h * (1.0 + 1e-9); h /= 2.0) hs.push_back(h);
  hs.push_back(s.h);
  std::optional<ScalarField> previous;
  Solution out{p.boundary, std::nullopt, {}};
  for (const double h : hs) {
    const bool last = h == hs.back();
    const Problem level = last ? p : problem_at(s, h);
    SolverParams params;
    params.max_iterations = s.max_iterations;
    std::optional<ScalarField> initial;
    if (previous) {
      params.epsilon_schedule = {4.0 * h, 2.0 * h};
      initial = resample(*previous, level.grid);
    }
    const MinimizeReport r = minimize_functional_report(level.A, level.q, level.boundary, params, s.plus_only, initial);
    out.levels.push_back({{"h", h}, {"epsilons", r.epsilons}, {"sharp_energy", r.sharp_energy},
                          {"iterations", r.iterations}});
    out.sharp_energy = r.sharp_energy.back();
    previous = r.field;
  }
  out.u = *previous;
  return out;
}

// A point of the zero set's boundary on the x1 axis, nearest to the origin.
std::optional<Point> auto_anchor(const ScalarField& u, double extent) {
  const Grid& g = u.grid();
  const double h = g.spacing();
  const int steps = static_cast<int>(std::floor(extent / h));
  auto at = [&](double t) {
    Point p = Point::Zero(g.dim());
    p[0] = t;
    return p;
  };
  auto positive = [&](double t) { return interpolate(u, at(t)) > 0.0; };
  std::optional<Point> best;
  double best_t = std::numeric_limits<double>::infinity();
  for (int k = -steps; k < steps; ++k) {
    double a = k * h, b = (k + 1) * h;
    if (positive(a) == positive(b)) continue;
    const bool pa = positive(a);
    for (int it = 0; it < 80; ++it) {
      const double m = 0.5 * (a + b);
      (positive(m) == pa ? a : b) = m;
    }
    const double t = positive(a) ? b : a;
    if (std::abs(t) < std::abs(best_t)) {
      best_t = t;
      best = at(t);
    }
  }
  return best;
}

nlohmann::json check(double value, double threshold, bool pass) {
  return {{"value", value}, {"threshold", threshold}, {"pass", pass}};
}

void write(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw FormatError("cannot write " + path.string());
}

}  // namespace

Problem build_problem(const Scenario& s) {
  try {
    return problem_at(s, s.h);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("scenario recipes: ") + e.what());
  }
}

RunOutcome run_scenario(const Scenario& s, const Problem& p, const fs::path& out, int threads) {
  const Solution sol = solve(s, p);
  const ScalarField& u = sol.u;
  const int dim = s.dim;

  fs::create_directories(out / "fields");
  write(out / "config.echo", echo_scenario(s));
  save_field(out / "fields" / "u.fbf", u);
  save_field(out / "fields" / "A.fbf", p.A);

  nlohmann::json summary = {{"scenario", s.name}, {"dim", dim}, {"h", s.h}, {"mode", s.mode},
                            {"plus_only", s.plus_only}, {"coefficients", s.coefficients}};
  summary["sharp_energy"] = sol.sharp_energy ? nlohmann::json(*sol.sharp_energy) : nlohmann::json();
  summary["levels"] = sol.levels;
  nlohmann::json checks = nlohmann::json::object();

  std::optional<MinimalityCertificate> cert;
  if (s.certify) {
    cert = certify_almost_minimality(u, p.A, p.q, s.alpha, s.probes, {s.plus_only, threads});
    write(out / "certificate.json", to_json(*cert).dump(2) + "\n");
    summary["kappa_hat"] = cert->kappa_hat;
    if (s.max_kappa_hat) checks["kappa_hat"] = check(cert->kappa_hat, *s.max_kappa_hat, cert->kappa_hat <= *s.max_kappa_hat);
  } else {
    write(out / "certificate.json", nlohmann::json{{"enabled", false}}.dump(2) + "\n");
    summary["kappa_hat"] = nullptr;
  }

  std::vector<Point> centers;
  {
    const int m = s.lattice;
    Index3 i{0, 0, 0};
    for (i[0] = 0; i[0] < m; ++i[0])
      for (i[1] = 0; i[1] < m; ++i[1])
        for (i[2] = 0; i[2] < (dim == 3 ? m : 1); ++i[2]) {
          Point c(dim);
          for (int a = 0; a < dim; ++a) c[a] = m == 1 ? 0.0 : -s.lattice_extent + 2.0 * s.lattice_extent * i[a] / (m - 1);
          centers.push_back(c);
        }
  }
  const auto rows = diagnostics_sweep(u, p.A, centers, s.radii, s.g, threads);
  {
    std::ostringstream csv;
    write_diagnostics_csv(csv, rows, s.acf_delta());
    write(out / "diagnostics.csv", csv.str());
  }
  int members = 0, located = 0, wrong = 0;
  double worst_fraction = 0.0, omega_error = 0.0;
  for (const auto& row : rows) {
    if (row.notes.rfind("out of domain", 0) != 0) omega_error = std::max(omega_error, std::abs(row.omega - 1.0));
    if (!row.g.member) continue;
    ++members;
    const SignLocality sl = sign_locality(u, row.probe, s.g);
    if (!sl.applicable) continue;
    ++located;
    wrong += sl.interior_wrong;
    worst_fraction = std::max(worst_fraction, sl.fraction);
  }
  summary["g_members"] = members;
  summary["sign_locality"] = {{"probes", located}, {"interior_wrong", wrong}, {"max_fraction", worst_fraction}};
  if (s.check_sign_locality) checks["sign_locality"] = check(wrong, 0, wrong == 0);
  if (s.omega_tolerance) checks["omega_unit"] = check(omega_error, *s.omega_tolerance, omega_error <= *s.omega_tolerance);

  nlohmann::json acf;
  const std::optional<Point> anchor = s.acf_anchor ? s.acf_anchor : auto_anchor(u, s.lattice_extent);
  if (!anchor || s.acf_radii.empty()) {
    acf = {{"skipped", "no sign change of u on the x1 axis"}};
    summary["acf"] = nullptr;
    if (s.acf_spread_tolerance) checks["acf_spread"] = check(NAN, *s.acf_spread_tolerance, false);
  } else {
    const AcfSweep sweep = acf_sweep(u, *anchor, s.acf_radii, s.acf_delta(), s.alpha);
    acf = to_json(sweep);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& v : sweep.values) {
      lo = std::min(lo, v.phi);
      hi = std::max(hi, v.phi);
    }
    summary["acf"] = {{"anchor", to_json(*anchor)}, {"fitted_constant", sweep.fitted_constant}, {"spread", hi - lo}};
    if (s.acf_spread_tolerance) checks["acf_spread"] = check(hi - lo, *s.acf_spread_tolerance, hi - lo <= *s.acf_spread_tolerance);
  }
  write(out / "acf.json", acf.dump(2) + "\n");

  const LipschitzReport lip = lipschitz_constant(u, p.A, s.lipschitz_center, s.lipschitz_r0);
  const double modulus = continuity_modulus(u, s.lipschitz_center, s.lipschitz_r0);
  const LogGrowth growth = omega_log_growth(u, p.A, s.lipschitz_center, s.lipschitz_r0, s.log_depth);
  summary["lipschitz"] = to_json(lip);
  summary["continuity_modulus"] = modulus;
  summary["log_growth"] = to_json(growth);
  if (s.max_lipschitz_ratio) checks["lipschitz_ratio"] = check(lip.ratio, *s.max_lipschitz_ratio, lip.ratio <= *s.max_lipschitz_ratio);
  if (s.max_continuity_modulus)
    checks["continuity_modulus"] = check(modulus, *s.max_continuity_modulus, modulus <= *s.max_continuity_modulus);

  bool pass = true;
  for (const auto& [name, c] : checks.items()) pass = pass && c["pass"].get<bool>();
  summary["checks"] = checks;
  summary["pass"] = pass;
  write(out / "summary.json", summary.dump(2) + "\n");
  return {summary, pass};
}

namespace {

std::vector<std::string> lines_of(const fs::path& path) {
  std::ifstream in(path);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) out.push_back(line);
  return out;
}

std::string cell(const nlohmann::json& v) {
  return v.is_number() ? format_number(v.get<double>()) : std::string();
}

}  // namespace

ReportTables merge_runs(const std::vector<fs::path>& inputs) {
  std::vector<fs::path> runs;
  std::vector<std::string> missing;
  for (const auto& dir : inputs) {
    if (!fs::is_directory(dir)) {
      missing.push_back(dir.string() + " (not a directory)");
      continue;
    }
    if (fs::exists(dir / "summary.json") || fs::exists(dir / "diagnostics.csv")) {
      runs.push_back(dir);
      continue;
    }
    std::vector<fs::path> nested;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_directory() && fs::exists(e.path() / "summary.json")) nested.push_back(e.path());
    std::sort(nested.begin(), nested.end());
    if (nested.empty()) runs.push_back(dir);
    runs.insert(runs.end(), nested.begin(), nested.end());
  }
  for (const auto& r : runs)
    for (const char* f : {"summary.json", "diagnostics.csv"})
      if (!fs::exists(r / f)) missing.push_back((r / f).string());
  if (!missing.empty()) {
    std::string msg = "missing run files:";
    for (const auto& m : missing) msg += "\n  " + m;
    throw FormatError(msg);
  }
  if (runs.empty()) throw FormatError("missing run files: no run directories given");

  struct Run {
    nlohmann::json summary;
    std::vector<std::string> csv;
  };
  std::vector<Run> all;
  for (const auto& r : runs) {
    std::ifstream in(r / "summary.json");
    Run run;
    try {
      run.summary = nlohmann::json::parse(in);
      run.summary.at("scenario").get<std::string>();
      run.summary.at("h").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError((r / "summary.json").string() + ": " + e.what());
    }
    run.csv = lines_of(r / "diagnostics.csv");
    if (run.csv.empty()) throw FormatError((r / "diagnostics.csv").string() + ": no header");
    all.push_back(std::move(run));
  }
  std::stable_sort(all.begin(), all.end(), [](const Run& a, const Run& b) {
    const auto sa = a.summary["scenario"].get<std::string>(), sb = b.summary["scenario"].get<std::string>();
    if (sa != sb) return sa < sb;
    return a.summary["h"].get<double>() > b.summary["h"].get<double>();
  });

  ReportTables t;
  const std::string header = all.front().csv.front();
  t.diagnostics_csv = "scenario,h," + header + "\n";
  for (const auto& run : all) {
    if (run.csv.front() != header) throw FormatError("diagnostics tables have different columns");
    const std::string key = run.summary["scenario"].get<std::string>() + "," + cell(run.summary["h"]) + ",";
    for (std::size_t i = 1; i < run.csv.size(); ++i) t.diagnostics_csv += key + run.csv[i] + "\n";
  }

  using Getter = std::function<nlohmann::json(const nlohmann::json&)>;
  const std::vector<std::pair<std::string, Getter>> columns = {
      {"kappa_hat", [](const nlohmann::json& s) { return s.value("kappa_hat", nlohmann::json()); }},
      {"lipschitz_ratio",
       [](const nlohmann::json& s) { return s.contains("lipschitz") ? s["lipschitz"]["ratio"] : nlohmann::json(); }},
      {"continuity_modulus", [](const nlohmann::json& s) { return s.value("continuity_modulus", nlohmann::json()); }},
      {"log_growth_constant",
       [](const nlohmann::json& s) {
         return s.contains("log_growth") ? s["log_growth"]["fitted_constant"] : nlohmann::json();
       }},
      {"acf_fitted_constant", [](const nlohmann::json& s) {
         return s.contains("acf") && s["acf"].is_object() ? s["acf"]["fitted_constant"] : nlohmann::json();
       }}};
  t.constants_csv = "scenario,h";
  for (const auto& c : columns) t.constants_csv += "," + c.first;
  for (const auto& c : columns) t.constants_csv += "," + c.first + "_ratio";
  t.constants_csv += "\n";
  for (std::size_t i = 0; i < all.size(); ++i) {
    const auto& s = all[i].summary;
    const bool has_prev = i > 0 && all[i - 1].summary["scenario"] == s["scenario"];
    t.constants_csv += s["scenario"].get<std::string>() + "," + cell(s["h"]);
    for (const auto& c : columns) t.constants_csv += "," + cell(c.second(s));
    for (const auto& c : columns) {
      std::string ratio;
      if (has_prev) {
        const auto a = c.second(all[i - 1].summary), b = c.second(s);
        if (a.is_number() && b.is_number() && b.get<double>() != 0.0)
          ratio = format_number(a.get<double>() / b.get<double>());
      }
      t.constants_csv += "," + ratio;
    }
    t.constants_csv += "\n";
  }
  return t;
}

}  // namespace fblab
