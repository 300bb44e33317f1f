#include "fblab/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "fblab/parallel.hpp"

namespace fblab {

namespace {

double radical_inverse(long long i, int base) {
  double f = 1.0, r = 0.0;
  while (i > 0) {
    f /= base;
    r += f * static_cast<double>(i % base);
    i /= base;
  }
  return r;
}

double smallest_stretch(const AffineFrame& frame) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(frame.sqrt_matrix);
  return es.eigenvalues().minCoeff();
}

// Unit vector number k of a deterministic sequence, preceded by the coordinate axes.
Point pair_direction(int dim, int k) {
  Point d = Point::Zero(dim);
  if (k < dim) {
    d[k] = 1.0;
    return d;
  }
  if (dim == 2) {
    const double t = M_PI * radical_inverse(k, 2);
    d << std::cos(t), std::sin(t);
    return d;
  }
  const double z = 2.0 * radical_inverse(k, 2) - 1.0, t = 2.0 * M_PI * radical_inverse(k, 3);
  const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
  d << s * std::cos(t), s * std::sin(t), z;
  return d;
}

// Point number k of a deterministic sequence in the closed unit ball; k = 0 is the origin.
Point ball_point(int dim, int k) {
  Point p = Point::Zero(dim);
  if (k == 0) return p;
  if (dim == 2) {
    const double rho = std::sqrt(radical_inverse(k, 5)), t = 2.0 * M_PI * radical_inverse(k, 7);
    p << rho * std::cos(t), rho * std::sin(t);
    return p;
  }
  const double rho = std::cbrt(radical_inverse(k, 5)), z = 2.0 * radical_inverse(k, 7) - 1.0;
  const double t = 2.0 * M_PI * radical_inverse(k, 11), s = std::sqrt(std::max(0.0, 1.0 - z * z));
  p << rho * s * std::cos(t), rho * s * std::sin(t), rho * z;
  return p;
}

// Mean over the cell of |grad u|^2 on {sign u > 0}, the multilinear interpolant sampled
// on a sub-lattice where the cell changes sign.
double signed_cell_density(const ScalarField& u, const Index3& cell, double sign, const Matrix& I) {
  const Grid& g = u.grid();
  const int dim = g.dim(), corners = 1 << dim;
  double v[8];
  bool any_in = false, any_out = false;
  for (int k = 0; k < corners; ++k) {
    Index3 i = cell;
    for (int a = 0; a < dim; ++a) i[a] += (k >> a) & 1;
    v[k] = sign * u.at(i);
    if (v[k] > 0.0) any_in = true;
    if (v[k] < 0.0) any_out = true;
  }
  if (!any_in) return 0.0;
  if (!any_out) return cell_dirichlet_density(u, I, cell);
  const int m = dim == 2 ? 8 : 4;
  const double h = g.spacing();
  double sum = 0.0;
  int count = 0;
  Index3 j{0, 0, 0};
  for (j[0] = 0; j[0] < m; ++j[0])
    for (j[1] = 0; j[1] < m; ++j[1])
      for (j[2] = 0; j[2] < (dim == 3 ? m : 1); ++j[2]) {
        double s[3];
        for (int a = 0; a < dim; ++a) s[a] = (j[a] + 0.5) / m;
        double value = 0.0, grad[3] = {0.0, 0.0, 0.0};
        for (int k = 0; k < corners; ++k) {
          double w = 1.0;
          for (int a = 0; a < dim; ++a) w *= ((k >> a) & 1) ? s[a] : 1.0 - s[a];
          value += w * v[k];
          for (int a = 0; a < dim; ++a) {
            double d = ((k >> a) & 1) ? 1.0 : -1.0;
            for (int b = 0; b < dim; ++b)
              if (b != a) d *= ((k >> b) & 1) ? s[b] : 1.0 - s[b];
            grad[a] += d * v[k] / h;
          }
        }
        ++count;
        if (value > 0.0) sum += grad[0] * grad[0] + grad[1] * grad[1] + grad[2] * grad[2];
      }
  return sum / count;
}

double acf_part(const ScalarField& u, double sign, const Point& y, double r) {
  const Grid& g = u.grid();
  const Matrix I = Matrix::Identity(g.dim(), g.dim());
  return integrate_cells_over_ball(g, Ball{y, r}, RadialKernel::newtonian,
                                   [&](const Index3& c) { return signed_cell_density(u, c, sign, I); });
}

}  // namespace

ProbeBall make_probe(const CoefficientField& A, const Point& x, double r) {
  if (!(r > 0.0)) throw PreconditionError("probe radius must be positive");
  return ProbeBall{x, r, frame_at(A, x)};
}

void GClassParams::validate() const {
  if (!(tau > 0.0) || tau > 0.01) throw PreconditionError("tau must lie in (0, 0.01]");
  if (!(c0 >= 1.0)) throw PreconditionError("C0 must be at least 1");
  if (!(c1 >= 3.0)) throw PreconditionError("C1 must be at least 3");
  if (!(r0 > 0.0)) throw PreconditionError("r0 must be positive");
  if (!(alpha > 0.0) || alpha > 1.0) throw PreconditionError("alpha must lie in (0, 1]");
}

double GClassParams::k(const CoefficientField& A) {
  return std::sqrt(A.lambda_min() / A.lambda_max()) / 6.0;
}

double omega(const ScalarField& u, const Point& x, double s) {
  if (!(s > 0.0)) throw PreconditionError("radius must be positive");
  const int dim = u.grid().dim();
  const double e = dirichlet_energy(u, Ball{x, s});
  return std::sqrt(std::max(0.0, e) / (unit_ball_volume(dim) * std::pow(s, dim)));
}

double omega(const ScalarField& u, const AffineFrame& frame, double s) {
  if (frame.is_identity()) return omega(u, frame.anchor, s);
  if (!(s > 0.0)) throw PreconditionError("radius must be positive");
  const double stretch = smallest_stretch(frame);
  const double spacing = pullback_spacing(u.grid().spacing(), stretch * stretch, s);
  return omega(pullback_scalar(u, frame, s, spacing), frame.anchor, s);
}

BoundaryMeans boundary_means(const ScalarField& u, const ProbeBall& probe) {
  const Grid& g = u.grid();
  const auto& dirs = sphere_directions(g.dim());
  CompensatedSum b, bp;
  for (const Point& d : dirs) {
    const Point z = probe.frame.map_inverse(probe.x + probe.r * d);
    if (!g.contains(z)) throw OutOfDomainError("pulled-back sphere leaves the domain");
    const double v = interpolate(u, z);
    b.add(v);
    bp.add(std::abs(v));
  }
  const double n = static_cast<double>(dirs.size());
  return {b.value() / n, bp.value() / n};
}

GClassResult g_class_membership(const ScalarField& u, const ProbeBall& probe, const GClassParams& params) {
  params.validate();
  const Grid& g = u.grid();
  const int dim = g.dim();
  GClassResult out;
  out.containment_margin = std::numeric_limits<double>::infinity();
  const Matrix A = probe.frame.sqrt_matrix * probe.frame.sqrt_matrix;
  for (int a = 0; a < dim; ++a) {
    const double room = std::min(probe.x[a] - g.lower()[a], g.upper()[a] - probe.x[a]);
    out.containment_margin = std::min(out.containment_margin, room - 2.0 * probe.r * std::sqrt(A(a, a)));
  }
  if (probe.r > params.r0 || out.containment_margin < 0.0) return out;
  out.applicable = true;
  out.omega = omega(u, probe.frame, probe.r);
  out.means = boundary_means(u, probe);
  const double b = std::abs(out.means.b);
  if (b > 1e-12 * out.means.b_plus) {
    out.b_margin = b / probe.r - params.c0 * std::pow(params.tau, -dim) *
                                     std::sqrt(1.0 + std::pow(probe.r, params.alpha) * out.omega * out.omega);
    out.b_plus_margin = params.c1 * b - out.means.b_plus;
  }
  out.member = out.b_margin >= 0.0 && out.b_plus_margin >= 0.0;
  return out;
}

SignLocality sign_locality(const ScalarField& u, const ProbeBall& probe, const GClassParams& params) {
  SignLocality out;
  const GClassResult g = g_class_membership(u, probe, params);
  if (!g.applicable || !g.member || g.means.b == 0.0) return out;
  out.applicable = true;
  const int dim = u.grid().dim();
  const double sign = g.means.b > 0.0 ? 1.0 : -1.0;
  const double rho = params.tau * probe.r / 3.0;
  const double h = u.grid().spacing(), stretch = smallest_stretch(probe.frame);
  const int per_axis = dim == 2 ? 16 : 8;
  int wrong = 0;
  auto visit = [&](const Point& w) {
    const double v = interpolate(u, probe.frame.map_inverse(probe.x + rho * w));
    ++out.samples;
    if (v * sign >= 0.0) return;
    ++wrong;
    const bool interior = w.norm() == 0.0 || (1.0 - w.norm()) * rho * stretch >= h;
    if (interior) ++out.interior_wrong;
  };
  visit(Point::Zero(dim));
  Index3 i{0, 0, 0};
  for (i[0] = 0; i[0] < per_axis; ++i[0])
    for (i[1] = 0; i[1] < per_axis; ++i[1])
      for (i[2] = 0; i[2] < (dim == 3 ? per_axis : 1); ++i[2]) {
        Point w(dim);
        for (int a = 0; a < dim; ++a) w[a] = -1.0 + (2.0 * i[a] + 1.0) / per_axis;
        if (w.norm() < 1.0) visit(w);
      }
  out.fraction = static_cast<double>(wrong) / out.samples;
  return out;
}

LogGrowth omega_log_growth(const ScalarField& u, const CoefficientField& A, const Point& x, double r, int depth) {
  if (depth < 0) throw PreconditionError("depth must be non-negative");
  const AffineFrame frame = frame_at(A, x);
  LogGrowth out;
  for (int j = 0; j <= depth; ++j) {
    const double s = std::ldexp(r, -j);
    out.rows.push_back({s, omega(u, frame, s), 0.0});
  }
  const double top = out.rows.front().omega;
  for (const auto& row : out.rows) {
    const double denom = top + std::log(r / row.s);
    if (denom > 0.0) out.fitted_constant = std::max(out.fitted_constant, row.omega / denom);
  }
  for (auto& row : out.rows) row.margin = out.fitted_constant * (top + std::log(r / row.s)) - row.omega;
  return out;
}

DecayRatio omega_decay_ratio(const ScalarField& u, const CoefficientField& A, const Point& x, double r, double theta,
                             bool two_phase) {
  const double limit = two_phase ? 1.0 / 3.0 : 0.5;
  if (!(theta > 0.0) || !(theta < limit)) throw PreconditionError("theta out of range");
  const AffineFrame frame = frame_at(A, x);
  const double outer = omega(u, frame, r);
  if (outer == 0.0) return {0.0, true};
  return {omega(u, frame, theta * r) / outer, false};
}

AcfValue acf_phi(const ScalarField& u, const Point& y, double r) {
  if (!(r > 0.0)) throw PreconditionError("radius must be positive");
  AcfValue out;
  out.phi_plus = acf_part(u, 1.0, y, r);
  out.phi_minus = acf_part(u, -1.0, y, r);
  out.phi = out.phi_plus * out.phi_minus / std::pow(r, 4);
  return out;
}

AcfSweep acf_sweep(const ScalarField& u, const Point& x0, const std::vector<double>& radii, double delta,
                   double alpha) {
  const Grid& g = u.grid();
  const int dim = g.dim();
  if (radii.empty()) throw PreconditionError("no radii");
  for (std::size_t k = 0; k < radii.size(); ++k)
    if (!(radii[k] > 0.0) || (k > 0 && !(radii[k] > radii[k - 1])))
      throw PreconditionError("radii must be positive and ascending");
  if (!(alpha > 0.0) || alpha > 1.0) throw PreconditionError("alpha must lie in (0, 1]");
  if (!(delta > 0.0) || !(delta < alpha / (4.0 * (dim + 1)))) throw PreconditionError("delta out of range");
  AcfSweep out;
  out.anchor = x0;
  out.delta = delta;
  out.alpha = alpha;
  out.radii = radii;
  out.anchor_value = interpolate(u, x0);
  out.anchor_tolerance = 2.0 * g.spacing() * local_lipschitz(u, x0, radii.back());
  if (std::abs(out.anchor_value) > out.anchor_tolerance)
    throw PreconditionError("anchor is not a near-zero of u");
  for (const double r : radii) out.values.push_back(acf_phi(u, x0, r));
  for (std::size_t i = 0; i < radii.size(); ++i)
    for (std::size_t j = i + 1; j < radii.size(); ++j)
      out.fitted_constant = std::max(out.fitted_constant,
                                     (out.values[i].phi - out.values[j].phi) / std::pow(radii[j], delta));
  const double r0 = radii.back();
  const double rho = std::min(2.0 * r0, g.distance_to_boundary(x0) * (1.0 - 1e-12));
  const double mean = dirichlet_energy(u, Ball{x0, rho}) / (unit_ball_volume(dim) * std::pow(rho, dim));
  out.constant_proxy = 1.0 + mean * mean + std::pow(std::max(0.0, std::log(r0)), 4);
  if (dim >= 3)
    out.kernel_normalization = 1.0 / (dim * (dim - 2) * unit_ball_volume(dim));
  else
    out.convention_extended = true;
  return out;
}

std::vector<PairSample> dyadic_pairs(const Grid& grid, const Point& x0, double r0, int pair_count) {
  if (!(r0 > 0.0) || pair_count < 1) throw PreconditionError("need r0 > 0 and at least one pair");
  if (!grid.contains(x0) || grid.distance_to_boundary(x0) < r0)
    throw OutOfDomainError("B(x0, r0) leaves the domain");
  const int dim = grid.dim();
  const double floor = 4.0 * grid.spacing();
  std::vector<PairSample> out;
  for (double d = 2.0 * r0; d >= floor || out.empty(); d /= 2.0) {
    const double room = r0 - d / 2.0;
    for (int k = 0; k < pair_count; ++k) {
      const Point e = pair_direction(dim, k);
      const Point m = x0 + room * ball_point(dim, k < dim ? 0 : k);
      out.push_back({m + 0.5 * d * e, m - 0.5 * d * e});
    }
    if (d < floor) break;
  }
  return out;
}

double continuity_modulus(const ScalarField& u, const Point& x0, double r0, int pair_count) {
  double best = 0.0;
  for (const auto& p : dyadic_pairs(u.grid(), x0, r0, pair_count)) {
    const double d = (p.x - p.y).norm();
    best = std::max(best, std::abs(interpolate(u, p.x) - interpolate(u, p.y)) / (d * (1.0 + std::log(2.0 * r0 / d))));
  }
  return best;
}

LipschitzReport lipschitz_constant(const ScalarField& u, const CoefficientField& A, const Point& x0, double r0,
                                   int pair_count) {
  LipschitzReport out;
  for (const auto& p : dyadic_pairs(u.grid(), x0, r0, pair_count))
    out.lipschitz =
        std::max(out.lipschitz, std::abs(interpolate(u, p.x) - interpolate(u, p.y)) / (p.x - p.y).norm());
  out.omega_2r0 = omega(u, frame_at(A, x0), 2.0 * r0);
  out.ratio = out.lipschitz / (out.omega_2r0 + 1.0);
  return out;
}

HolderReport gradient_holder(const ScalarField& u, const Point& center, double radius, double alpha, int pair_count) {
  const Grid& g = u.grid();
  const int dim = g.dim();
  if (!(alpha > 0.0) || alpha > 1.0) throw PreconditionError("alpha must lie in (0, 1]");
  const double clearance = 4.0 * g.spacing() * local_lipschitz(u, center, radius);
  for_each_cell_in_ball(g, Ball{center, radius}, [&](const Index3& c, double) {
    for (int k = 0; k < (1 << dim); ++k) {
      Index3 i = c;
      for (int a = 0; a < dim; ++a) i[a] += (k >> a) & 1;
      if (std::abs(u.at(i)) < clearance) throw PreconditionError("region touches the zero set");
    }
  });
  HolderReport out;
  out.center = center;
  out.radius = radius;
  out.target_exponent = alpha / (dim + 2 + alpha);
  std::vector<std::pair<double, double>> sep;  // (separation, largest gradient difference)
  double scale = 0.0;
  for (const auto& p : dyadic_pairs(g, center, radius, pair_count)) {
    const Point gx = gradient(u, p.x), gy = gradient(u, p.y);
    scale = std::max({scale, gx.norm(), gy.norm()});
    const double d = (p.x - p.y).norm(), diff = (gx - gy).norm();
    if (sep.empty() || std::abs(sep.back().first - d) > 1e-12 * d)
      sep.emplace_back(d, diff);
    else
      sep.back().second = std::max(sep.back().second, diff);
  }
  std::vector<std::pair<double, double>> fit;
  for (const auto& [d, diff] : sep)
    if (diff > 1e-10 * std::max(1.0, scale)) fit.emplace_back(std::log(d), std::log(diff));
  if (fit.size() < 2) {
    out.constant_gradient = true;
    out.fitted_exponent = 1.0;
    out.seminorm = 0.0;
    out.pass = true;
    return out;
  }
  double mx = 0.0, my = 0.0;
  for (const auto& [x, y] : fit) {
    mx += x;
    my += y;
  }
  mx /= fit.size();
  my /= fit.size();
  double sxy = 0.0, sxx = 0.0;
  for (const auto& [x, y] : fit) {
    sxy += (x - mx) * (y - my);
    sxx += (x - mx) * (x - mx);
  }
  out.fitted_exponent = std::clamp(sxy / sxx, 0.0, 1.0);
  for (const auto& [d, diff] : sep) out.seminorm = std::max(out.seminorm, diff / std::pow(d, out.fitted_exponent));
  out.pass = out.fitted_exponent >= out.target_exponent - 0.05;
  return out;
}

double perturbation_inequality(const ScalarField& u, const CoefficientField& A, const PhaseWeights& q,
                               const ProbeBall& probe, const PerturbationSpec& spec,
                               const MinimalityCertificate& certificate, bool plus_only) {
  const Grid& g = u.grid();
  if (!spec.phi.grid().same_lattice(g)) throw PreconditionError("phi must share u's grid");
  for (std::size_t k = 0; k < g.node_count(); ++k)
    if (spec.phi[k] != 0.0 && (g.node(k) - probe.x).norm() >= probe.r)
      throw PreconditionError("phi must vanish outside the probe ball");
  const ScalarField v = scaling_competitor(u, spec.phi, spec.amplitude, spec.sign);
  const double Ju = functional_on_ball(u, A, q, probe.x, probe.r, plus_only).total;
  const double Jv = functional_on_ball(v, A, q, probe.x, probe.r, plus_only).total;
  return Jv + certificate.kappa_hat * std::pow(probe.r, g.dim() + certificate.alpha) - Ju;
}

std::vector<DiagnosticsRow> diagnostics_sweep(const ScalarField& u, const CoefficientField& A,
                                              const std::vector<Point>& centers, const std::vector<double>& radii,
                                              const GClassParams& params, int threads) {
  params.validate();
  std::vector<DiagnosticsRow> rows(centers.size() * radii.size());
  parallel_for(rows.size(), threads, [&](std::size_t i) {
    DiagnosticsRow& row = rows[i];
    row.probe = make_probe(A, centers[i / radii.size()], radii[i % radii.size()]);
    row.params = params;
    try {
      row.g = g_class_membership(u, row.probe, params);
      if (!row.g.applicable) {
        row.notes = row.probe.r > params.r0 ? "not applicable: r > r0" : "not applicable: E_x(x,2r) leaves domain";
        row.omega = omega(u, row.probe.frame, row.probe.r);
        const BoundaryMeans m = boundary_means(u, row.probe);
        row.b = m.b;
        row.b_plus = m.b_plus;
        return;
      }
      row.omega = row.g.omega;
      row.b = row.g.means.b;
      row.b_plus = row.g.means.b_plus;
      if (std::isinf(row.g.b_margin)) row.notes = "b = 0";
    } catch (const OutOfDomainError& e) {
      row.notes = std::string("out of domain: ") + e.what();
    }
  });
  return rows;
}

}  // namespace fblab
