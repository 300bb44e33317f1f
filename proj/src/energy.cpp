#include "fblab/energy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fblab {

namespace {

std::array<double, 8> corner_values(const ScalarField& v, const Index3& cell) {
  std::array<double, 8> out{};
  const int dim = v.grid().dim();
  for (int k = 0; k < (1 << dim); ++k) {
    Index3 i = cell;
    for (int a = 0; a < dim; ++a) i[a] += (k >> a) & 1;
    out[static_cast<std::size_t>(k)] = v.at(i);
  }
  return out;
}

double multilinear(const std::array<double, 8>& corners, int dim, const double* t) {
  double value = 0.0;
  for (int k = 0; k < (1 << dim); ++k) {
    double w = 1.0;
    for (int a = 0; a < dim; ++a) w *= ((k >> a) & 1) ? t[a] : 1.0 - t[a];
    value += w * corners[static_cast<std::size_t>(k)];
  }
  return value;
}

using CellVisitor = std::function<void(const Index3&, double)>;

void visit_ball(const Grid& grid, const Point& x, double r, const CellVisitor& fn) {
  if (!(r > 0.0)) throw PreconditionError("radius must be positive");
  if (grid.distance_to_boundary(x) < r * (1.0 - 1e-12)) throw OutOfDomainError("ball exits the grid domain");
  for_each_cell_in_ball(grid, Ball{x, r}, fn);
}

void visit_ellipsoid(const Grid& grid, const Ellipsoid& e, const CellVisitor& fn) {
  if (!(e.radius > 0.0)) throw PreconditionError("radius must be positive");
  if (e.frame.is_identity()) {
    visit_ball(grid, e.frame.anchor, e.radius, fn);
    return;
  }
  for (const Point& p : ellipsoid_boundary_samples(e, grid.dim() == 2 ? 256 : 1024))
    if (!grid.contains(p)) throw OutOfDomainError("ellipsoid exits the grid domain");
  for_each_cell_in_ellipsoid(grid, e, fn);
}

void require_same_lattice(const Grid& a, const Grid& b, const char* what) {
  if (!a.same_lattice(b)) throw PreconditionError(std::string(what) + " must share the field's grid");
}

LocalEnergyBreakdown functional(const ScalarField& v, const CoefficientField& A, const PhaseWeights& q,
                                bool plus_only, const std::function<void(const CellVisitor&)>& visit) {
  require_same_lattice(v.grid(), A.grid(), "coefficients");
  require_same_lattice(v.grid(), q.q_plus().grid(), "phase weights");
  const double cell_volume = std::pow(v.grid().spacing(), v.grid().dim());
  CompensatedSum dir, plus, minus;
  bool violation = false;
  visit([&](const Index3& c, double frac) {
    const SignFractions s = cell_sign_fractions(v, c);
    if (plus_only && !violation) {
      const auto corners = corner_values(v, c);
      violation = *std::min_element(corners.begin(), corners.begin() + (1 << v.grid().dim())) < 0.0;
    }
    dir.add(cell_dirichlet_density(v, cell_coefficient(A, c), c) * frac * cell_volume);
    if (s.plus > 0.0) {
      const double qp = cell_mean(q.q_plus(), c);
      plus.add(qp * qp * s.plus * frac * cell_volume);
    }
    if (s.minus > 0.0 && !plus_only) {
      const double qm = cell_mean(q.q_minus(), c);
      minus.add(qm * qm * s.minus * frac * cell_volume);
    }
  });
  if (violation) throw PhaseViolationError("one-phase functional evaluated on a field with negative values");
  LocalEnergyBreakdown out;
  out.dirichlet_part = std::max(0.0, dir.value());
  out.plus_phase_part = plus.value();
  out.minus_phase_part = minus.value();
  out.total = out.dirichlet_part + out.plus_phase_part + out.minus_phase_part;
  return out;
}

double dirichlet_only(const ScalarField& v, const CoefficientField* A,
                      const std::function<void(const CellVisitor&)>& visit) {
  const int dim = v.grid().dim();
  const Matrix I = Matrix::Identity(dim, dim);
  if (A) require_same_lattice(v.grid(), A->grid(), "coefficients");
  const double cell_volume = std::pow(v.grid().spacing(), dim);
  CompensatedSum sum;
  visit([&](const Index3& c, double frac) {
    sum.add(cell_dirichlet_density(v, A ? cell_coefficient(*A, c) : I, c) * frac * cell_volume);
  });
  return std::max(0.0, sum.value());
}

}  // namespace

double cell_dirichlet_density(const ScalarField& v, const Matrix& A, const Index3& cell) {
  const int dim = v.grid().dim();
  const double h = v.grid().spacing();
  const auto corners = corner_values(v, cell);
  const int edges = 1 << (dim - 1);
  std::array<double, 3> mean_diff{}, mean_sq{};
  for (int i = 0; i < dim; ++i) {
    double sum = 0.0, sq = 0.0;
    for (int k = 0; k < (1 << dim); ++k) {
      if ((k >> i) & 1) continue;
      const double d = (corners[static_cast<std::size_t>(k | (1 << i))] - corners[static_cast<std::size_t>(k)]) / h;
      sum += d;
      sq += d * d;
    }
    mean_diff[static_cast<std::size_t>(i)] = sum / edges;
    mean_sq[static_cast<std::size_t>(i)] = sq / edges;
  }
  double density = 0.0;
  for (int i = 0; i < dim; ++i) {
    density += A(i, i) * mean_sq[static_cast<std::size_t>(i)];
    for (int j = 0; j < dim; ++j)
      if (j != i) density += A(i, j) * mean_diff[static_cast<std::size_t>(i)] * mean_diff[static_cast<std::size_t>(j)];
  }
  return density;
}

SignFractions cell_sign_fractions(const ScalarField& v, const Index3& cell) {
  const int dim = v.grid().dim();
  const auto corners = corner_values(v, cell);
  bool any_pos = false, any_neg = false;
  for (int k = 0; k < (1 << dim); ++k) {
    any_pos = any_pos || corners[static_cast<std::size_t>(k)] > 0.0;
    any_neg = any_neg || corners[static_cast<std::size_t>(k)] < 0.0;
  }
  if (!any_neg) return {any_pos ? 1.0 : 0.0, 0.0};
  if (!any_pos) return {0.0, 1.0};
  const int sub = dim == 2 ? 16 : 8;
  int pos = 0, neg = 0, total = 0;
  double t[3] = {0.0, 0.0, 0.0};
  for (int i = 0; i < sub; ++i)
    for (int j = 0; j < sub; ++j)
      for (int k = 0; k < (dim == 3 ? sub : 1); ++k) {
        t[0] = (i + 0.5) / sub;
        t[1] = (j + 0.5) / sub;
        t[2] = (k + 0.5) / sub;
        const double value = multilinear(corners, dim, t);
        pos += value > 0.0;
        neg += value < 0.0;
        ++total;
      }
  return {double(pos) / total, double(neg) / total};
}

Matrix cell_coefficient(const CoefficientField& A, const Index3& cell) {
  const int dim = A.grid().dim();
  Matrix m = Matrix::Zero(dim, dim);
  for (int k = 0; k < (1 << dim); ++k) {
    Index3 i = cell;
    for (int a = 0; a < dim; ++a) i[a] += (k >> a) & 1;
    m += A.at(i);
  }
  return m / double(1 << dim);
}

double dirichlet_energy(const ScalarField& v, const Ball& ball) {
  return dirichlet_only(v, nullptr, [&](const CellVisitor& fn) { visit_ball(v.grid(), ball.center, ball.radius, fn); });
}

double dirichlet_energy(const ScalarField& v, const Ellipsoid& e) {
  return dirichlet_only(v, nullptr, [&](const CellVisitor& fn) { visit_ellipsoid(v.grid(), e, fn); });
}

double dirichlet_energy(const ScalarField& v, const CoefficientField& A, const Ball& ball) {
  return dirichlet_only(v, &A, [&](const CellVisitor& fn) { visit_ball(v.grid(), ball.center, ball.radius, fn); });
}

double dirichlet_energy(const ScalarField& v, const CoefficientField& A, const Ellipsoid& e) {
  return dirichlet_only(v, &A, [&](const CellVisitor& fn) { visit_ellipsoid(v.grid(), e, fn); });
}

LocalEnergyBreakdown functional_on_ball(const ScalarField& v, const CoefficientField& A, const PhaseWeights& q,
                                        const Point& x, double r, bool plus_only) {
  return functional(v, A, q, plus_only, [&](const CellVisitor& fn) { visit_ball(v.grid(), x, r, fn); });
}

LocalEnergyBreakdown functional_on_ellipsoid(const ScalarField& v, const CoefficientField& A, const PhaseWeights& q,
                                             const AffineFrame& frame, double r, bool plus_only) {
  const Ellipsoid e{frame, r};
  return functional(v, A, q, plus_only, [&](const CellVisitor& fn) { visit_ellipsoid(v.grid(), e, fn); });
}

LocalEnergyBreakdown functional_on_domain(const ScalarField& v, const CoefficientField& A, const PhaseWeights& q,
                                          bool plus_only) {
  return functional(v, A, q, plus_only, [&](const CellVisitor& fn) {
    const Grid& g = v.grid();
    Index3 c{0, 0, 0};
    const int dim = g.dim();
    for (c[0] = 0; c[0] < g.shape()[0] - 1; ++c[0])
      for (c[1] = 0; c[1] < g.shape()[1] - 1; ++c[1])
        for (c[2] = 0; c[2] < (dim == 3 ? g.shape()[2] - 1 : 1); ++c[2]) fn(c, 1.0);
  });
}

double trace_deviation(const ScalarField& u, const ScalarField& v, const Point& x, double r) {
  double worst = 0.0;
  for (const Point& d : sphere_directions(u.grid().dim())) {
    const Point p = x + r * d;
    worst = std::max(worst, std::abs(interpolate(u, p) - interpolate(v, p)));
  }
  return worst;
}

double local_lipschitz(const ScalarField& u, const Point& x, double r) {
  const Grid& g = u.grid();
  double best = 0.0;
  for_each_cell_in_ball(g, Ball{x, r}, [&](const Index3& c, double) {
    const int dim = g.dim();
    for (int k = 0; k < (1 << dim); ++k) {
      Index3 i = c;
      for (int a = 0; a < dim; ++a) i[a] += (k >> a) & 1;
      best = std::max(best, nodal_gradient(u, i).norm());
    }
  });
  return best;
}

MinimalityGap minimality_gap(const ScalarField& u, const ScalarField& v, const CoefficientField& A,
                             const PhaseWeights& q, const Point& x, double r, double kappa, double alpha,
                             bool plus_only) {
  if (!u.grid().same_lattice(v.grid())) throw InvalidCompetitorError("competitor lives on a different grid");
  const double h = u.grid().spacing();
  const double tol = 10.0 * h * local_lipschitz(u, x, r) + 1e-12 * (1.0 + u.values().cwiseAbs().maxCoeff());
  const double dev = trace_deviation(u, v, x, r);
  if (dev > tol) throw InvalidCompetitorError("competitor trace deviates from u by " + std::to_string(dev));
  MinimalityGap out;
  out.energy_u = functional_on_ball(u, A, q, x, r, plus_only).total;
  out.energy_v = functional_on_ball(v, A, q, x, r, plus_only).total;
  out.additive_gap = out.energy_v + kappa * std::pow(r, u.grid().dim() + alpha) - out.energy_u;
  if (out.energy_v > 0.0)
    out.multiplicative_ratio = out.energy_u / out.energy_v;
  else
    out.multiplicative_ratio = out.energy_u > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
  return out;
}

ScalarField scaling_competitor(const ScalarField& u, const ScalarField& phi, double lambda, Phase sign) {
  if (!u.grid().same_lattice(phi.grid())) throw PreconditionError("phi must share u's grid");
  if (phi.values().minCoeff() < 0.0) throw PreconditionError("phi must be non-negative");
  if (std::abs(lambda) * phi.values().maxCoeff() >= 1.0)
    throw ConstraintViolationError("|lambda phi| must stay below 1");
  ScalarField::Vector out = u.values();
  for (Eigen::Index k = 0; k < out.size(); ++k) {
    const bool active = sign == Phase::plus ? out[k] > 0.0 : out[k] < 0.0;
    if (active) out[k] *= 1.0 + lambda * phi.values()[k];
  }
  return u.with_values(std::move(out));
}

ScalarField bump(const Grid& grid, const Point& center, double radius) {
  if (!(radius > 0.0)) throw PreconditionError("bump radius must be positive");
  return ScalarField::from_function(grid, [&](const Point& p) {
    const double s = (p - center).squaredNorm() / (radius * radius);
    return s < 1.0 ? (1.0 - s) * (1.0 - s) : 0.0;
  });
}

}  // namespace fblab
