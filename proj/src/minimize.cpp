#include "fblab/minimize.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "fblab/elliptic.hpp"
#include "fblab/parallel.hpp"

namespace fblab {

void SolverParams::validate(double h) const {
  const auto eps = schedule(h);
  for (std::size_t k = 0; k < eps.size(); ++k) {
    if (!(eps[k] > 0.0)) throw PreconditionError("smoothing widths must be positive");
    if (k > 0 && !(eps[k] < eps[k - 1])) throw PreconditionError("smoothing widths must be strictly decreasing");
  }
  if (eps.back() > 2.0 * h * (1.0 + 1e-12)) throw PreconditionError("final smoothing width must not exceed 2h");
  if (!(energy_tolerance > 0.0) || max_iterations < 1 || window < 1 || history < 1)
    throw PreconditionError("solver tolerances and limits must be positive");
}

std::vector<double> SolverParams::schedule(double h) const {
  if (!epsilon_schedule.empty()) return epsilon_schedule;
  return {8.0 * h, 4.0 * h, 2.0 * h};
}

ScalarField seed(const SeedSpec& spec, const Grid& grid) {
  const int dim = grid.dim();
  Point nu = spec.normal.size() == dim ? spec.normal : Point(Point::Unit(dim, 0));
  if (std::abs(nu.norm() - 1.0) > 1e-12) throw PreconditionError("seed normal must be a unit vector");
  if (spec.a < 0.0 || spec.b < 0.0) throw PreconditionError("seed slopes must be non-negative");
  auto planar = [&](SeedKind kind) {
    return ScalarField::from_function(grid, [&](const Point& p) {
      const double s = p.dot(nu) - spec.offset;
      switch (kind) {
        case SeedKind::planar_one_phase: return spec.a * std::max(s, 0.0);
        case SeedKind::planar_two_phase: return spec.a * std::max(s, 0.0) - spec.b * std::max(-s, 0.0);
        case SeedKind::linear: return spec.a * p.dot(nu);
        case SeedKind::perturbed: break;
      }
      throw PreconditionError("perturbed seeds need a non-perturbed base");
    });
  };
  if (spec.kind != SeedKind::perturbed) return planar(spec.kind);
  const ScalarField base = planar(spec.base);
  if (spec.amplitude == 0.0) return base;
  if (spec.bump_center.size() != dim || !(spec.bump_radius > 0.0))
    throw PreconditionError("perturbed seed needs a bump center and radius");
  return base.with_values(base.values() + spec.amplitude * bump(grid, spec.bump_center, spec.bump_radius).values());
}

ScalarField resample(const ScalarField& f, const Grid& grid) {
  if (f.grid().same_lattice(grid)) return f;
  ScalarField::Vector values(static_cast<Eigen::Index>(grid.node_count()));
  for (std::size_t k = 0; k < grid.node_count(); ++k) values[static_cast<Eigen::Index>(k)] = interpolate(f, grid.node(k));
  return ScalarField(grid, std::move(values));
}

double smooth_step(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  return t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
}

double smooth_step_derivative(double t) {
  if (t <= 0.0 || t >= 1.0) return 0.0;
  const double s = t * (1.0 - t);
  return 30.0 * s * s;
}

SmoothedFunctional::SmoothedFunctional(const CoefficientField& A, const PhaseWeights& q,
                                       const ScalarField& boundary_data, bool plus_only)
    : boundary_(boundary_data), plus_only_(plus_only) {
  const Grid& g = boundary_data.grid();
  if (!A.grid().same_lattice(g) || !q.q_plus().grid().same_lattice(g))
    throw PreconditionError("coefficients, phase weights and boundary data must share a grid");
  if (plus_only && boundary_data.values().minCoeff() < 0.0)
    throw PhaseViolationError("one-phase boundary data must be non-negative");
  const int dim = g.dim();
  const double h = g.spacing();
  const int corners = 1 << dim;
  const int edges = corners / 2;

  std::vector<Eigen::Index> index(g.node_count(), -1);
  for (std::size_t k = 0; k < g.node_count(); ++k)
    if (!g.is_boundary_node(g.multi_index(k))) {
      index[k] = static_cast<Eigen::Index>(interior_.size());
      interior_.push_back(k);
    }
  const auto n = static_cast<Eigen::Index>(interior_.size());
  linear_ = Eigen::VectorXd::Zero(n);
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(corners * corners));

  const double edge_scale = std::pow(h, dim - 2), cell_volume = std::pow(h, dim);
  Eigen::Matrix<double, 8, 8> L;
  Index3 c{0, 0, 0};
  for (c[0] = 0; c[0] < g.shape()[0] - 1; ++c[0])
    for (c[1] = 0; c[1] < g.shape()[1] - 1; ++c[1])
      for (c[2] = 0; c[2] < (dim == 3 ? g.shape()[2] - 1 : 1); ++c[2]) {
        const Matrix a = cell_coefficient(A, c);
        L.setZero();
        std::array<Eigen::Matrix<double, 8, 1>, 3> grad{};
        for (int i = 0; i < dim; ++i) {
          grad[static_cast<std::size_t>(i)].setZero();
          const double w = a(i, i) / edges * edge_scale;
          for (int k = 0; k < corners; ++k) {
            if ((k >> i) & 1) continue;
            const int k2 = k | (1 << i);
            L(k, k) += w;
            L(k2, k2) += w;
            L(k, k2) -= w;
            L(k2, k) -= w;
            grad[static_cast<std::size_t>(i)][k] = -1.0 / (edges * h);
            grad[static_cast<std::size_t>(i)][k2] = 1.0 / (edges * h);
          }
        }
        for (int i = 0; i < dim; ++i)
          for (int j = 0; j < dim; ++j)
            if (i != j && a(i, j) != 0.0)
              L += cell_volume * a(i, j) * grad[static_cast<std::size_t>(i)] * grad[static_cast<std::size_t>(j)].transpose();
        std::array<std::size_t, 8> node{};
        for (int k = 0; k < corners; ++k) {
          Index3 p = c;
          for (int b = 0; b < dim; ++b) p[b] += (k >> b) & 1;
          node[static_cast<std::size_t>(k)] = g.linear_index(p);
        }
        for (int k = 0; k < corners; ++k)
          for (int l = 0; l < corners; ++l) {
            const double v = L(k, l);
            if (v == 0.0) continue;
            const Eigen::Index ik = index[node[static_cast<std::size_t>(k)]];
            const Eigen::Index il = index[node[static_cast<std::size_t>(l)]];
            const double bl = boundary_data[node[static_cast<std::size_t>(l)]];
            if (ik >= 0 && il >= 0)
              triplets.emplace_back(ik, il, v);
            else if (ik >= 0)
              linear_[ik] += v * bl;
            else if (il < 0)
              constant_ += v * boundary_data[node[static_cast<std::size_t>(k)]] * bl;
          }
      }
  K_.resize(n, n);
  K_.setFromTriplets(triplets.begin(), triplets.end());
  K_.makeCompressed();
  diagonal_ = 2.0 * K_.diagonal();

  plus_weight_.resize(n);
  minus_weight_.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const std::size_t node = interior_[static_cast<std::size_t>(k)];
    const double qp = q.q_plus()[node], qm = q.q_minus()[node];
    plus_weight_[k] = cell_volume * qp * qp;
    minus_weight_[k] = plus_only ? 0.0 : cell_volume * qm * qm;
  }
}

double SmoothedFunctional::value(const Eigen::VectorXd& x, double eps) const {
  double phase = 0.0;
  for (Eigen::Index k = 0; k < x.size(); ++k)
    phase += plus_weight_[k] * smooth_step(x[k] / eps) + minus_weight_[k] * smooth_step(-x[k] / eps);
  return x.dot(K_ * x) + 2.0 * linear_.dot(x) + constant_ + phase;
}

double SmoothedFunctional::value_and_gradient(const Eigen::VectorXd& x, double eps, Eigen::VectorXd& grad) const {
  const Eigen::VectorXd Kx = K_ * x;
  grad = 2.0 * (Kx + linear_);
  double phase = 0.0;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double t = x[k] / eps;
    if (t > 0.0) {
      phase += plus_weight_[k] * smooth_step(t);
      grad[k] += plus_weight_[k] * smooth_step_derivative(t) / eps;
    } else if (t < 0.0) {
      phase += minus_weight_[k] * smooth_step(-t);
      grad[k] -= minus_weight_[k] * smooth_step_derivative(-t) / eps;
    }
  }
  return x.dot(Kx) + 2.0 * linear_.dot(x) + constant_ + phase;
}

Eigen::VectorXd SmoothedFunctional::restrict(const ScalarField& f) const {
  if (!f.grid().same_lattice(boundary_.grid())) throw PreconditionError("field must share the functional's grid");
  Eigen::VectorXd x(size());
  for (std::size_t k = 0; k < interior_.size(); ++k) x[static_cast<Eigen::Index>(k)] = f[interior_[k]];
  return x;
}

ScalarField SmoothedFunctional::extend(const Eigen::VectorXd& x) const {
  ScalarField::Vector values = boundary_.values();
  for (std::size_t k = 0; k < interior_.size(); ++k) values[static_cast<Eigen::Index>(interior_[k])] = x[static_cast<Eigen::Index>(k)];
  return boundary_.with_values(std::move(values));
}

Eigen::VectorXd SmoothedFunctional::relax(const Eigen::VectorXd& x, std::vector<char> pinned, bool plus_only) const {
  if (static_cast<Eigen::Index>(pinned.size()) != size()) throw PreconditionError("pin mask size mismatch");
  Eigen::VectorXd out = x;
  for (int round = 0; round < 50; ++round) {
    std::vector<Eigen::Index> to_free(pinned.size(), -1), from_free;
    for (std::size_t k = 0; k < pinned.size(); ++k)
      if (!pinned[k]) {
        to_free[k] = static_cast<Eigen::Index>(from_free.size());
        from_free.push_back(static_cast<Eigen::Index>(k));
      }
    for (std::size_t k = 0; k < pinned.size(); ++k)
      if (pinned[k]) out[static_cast<Eigen::Index>(k)] = 0.0;
    if (from_free.empty()) return out;
    const auto m = static_cast<Eigen::Index>(from_free.size());
    std::vector<Eigen::Triplet<double>> triplets;
    for (Eigen::Index col = 0; col < K_.outerSize(); ++col)
      for (Eigen::SparseMatrix<double>::InnerIterator it(K_, col); it; ++it) {
        const Eigen::Index r = to_free[static_cast<std::size_t>(it.row())], c = to_free[static_cast<std::size_t>(col)];
        if (r >= 0 && c >= 0) triplets.emplace_back(r, c, it.value());
      }
    Eigen::SparseMatrix<double> Kf(m, m);
    Kf.setFromTriplets(triplets.begin(), triplets.end());
    Eigen::VectorXd rhs(m), guess(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      rhs[i] = -linear_[from_free[static_cast<std::size_t>(i)]];
      guess[i] = out[from_free[static_cast<std::size_t>(i)]];
    }
    Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg;
    cg.setTolerance(1e-10);
    cg.setMaxIterations(100000);
    cg.compute(Kf);
    const Eigen::VectorXd sol = cg.solveWithGuess(rhs, guess);
    if (cg.info() != Eigen::Success) throw ConvergenceError("restricted Dirichlet solve did not converge", cg.error());
    bool clipped = false;
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto k = from_free[static_cast<std::size_t>(i)];
      out[k] = sol[i];
      if (plus_only && sol[i] < 0.0) {
        pinned[static_cast<std::size_t>(k)] = 1;
        clipped = true;
      }
    }
    if (!clipped) return out;
  }
  throw ConvergenceError("sign-constrained relaxation did not settle", 0.0);
}

Eigen::VectorXd SmoothedFunctional::dirichlet_solution() const {
  Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg;
  cg.setTolerance(1e-10);
  cg.setMaxIterations(100000);
  cg.compute(K_);
  const Eigen::VectorXd guess = Eigen::VectorXd::Constant(size(), boundary_.values().mean());
  Eigen::VectorXd x = cg.solveWithGuess(-linear_, guess);
  if (cg.info() != Eigen::Success) throw ConvergenceError("box Dirichlet solve did not converge", cg.error());
  return x;
}

namespace {

struct Pair {
  Eigen::VectorXd s, y;
  double rho;
};

int run_stage(const SmoothedFunctional& F, Eigen::VectorXd& x, double eps, const SolverParams& params, bool plus_only) {
  const Eigen::VectorXd dinv = F.dirichlet_diagonal().cwiseMax(1e-300).cwiseInverse();
  std::deque<Pair> memory;
  Eigen::VectorXd g, gn, xn, d;
  double f = F.value_and_gradient(x, eps, g);
  std::vector<double> trace{f};
  int rises = 0;
  int it = 0;
  for (; it < params.max_iterations; ++it) {
    d = g;
    std::vector<double> alphas(memory.size());
    for (std::size_t i = memory.size(); i-- > 0;) {
      alphas[i] = memory[i].rho * memory[i].s.dot(d);
      d -= alphas[i] * memory[i].y;
    }
    double gamma = 1.0;
    if (!memory.empty()) {
      const Pair& last = memory.back();
      gamma = last.s.dot(last.y) / last.y.dot(dinv.cwiseProduct(last.y));
    }
    d = gamma * dinv.cwiseProduct(d);
    for (std::size_t i = 0; i < memory.size(); ++i) {
      const double beta = memory[i].rho * memory[i].y.dot(d);
      d += (alphas[i] - beta) * memory[i].s;
    }
    d = -d;
    auto project_direction = [&] {
      if (!plus_only) return;
      for (Eigen::Index k = 0; k < x.size(); ++k)
        if (x[k] <= 0.0 && d[k] < 0.0) d[k] = 0.0;
    };
    project_direction();
    if (g.dot(d) >= 0.0) {
      memory.clear();
      d = -dinv.cwiseProduct(g);
      project_direction();
      if (g.dot(d) >= 0.0) break;
    }

    double t = 1.0, fn = 0.0;
    bool accepted = false;
    while (t > 1e-12) {
      xn = x + t * d;
      if (plus_only) xn = xn.cwiseMax(0.0);
      fn = F.value_and_gradient(xn, eps, gn);
      if (!std::isfinite(fn)) throw SolverFailureError("energy became non-finite during minimization");
      if (fn <= f + 1e-4 * g.dot(xn - x)) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      if (memory.empty()) break;
      memory.clear();
      continue;
    }
    Pair p{xn - x, gn - g, 0.0};
    const double sy = p.s.dot(p.y);
    if (sy > 1e-12 * p.s.norm() * p.y.norm()) {
      p.rho = 1.0 / sy;
      memory.push_back(std::move(p));
      if (static_cast<int>(memory.size()) > params.history) memory.pop_front();
    }
    rises = fn > f ? rises + 1 : 0;
    if (rises >= 10) throw SolverFailureError("energy increased over 10 consecutive accepted steps");
    x.swap(xn);
    g.swap(gn);
    f = fn;
    trace.push_back(f);
    const auto w = static_cast<std::size_t>(params.window);
    if (trace.size() > w && trace[trace.size() - 1 - w] - f <= params.energy_tolerance * std::abs(f)) {
      ++it;
      break;
    }
  }
  return it;
}

// Nodes with |v| < threshold and no neighbor of the opposite sign beyond the threshold are set to 0.
std::vector<char> round_to_zero(const SmoothedFunctional& F, Eigen::VectorXd& x, double threshold) {
  const ScalarField field = F.extend(x);
  const Grid& g = field.grid();
  std::vector<char> pinned(static_cast<std::size_t>(x.size()), 0);
  const Eigen::VectorXd interior = x;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double v = interior[k];
    if (std::abs(v) >= threshold) continue;
    const Index3 p = g.multi_index(F.node(k));
    bool opposite = false;
    for (int a = 0; a < g.dim() && !opposite; ++a)
      for (const int sigma : {-1, 1}) {
        Index3 q = p;
        q[a] += sigma;
        const double w = field.at(q);
        if (std::abs(w) >= threshold && w * v < 0.0) opposite = true;
      }
    if (opposite) continue;
    x[k] = 0.0;
    pinned[static_cast<std::size_t>(k)] = 1;
  }
  return pinned;
}

}  // namespace

MinimizeReport minimize_functional_report(const CoefficientField& A, const PhaseWeights& q,
                                          const ScalarField& boundary_data, const SolverParams& params,
                                          bool plus_only, const std::optional<ScalarField>& initial) {
  const double h = boundary_data.grid().spacing();
  params.validate(h);
  const SmoothedFunctional F(A, q, boundary_data, plus_only);
  Eigen::VectorXd x = initial ? F.restrict(resample(*initial, boundary_data.grid())) : F.dirichlet_solution();
  if (plus_only) x = x.cwiseMax(0.0);
  MinimizeReport report;
  for (const double eps : params.schedule(h)) {
    report.iterations.push_back(run_stage(F, x, eps, params, plus_only));
    const double smoothed = F.value(x, eps);
    double before = functional_on_domain(F.extend(x), A, q, plus_only).total;
    Eigen::VectorXd rounded = x;
    const std::vector<char> pinned = round_to_zero(F, rounded, eps / 2.0);
    std::vector<char> zeros(pinned.size(), 0);
    for (Eigen::Index k = 0; k < x.size(); ++k) zeros[static_cast<std::size_t>(k)] = x[k] == 0.0;
    Eigen::VectorXd candidates[2] = {F.relax(rounded, pinned, plus_only), F.relax(x, zeros, plus_only)};
    for (auto& candidate : candidates) {
      const double after = functional_on_domain(F.extend(candidate), A, q, plus_only).total;
      if (after < before) {
        before = after;
        x = std::move(candidate);
      }
    }
    report.epsilons.push_back(eps);
    report.smoothed_energy.push_back(smoothed);
    report.sharp_energy.push_back(before);
  }
  report.field = F.extend(x);
  return report;
}

ScalarField minimize_functional(const CoefficientField& A, const PhaseWeights& q, const ScalarField& boundary_data,
                                const SolverParams& params, bool plus_only) {
  return minimize_functional_report(A, q, boundary_data, params, plus_only).field;
}

std::vector<Point> probe_centers(const Grid& grid, int count) {
  const int dim = grid.dim();
  double inradius = std::numeric_limits<double>::infinity();
  for (int a = 0; a < dim; ++a) inradius = std::min(inradius, 0.5 * (grid.upper()[a] - grid.lower()[a]));
  auto radical_inverse = [](long long i, int base) {
    double f = 1.0, r = 0.0;
    while (i > 0) {
      f /= base;
      r += f * static_cast<double>(i % base);
      i /= base;
    }
    return r;
  };
  constexpr int bases[3] = {2, 3, 5};
  std::vector<Point> out;
  for (long long i = 1; static_cast<int>(out.size()) < count && i < 1000000; ++i) {
    Point p(dim);
    for (int a = 0; a < dim; ++a)
      p[a] = grid.lower()[a] + radical_inverse(i, bases[a]) * (grid.upper()[a] - grid.lower()[a]);
    if (grid.distance_to_boundary(p) >= 0.5 * inradius) out.push_back(p);
  }
  return out;
}

namespace {

struct ProbeResult {
  std::vector<CertificateProbe> probes;
  std::vector<SkippedProbe> skipped;
};

ProbeResult certify_probe(const ScalarField& u, const CoefficientField& A, const PhaseWeights& q, double alpha,
                          const Point& x, bool plus_only) {
  ProbeResult out;
  const Grid& g = u.grid();
  const double h = g.spacing();
  const double r0 = g.distance_to_boundary(x) / 4.0;
  for (const double r : {r0, r0 / 2.0, r0 / 4.0}) {
    if (r < 4.0 * h) {
      out.skipped.push_back({x, r, "radius below four grid cells"});
      continue;
    }
    const double Ju = functional_on_ball(u, A, q, x, r, plus_only).total;
    auto record = [&](const std::string& id, const ScalarField& v) {
      const ScalarField w = plus_only ? v.positive_part() : v;
      const MinimalityGap gap = minimality_gap(u, w, A, q, x, r, 0.0, alpha, plus_only);
      out.probes.push_back({x, r, id, gap.energy_v - Ju, gap.energy_v - Ju});
    };
    try {
      record("harmonic", harmonic_extension(u, x, r));
      record("div_a", div_a_solve(A, u, x, r));
      const ScalarField wide = bump(g, x, r), narrow = bump(g, x, r / 2.0);
      const std::pair<const ScalarField*, double> pairs[5] = {
          {&wide, 0.1}, {&wide, -0.1}, {&wide, 0.3}, {&wide, -0.3}, {&narrow, 0.5}};
      for (int k = 0; k < 5; ++k) {
        record("scaling_plus_" + std::to_string(k), scaling_competitor(u, *pairs[k].first, pairs[k].second, Phase::plus));
        if (!plus_only)
          record("scaling_minus_" + std::to_string(k),
                 scaling_competitor(u, *pairs[k].first, pairs[k].second, Phase::minus));
      }
      const double lip = local_lipschitz(u, x, r);
      for (const int m : {1, 2, 4}) {
        const double s = m * h * lip;
        ScalarField::Vector vals = u.values();
        for (std::size_t k = 0; k < g.node_count(); ++k) {
          const double dist = (g.node(k) - x).norm();
          if (dist >= r) continue;
          const double eta = std::clamp(2.0 * (1.0 - dist / r), 0.0, 1.0);
          const double uk = u[k];
          const double mag = std::max(std::abs(uk) - s * eta, 0.0);
          vals[static_cast<Eigen::Index>(k)] = uk > 0.0 ? mag : (uk < 0.0 ? -mag : 0.0);
        }
        record("truncation_" + std::to_string(m) + "h", u.with_values(std::move(vals)));
      }
    } catch (const OutOfDomainError& e) {
      out.skipped.push_back({x, r, e.what()});
    }
  }
  return out;
}

}  // namespace

MinimalityCertificate certify_almost_minimality(const ScalarField& u, const CoefficientField& A, const PhaseWeights& q,
                                                double alpha, int probe_count, const CertifyOptions& options) {
  if (!(alpha > 0.0) || alpha > 1.0) throw PreconditionError("alpha must lie in (0, 1]");
  const std::vector<Point> centers = probe_centers(u.grid(), probe_count);
  std::vector<ProbeResult> results(centers.size());
  parallel_for(centers.size(), options.threads, [&](std::size_t i) {
    results[i] = certify_probe(u, A, q, alpha, centers[i], options.plus_only);
  });

  MinimalityCertificate cert;
  cert.alpha = alpha;
  const int dim = u.grid().dim();
  for (const auto& r : results) {
    for (const auto& p : r.probes) {
      cert.kappa_hat = std::max(cert.kappa_hat, std::max(0.0, -p.gap) / std::pow(p.r, dim + alpha));
      cert.probes.push_back(p);
    }
    cert.skipped.insert(cert.skipped.end(), r.skipped.begin(), r.skipped.end());
  }
  for (auto& p : cert.probes) p.gap += cert.kappa_hat * std::pow(p.r, dim + alpha);
  return cert;
}

std::pair<ScalarField, MinimalityCertificate> perturb_to_almost_minimizer(
    const ScalarField& u, double amplitude, const ScalarField& bump_field, const CoefficientField& A,
    const PhaseWeights& q, double alpha, int probe_count, const CertifyOptions& options) {
  if (!bump_field.grid().same_lattice(u.grid())) throw PreconditionError("bump must share u's grid");
  const ScalarField v = amplitude == 0.0 ? u : u.with_values(u.values() + amplitude * bump_field.values());
  return {v, certify_almost_minimality(v, A, q, alpha, probe_count, options)};
}

}  // namespace fblab
