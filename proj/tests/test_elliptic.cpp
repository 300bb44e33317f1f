#include <doctest.h>

#include <cmath>
#include <random>

#include "fblab/elliptic.hpp"
#include "fblab/energy.hpp"

using namespace fblab;

namespace {

Point pt(double a, double b) {
  Point p(2);
  p << a, b;
  return p;
}

double max_error_inside(const ScalarField& f, const Point& x, double r, const std::function<double(const Point&)>& exact) {
  double worst = 0.0;
  for (std::size_t k = 0; k < f.grid().node_count(); ++k) {
    const Point p = f.grid().node(k);
    if ((p - x).norm() < r) worst = std::max(worst, std::abs(f[k] - exact(p)));
  }
  return worst;
}

double cos2theta(const Point& p) {
  const double r2 = p.squaredNorm();
  return r2 > 0 ? (p[0] * p[0] - p[1] * p[1]) / r2 : 0.0;
}

}  // namespace

TEST_CASE("harmonic_extension") {
  const Grid g = Grid::cube(2, -1.25, 1.25, 1.0 / 64);
  const Point o = pt(0, 0);

  const auto c = harmonic_extension(ScalarField::constant(g, 2.5), o, 1.0);
  CHECK((c.values().array() - 2.5).abs().maxCoeff() <= 1e-9);

  const auto y1 = ScalarField::from_function(g, [](const Point& p) { return p[0]; });
  CHECK(max_error_inside(harmonic_extension(y1, o, 1.0), o, 1.0, [](const Point& p) { return p[0]; }) <= 5e-3);

  const auto t = ScalarField::from_function(g, cos2theta);
  const auto star = harmonic_extension(t, o, 1.0);
  CHECK(std::abs(interpolate(star, pt(0.5, 0)) - 0.25) <= 5e-3);
  CHECK(max_error_inside(star, o, 1.0, [](const Point& p) { return p[0] * p[0] - p[1] * p[1]; }) <= 5e-3);

  // Values outside the ball are untouched.
  for (std::size_t k = 0; k < g.node_count(); ++k)
    if (g.node(k).norm() >= 1.0) CHECK(star[k] == t[k]);

  CHECK_THROWS_AS(harmonic_extension(y1, pt(0.5, 0), 1.0), OutOfDomainError);
  CHECK_THROWS_AS(harmonic_extension(y1, o, 2.0 / 64), PreconditionError);
  CHECK_THROWS_AS(BallDirichletProblem(t, nullptr, o, 1.0).solve(1e-10, 2), ConvergenceError);
}

TEST_CASE("harmonic extension properties on random traces") {
  const Grid g = Grid::cube(2, -1.0, 1.0, 1.0 / 64);
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> U(-1, 1);
  for (int trial = 0; trial < 8; ++trial) {
    const double a = U(rng), b = U(rng), c = U(rng), d = U(rng);
    const auto u = ScalarField::from_function(g, [&](const Point& p) {
      return a * std::sin(3 * p[0] + b) + c * std::exp(p[1]) * p[0] + d * std::abs(p[0] - 0.1 * b);
    });
    const Point x = pt(0.2 * a, 0.2 * c);
    const double r = 0.5;
    const auto star = harmonic_extension(u, x, r);

    // Maximum principle against the sampled trace.
    double lo = 1e300, hi = -1e300;
    for (const Point& dir : sphere_directions(2)) {
      const double v = interpolate(u, Point(x + r * dir));
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const double slack = 1e-3 * (hi - lo) + 1e-9;
    for (std::size_t k = 0; k < g.node_count(); ++k)
      if ((g.node(k) - x).norm() < r) {
        CHECK(star[k] >= lo - slack);
        CHECK(star[k] <= hi + slack);
      }

    // Dirichlet minimality and the mean value property.
    CHECK(dirichlet_energy(star, Ball{x, r}) <= dirichlet_energy(u, Ball{x, r}) * 1.01);
    CHECK(std::abs(interpolate(star, x) - sphere_average(u, x, r)) <= 2e-3);

    // Averages of |grad u*|^2 over B(x, s) are nondecreasing in s.
    double prev = 0.0;
    for (const double s : {0.1, 0.2, 0.3, 0.4, 0.48}) {
      const double avg = dirichlet_energy(star, Ball{x, s}) / (unit_ball_volume(2) * s * s);
      CHECK(avg >= prev * 0.98);
      prev = avg;
    }
  }
}

TEST_CASE("div_a_solve") {
  const Grid g = Grid::cube(2, -1.0, 1.0, 1.0 / 64);
  const Point x = pt(0.05, -0.1);
  const double r = 0.6;
  const auto u = ScalarField::from_function(g, [](const Point& p) { return std::sin(2 * p[0]) * p[1] + p[0] * p[0]; });
  const auto Id = CoefficientField::identity(g);
  CHECK((div_a_solve(Id, u, x, r).values() - harmonic_extension(u, x, r).values()).cwiseAbs().maxCoeff() <= 1e-8);

  const auto y1 = ScalarField::from_function(g, [](const Point& p) { return p[0]; });
  const auto D = CoefficientField::from_function(
      g,
      [](const Point&) {
        Matrix m = Matrix::Zero(2, 2);
        m(0, 0) = 4;
        m(1, 1) = 1;
        return m;
      },
      {1.0, 4.0, 1.0, 0.0});
  CHECK(max_error_inside(div_a_solve(D, y1, x, r), x, r, [](const Point& p) { return p[0]; }) <= 1e-6);

  // A full symmetric constant matrix also reproduces affine fields.
  const auto F = CoefficientField::from_function(
      g,
      [](const Point&) {
        Matrix m(2, 2);
        m << 2.0, 0.6, 0.6, 1.0;
        return m;
      },
      {0.7, 2.3, 1.0, 0.0});
  const auto aff = ScalarField::from_function(g, [](const Point& p) { return p[0] - 2 * p[1]; });
  CHECK(max_error_inside(div_a_solve(F, aff, x, r), x, r, [](const Point& p) { return p[0] - 2 * p[1]; }) <= 1e-6);

  const auto V = CoefficientField::from_function(
      g, [](const Point& p) { return Matrix(Matrix::Identity(2, 2) * (1 + 0.2 * p.norm())); }, {1.0, 1.3, 1.0, 0.2});
  const BallDirichletProblem problem(y1, &V, x, r);
  const auto sol = problem.solve();
  CHECK(sol.residual <= 1e-8);
  CHECK(sol.discrete_energy <= problem.energy(y1));
  // Any trace-matching perturbation raises the discrete energy.
  const auto bumpy = y1.with_values(y1.values() + 0.01 * bump(g, x, 0.3).values());
  CHECK(sol.discrete_energy <= problem.energy(bumpy));
  CHECK(sol.discrete_energy <= problem.energy(sol.field.with_values(sol.field.values() + 1e-3 * bump(g, x, 0.3).values())));
}

TEST_CASE("orthogonality_residual") {
  const Grid g = Grid::cube(2, -1.0, 1.0, 1.0 / 128);
  const auto harmonic = ScalarField::from_function(g, [](const Point& p) { return p[0] * p[1] + p[0]; });
  CHECK(orthogonality_residual(harmonic, pt(0, 0), 0.5).value <= 1e-3);

  const auto kink = ScalarField::from_function(g, [](const Point& p) { return std::max(p[0], 0.0); });
  const auto res = orthogonality_residual(kink, pt(0.1, 0), 0.5);
  CHECK_FALSE(res.absolute);
  CHECK(res.value <= 1e-2);

  const auto constant = orthogonality_residual(ScalarField::constant(g, 3.0), pt(0, 0), 0.5);
  CHECK(constant.absolute);
  CHECK(constant.value <= 1e-10);
}
