#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "fblab/diagnostics.hpp"
#include "fblab/report.hpp"

using namespace fblab;
using std::numbers::pi;

namespace {

Point pt(double a, double b) {
  Point p(2);
  p << a, b;
  return p;
}

Point pt(double a, double b, double c) {
  Point p(3);
  p << a, b, c;
  return p;
}

Grid plane(double h) { return Grid::cube(2, -1.0, 1.0, h); }

ScalarField field(const Grid& g, double (*f)(const Point&)) { return ScalarField::from_function(g, f); }

double x1(const Point& p) { return p[0]; }
double x1x2(const Point& p) { return p[0] * p[1]; }
double x1_plus(const Point& p) { return std::max(p[0], 0.0); }

CoefficientField tilted(const Grid& g) {
  return CoefficientField::from_function(
      g,
      [](const Point& p) {
        Matrix m(2, 2);
        const double s = std::sin(pi * p[0]) * std::cos(pi * p[1]), o = 0.5 * std::sin(pi * (p[0] + p[1]));
        m << 1 + 0.1 * s, 0.1 * o, 0.1 * o, 1 - 0.1 * s;
        return m;
      },
      {0.8, 1.2, 1.0, 1.0});
}

}  // namespace

TEST_CASE("omega") {
  const Grid g = plane(1.0 / 128);
  const auto u = field(g, x1);
  for (const double s : {0.1, 0.3, 0.7}) CHECK(omega(u, pt(0.1, -0.2), s) == doctest::Approx(1.0).epsilon(1e-3));
  const auto w = field(g, x1x2);
  for (const double s : {0.2, 0.5, 0.9}) CHECK(omega(w, pt(0, 0), s) == doctest::Approx(s / std::sqrt(2.0)).epsilon(0.01));
  CHECK(omega(ScalarField::constant(g, 4.0), pt(0, 0), 0.5) == 0.0);
  CHECK_THROWS_AS(omega(u, pt(0.8, 0), 0.5), OutOfDomainError);
  CHECK_THROWS_AS(omega(u, pt(0, 0), 0.0), PreconditionError);

  const double base = omega(w, pt(0.1, 0.2), 0.4);
  for (const double c : {-3.0, 0.25, 7.0}) {
    const ScalarField cw = w.with_values(c * w.values());
    CHECK(std::abs(omega(cw, pt(0.1, 0.2), 0.4) - std::abs(c) * base) <= 1e-12 * std::abs(c) * base);
  }

  const auto Id = CoefficientField::identity(g);
  CHECK(omega(w, frame_at(Id, pt(0.1, 0.2)), 0.4) == base);
}

TEST_CASE("omega in a frame") {
  // u_x for u = x1 under A = diag(4, 1) is 2 x1 up to a constant.
  const Grid g = plane(1.0 / 128);
  const auto A = CoefficientField::from_function(
      g,
      [](const Point&) {
        Matrix m = Matrix::Zero(2, 2);
        m(0, 0) = 4;
        m(1, 1) = 1;
        return m;
      },
      {1.0, 4.0, 1.0, 0.0});
  CHECK(omega(field(g, x1), frame_at(A, pt(0, 0)), 0.2) == doctest::Approx(2.0).epsilon(5e-3));
}

TEST_CASE("boundary_means") {
  const Grid g = plane(1.0 / 128);
  const auto Id = CoefficientField::identity(g);
  const double r = 0.4;
  const auto probe = make_probe(Id, pt(0, 0), r);
  const auto c = boundary_means(ScalarField::constant(g, 5.0), probe);
  CHECK(c.b == doctest::Approx(5.0));
  CHECK(c.b_plus == doctest::Approx(5.0));
  const auto l = boundary_means(field(g, x1), probe);
  CHECK(std::abs(l.b) < 1e-12);
  CHECK(l.b_plus == doctest::Approx(2 * r / pi).epsilon(5e-3));
  const auto p = boundary_means(field(g, x1_plus), probe);
  CHECK(p.b == doctest::Approx(r / pi).epsilon(5e-3));
  CHECK(p.b_plus == doctest::Approx(r / pi).epsilon(5e-3));
  CHECK_THROWS_AS(boundary_means(field(g, x1), make_probe(Id, pt(0.8, 0), 0.4)), OutOfDomainError);
  CHECK_THROWS_AS(make_probe(Id, pt(0, 0), -1.0), PreconditionError);
}

TEST_CASE("b_plus dominates |b|") {
  const Grid g = plane(1.0 / 64);
  const auto A = tilted(g);
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> U(-1, 1);
  for (int t = 0; t < 20; ++t) {
    const double a = U(rng), b = U(rng), c = U(rng), d = U(rng);
    const auto u = ScalarField::from_function(
        g, [&](const Point& p) { return a + b * p[0] + c * std::sin(3 * p[1]) + d * p[0] * p[1]; });
    const auto m = boundary_means(u, make_probe(A, pt(0.5 * U(rng), 0.5 * U(rng)), 0.2));
    CHECK(m.b_plus >= std::abs(m.b));
  }
}

TEST_CASE("g_class_membership") {
  const Grid g = plane(1.0 / 128);
  const auto Id = CoefficientField::identity(g);

  const auto lin = g_class_membership(field(g, x1), make_probe(Id, pt(0, 0), 0.1), GClassParams{});
  CHECK(lin.applicable);
  CHECK_FALSE(lin.member);
  CHECK(lin.b_margin == -std::numeric_limits<double>::infinity());

  const auto five = g_class_membership(ScalarField::constant(g, 5.0), make_probe(Id, pt(0, 0), 1e-5), GClassParams{});
  CHECK(five.applicable);
  CHECK(five.member);
  CHECK(five.omega == 0.0);
  CHECK(five.b_margin == doctest::Approx(5e5 - 4e4));
  CHECK(five.b_plus_margin == doctest::Approx(10.0));

  GClassParams p;
  p.tau = 0.01;
  const auto shifted = ScalarField::from_function(g, [](const Point& x) { return x[0] + 10.0; });
  const auto big = g_class_membership(shifted, make_probe(Id, pt(0, 0), 0.1), p);
  CHECK(big.applicable);
  CHECK_FALSE(big.member);
  CHECK(big.b_margin == doctest::Approx(100.0 - 1e4 * std::sqrt(1.0 + std::sqrt(0.1))).epsilon(1e-3));

  // Not applicable is a flag, distinct from non-membership.
  GClassParams small = p;
  small.r0 = 0.05;
  const auto na = g_class_membership(shifted, make_probe(Id, pt(0, 0), 0.1), small);
  CHECK_FALSE(na.applicable);
  const auto edge = g_class_membership(shifted, make_probe(Id, pt(0.7, 0), 0.2), p);
  CHECK_FALSE(edge.applicable);
  CHECK(edge.containment_margin == doctest::Approx(0.3 - 0.4));

  GClassParams bad;
  bad.c1 = 2.0;
  CHECK_THROWS_AS(g_class_membership(shifted, make_probe(Id, pt(0, 0), 0.1), bad), PreconditionError);
}

TEST_CASE("g_class_membership is monotone in C0") {
  const Grid g = plane(1.0 / 64);
  const auto A = tilted(g);
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> U(-1, 1);
  for (int t = 0; t < 10; ++t) {
    const double a = 50 * U(rng), b = U(rng);
    const auto u = ScalarField::from_function(g, [&](const Point& p) { return a + b * p[0] + p[1] * p[1]; });
    const auto probe = make_probe(A, pt(0.3 * U(rng), 0.3 * U(rng)), 1e-3 * (1 + std::abs(U(rng))));
    bool was = true;
    for (const double c0 : {1.0, 2.0, 5.0, 20.0, 100.0, 1e4}) {
      GClassParams p;
      p.c0 = c0;
      const bool now = g_class_membership(u, probe, p).member;
      CHECK((was || !now));
      was = now;
    }
  }
}

TEST_CASE("sign_locality") {
  const Grid g = plane(1.0 / 128);
  const auto Id = CoefficientField::identity(g);
  GClassParams p;
  p.tau = 0.01;
  const auto shifted = ScalarField::from_function(g, [](const Point& x) { return x[0] + 10.0; });
  const auto s = sign_locality(shifted, make_probe(Id, pt(0, 0), 1e-4), p);
  CHECK(s.applicable);
  CHECK(s.fraction == 0.0);
  CHECK(s.interior_wrong == 0);
  CHECK(s.samples > 100);

  const auto negative = shifted.with_values(-shifted.values());
  const auto n = sign_locality(negative, make_probe(Id, pt(0, 0), 1e-4), p);
  CHECK(n.applicable);
  CHECK(n.fraction == 0.0);

  CHECK_FALSE(sign_locality(field(g, x1), make_probe(Id, pt(0, 0), 0.1), p).applicable);
}

TEST_CASE("omega_log_growth and decay ratio") {
  const auto Id2 = [](const Grid& g) { return CoefficientField::identity(g); };
  const Grid g = plane(1.0 / 128);
  const auto lg = omega_log_growth(field(g, x1), Id2(g), pt(0, 0), 0.5, 4);
  REQUIRE(lg.rows.size() == 5);
  for (const auto& r : lg.rows) {
    CHECK(r.omega == doctest::Approx(1.0).epsilon(2e-3));
    CHECK(r.margin >= -1e-12);
  }
  CHECK(lg.fitted_constant <= 1.0 + 1e-9);

  const Grid f = plane(1.0 / 256);
  const double c1 = omega_log_growth(field(g, x1x2), Id2(g), pt(0.1, 0), 0.6, 4).fitted_constant;
  const double c2 = omega_log_growth(field(f, x1x2), Id2(f), pt(0.1, 0), 0.6, 4).fitted_constant;
  CHECK(c1 > 0.0);
  CHECK(std::abs(c2 / c1 - 1.0) <= 0.2);
  CHECK_THROWS_AS(omega_log_growth(field(g, x1), Id2(g), pt(0, 0), 0.5, -1), PreconditionError);

  CHECK(omega_decay_ratio(field(g, x1), Id2(g), pt(0, 0), 0.5, 0.25).ratio == doctest::Approx(1.0).epsilon(2e-3));
  for (const double theta : {0.2, 0.3, 0.45})
    CHECK(omega_decay_ratio(field(g, x1x2), Id2(g), pt(0, 0), 0.8, theta).ratio ==
          doctest::Approx(theta).epsilon(0.02));
  const auto flat = omega_decay_ratio(ScalarField::constant(g, 2.0), Id2(g), pt(0, 0), 0.5, 0.25);
  CHECK(flat.degenerate);
  CHECK(flat.ratio == 0.0);
  CHECK_THROWS_AS(omega_decay_ratio(field(g, x1), Id2(g), pt(0, 0), 0.5, 0.4, true), PreconditionError);
  CHECK_THROWS_AS(omega_decay_ratio(field(g, x1), Id2(g), pt(0, 0), 0.5, 0.5), PreconditionError);
}

TEST_CASE("acf_phi") {
  const Grid g = plane(1.0 / 128);
  const auto u = field(g, x1);
  for (const double r : {0.2, 0.4}) CHECK(acf_phi(u, pt(0, 0), r).phi == doctest::Approx(pi * pi / 4).epsilon(0.02));
  const auto one = acf_phi(field(g, x1_plus), pt(0, 0), 0.3);
  CHECK(one.phi_minus == 0.0);
  CHECK(one.phi == 0.0);
  CHECK(one.phi_plus > 0.0);

  const auto w = ScalarField::from_function(g, [](const Point& p) { return p[0] + 0.3 * p[1] * p[1] - 0.1; });
  const double base = acf_phi(w, pt(0.1, 0), 0.3).phi;
  for (const double c : {-2.0, 0.5, 3.0}) {
    const double scaled = acf_phi(w.with_values(c * w.values()), pt(0.1, 0), 0.3).phi;
    CHECK(std::abs(scaled - std::pow(c, 4) * base) <= 1e-10 * std::pow(c, 4) * base);
  }

  const Grid g3 = Grid::cube(3, -0.5, 0.5, 1.0 / 32);
  const auto u3 = ScalarField::from_function(g3, [](const Point& p) { return p[0]; });
  CHECK(acf_phi(u3, pt(0, 0, 0), 0.3).phi == doctest::Approx(pi * pi).epsilon(0.05));
}

TEST_CASE("acf_sweep") {
  const std::vector<double> radii{0.1, 0.15, 0.2, 0.25, 0.3};
  const double alpha = 0.5, delta = alpha / 24;
  auto fitted = [&](double h) {
    const Grid g = plane(h);
    const auto u = ScalarField::from_function(g, [](const Point& p) { return p[0] - 0.0123; });
    return acf_sweep(u, pt(0.0123, 0.0311), radii, delta, alpha);
  };
  const auto coarse = fitted(1.0 / 64), fine = fitted(1.0 / 128);
  CHECK(coarse.convention_extended);
  CHECK_FALSE(coarse.kernel_normalization.has_value());
  CHECK(coarse.values.size() == radii.size());
  for (const auto& v : fine.values) CHECK(v.phi == doctest::Approx(pi * pi / 4).epsilon(0.01));
  // Two-sided version of the fitted constant, so that the order is visible even when C = 0.
  auto spread = [&](const AcfSweep& s) {
    double d = 0.0;
    for (std::size_t i = 0; i < radii.size(); ++i)
      for (std::size_t j = i + 1; j < radii.size(); ++j)
        d = std::max(d, std::abs(s.values[i].phi - s.values[j].phi) / std::pow(radii[j], delta));
    return d;
  };
  CHECK(fine.fitted_constant <= spread(fine));
  CHECK(coarse.fitted_constant <= spread(coarse));
  CHECK(spread(fine) < 0.01);
  CHECK(spread(coarse) / spread(fine) >= 2.0);
  CHECK(coarse.constant_proxy == doctest::Approx(2.0).epsilon(1e-2));

  const Grid g = plane(1.0 / 64);
  const auto pos = ScalarField::from_function(g, [](const Point& p) { return p[0] * p[0] + p[1] * p[1]; });
  const auto zero = acf_sweep(pos, pt(0, 0), radii, delta, alpha);
  CHECK(zero.fitted_constant == 0.0);
  for (const auto& v : zero.values) CHECK(v.phi == 0.0);

  const auto u = field(g, x1);
  CHECK_THROWS_AS(acf_sweep(u, pt(0.2, 0), radii, delta, alpha), PreconditionError);
  CHECK_THROWS_AS(acf_sweep(u, pt(0, 0), radii, alpha / 12, alpha), PreconditionError);
  CHECK_THROWS_AS(acf_sweep(u, pt(0, 0), {0.2, 0.1}, delta, alpha), PreconditionError);

  const Grid g3 = Grid::cube(3, -0.5, 0.5, 1.0 / 16);
  const auto u3 = ScalarField::from_function(g3, [](const Point& p) { return p[0]; });
  const auto s3 = acf_sweep(u3, pt(0, 0, 0), {0.2, 0.3}, alpha / 32, alpha);
  REQUIRE(s3.kernel_normalization.has_value());
  CHECK(*s3.kernel_normalization == doctest::Approx(1.0 / (3 * 4 * pi / 3)));
  CHECK_FALSE(s3.convention_extended);
}

TEST_CASE("continuity and Lipschitz moduli") {
  const Grid g = plane(1.0 / 128);
  const auto Id = CoefficientField::identity(g);
  CHECK(continuity_modulus(field(g, x1), pt(0, 0), 0.5) == doctest::Approx(1.0).epsilon(0.02));
  CHECK(continuity_modulus(ScalarField::constant(g, 3.0), pt(0, 0), 0.5) <= 1e-13);

  const auto three = ScalarField::from_function(g, [](const Point& p) { return 3 * p[0]; });
  const auto l3 = lipschitz_constant(three, Id, pt(0, 0), 0.4);
  CHECK(l3.lipschitz == doctest::Approx(3.0).epsilon(1e-6));
  CHECK(l3.omega_2r0 == doctest::Approx(3.0).epsilon(2e-3));
  CHECK(l3.ratio == doctest::Approx(0.75).epsilon(2e-3));
  CHECK(lipschitz_constant(field(g, x1_plus), Id, pt(0.05, 0), 0.3).lipschitz == doctest::Approx(1.0).epsilon(1e-6));

  std::mt19937 rng(11);
  std::uniform_real_distribution<double> U(-1, 1);
  for (int t = 0; t < 10; ++t) {
    const double a = U(rng), b = U(rng), c = 3 * U(rng);
    const auto u = ScalarField::from_function(
        g, [&](const Point& p) { return a * p[0] + std::sin(c * p[1]) + b * std::abs(p[0] - p[1]); });
    const Point x0 = pt(0.2 * U(rng), 0.2 * U(rng));
    CHECK(continuity_modulus(u, x0, 0.25) <= lipschitz_constant(u, Id, x0, 0.25).lipschitz);
  }

  const auto pairs = dyadic_pairs(g, pt(0, 0), 0.5, 8);
  CHECK(pairs.size() % 8 == 0);
  for (const auto& p : pairs) {
    CHECK(p.x.norm() <= 0.5 + 1e-12);
    CHECK(p.y.norm() <= 0.5 + 1e-12);
  }
  CHECK_THROWS_AS(dyadic_pairs(g, pt(0.8, 0), 0.5, 8), OutOfDomainError);
}

TEST_CASE("gradient_holder") {
  const Grid g = plane(1.0 / 128);
  const auto lin = ScalarField::from_function(g, [](const Point& p) { return p[0] + 2.0; });
  const auto flat = gradient_holder(lin, pt(0, 0), 0.3, 0.5);
  CHECK(flat.constant_gradient);
  CHECK(flat.seminorm == 0.0);
  CHECK(flat.pass);
  CHECK(flat.target_exponent == doctest::Approx(1.0 / 9));

  const auto quad = ScalarField::from_function(g, [](const Point& p) { return 2.0 + p[0] * p[0] + 0.5 * p[1] * p[1]; });
  const auto q = gradient_holder(quad, pt(0.1, 0), 0.3, 0.5);
  CHECK_FALSE(q.constant_gradient);
  CHECK(q.fitted_exponent >= 0.95);
  CHECK(q.fitted_exponent <= 1.0);
  CHECK(q.pass);

  CHECK_THROWS_AS(gradient_holder(field(g, x1), pt(0, 0), 0.3, 0.5), PreconditionError);
}

TEST_CASE("perturbation_inequality") {
  const Grid g = plane(1.0 / 64);
  const auto Id = CoefficientField::identity(g);
  const auto q = PhaseWeights::constant(g, 1.0, 1.0);
  const auto u = ScalarField::from_function(g, [](const Point& p) { return p[0] + 0.2 * p[1] * p[1]; });
  const auto probe = make_probe(Id, pt(0.1, 0), 0.3);
  MinimalityCertificate cert;
  cert.kappa_hat = 0.2;
  cert.alpha = 0.5;
  const double expected = 0.2 * std::pow(0.3, 2.5);
  const auto phi = bump(g, pt(0.1, 0), 0.25);
  CHECK(perturbation_inequality(u, Id, q, probe, {phi, 0.0, Phase::plus}, cert) == doctest::Approx(expected));
  CHECK(perturbation_inequality(u, Id, q, probe, {ScalarField::constant(g, 0.0), 0.4, Phase::minus}, cert) ==
        doctest::Approx(expected));
  CHECK_THROWS_AS(perturbation_inequality(u, Id, q, probe, {phi, 1.5, Phase::plus}, cert), ConstraintViolationError);
  CHECK_THROWS_AS(perturbation_inequality(u, Id, q, probe, {bump(g, pt(0.1, 0), 0.4), 0.2, Phase::plus}, cert),
                  PreconditionError);
}

TEST_CASE("diagnostics_sweep and report") {
  const Grid g = plane(1.0 / 64);
  const auto A = tilted(g);
  const auto u = ScalarField::from_function(g, [](const Point& p) { return p[0] + 0.5 * std::sin(pi * p[1]) + 0.01; });
  const std::vector<Point> centers{pt(0, 0), pt(0.3, -0.2), pt(0.9, 0)};
  const std::vector<double> radii{1e-3, 0.05, 0.2};
  GClassParams p;
  p.r0 = 0.1;
  const auto rows = diagnostics_sweep(u, A, centers, radii, p, 1);
  REQUIRE(rows.size() == 9);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].probe.x == centers[i / 3]);
    CHECK(rows[i].probe.r == radii[i % 3]);
    CHECK(rows[i].omega >= 0.0);
    CHECK(rows[i].b_plus >= std::abs(rows[i].b));
  }
  CHECK_FALSE(rows[2].g.applicable);
  CHECK(rows[2].notes.find("r > r0") != std::string::npos);
  CHECK(rows[8].notes.find("out of domain") != std::string::npos);

  const auto threaded = diagnostics_sweep(u, A, centers, radii, p, 3);
  std::ostringstream a, b;
  write_diagnostics_csv(a, rows, 0.02);
  write_diagnostics_csv(b, threaded, 0.02);
  CHECK(a.str() == b.str());
  std::istringstream lines(a.str());
  std::string header;
  std::getline(lines, header);
  CHECK(header ==
        "x0,x1,r,omega,b,b_plus,g_member,margin1,margin2,margin3,tau,c0,c1,r0,delta,alpha,applicable,notes");
  int count = 0;
  for (std::string line; std::getline(lines, line);) ++count;
  CHECK(count == 9);

  CHECK(format_number(-std::numeric_limits<double>::infinity()) == "-inf");
  CHECK(std::stod(format_number(0.1)) == 0.1);
  CHECK(std::stod(format_number(pi)) == pi);

  MinimalityCertificate cert;
  cert.kappa_hat = 0.5;
  cert.alpha = 0.5;
  cert.probes.push_back({pt(0.1, 0.2), 0.05, "bump+", 0.01, -0.001});
  const auto j = to_json(cert);
  CHECK(j["kappa_hat"] == 0.5);
  CHECK(j["probes"][0]["x"][1] == 0.2);
  CHECK(j["probes"][0]["competitor"] == "bump+");
}
