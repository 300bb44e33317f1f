#pragma once

// Local functionals
//
//   J(v) = int <A grad v, grad v> + q_+^2 chi{v > 0} + q_-^2 chi{v < 0}
//
// on balls B(x, r) and ellipsoids E_x(x, r), minimality gaps against competitors,
// and the multiplicative scaling competitors v = (1 + lambda phi) u^{+-}.
//
// Quadrature is cell based.  On a cell the Dirichlet density is
//
//   sum_i a_ii mean_e (d_e v / h)^2 + sum_{i != j} a_ij D_i D_j
//
// where e runs over the cell edges along axis i and D_i is the mean edge
// difference quotient, with A taken at the cell center.  Summed over full cells
// this is the standard 5-point (7-point) energy.  Phase indicators are exact for
// cells whose corner values share a sign; other cells are sub-sampled through the
// multilinear interpolant.

#include <string>
#include <vector>

#include "fblab/fields.hpp"
#include "fblab/frames.hpp"

namespace fblab {

struct LocalEnergyBreakdown {
  double dirichlet_part = 0.0;
  double plus_phase_part = 0.0;
  double minus_phase_part = 0.0;
  double total = 0.0;
};

/// Dirichlet density on a cell for the constant matrix A.
double cell_dirichlet_density(const ScalarField& v, const Matrix& A, const Index3& cell);

/// Fractions of the cell where the multilinear interpolant of v is > 0 and < 0.
struct SignFractions {
  double plus = 0.0;
  double minus = 0.0;
};
SignFractions cell_sign_fractions(const ScalarField& v, const Index3& cell);

/// Coefficient matrix at a cell center.
Matrix cell_coefficient(const CoefficientField& A, const Index3& cell);

double dirichlet_energy(const ScalarField& v, const Ball& ball);
double dirichlet_energy(const ScalarField& v, const Ellipsoid& e);
double dirichlet_energy(const ScalarField& v, const CoefficientField& A, const Ball& ball);
double dirichlet_energy(const ScalarField& v, const CoefficientField& A, const Ellipsoid& e);

/// J on B(x, r), or J^+ when plus_only (then v >= 0 is required and q_- is ignored).
LocalEnergyBreakdown functional_on_ball(const ScalarField& v, const CoefficientField& A, const PhaseWeights& q,
                                        const Point& x, double r, bool plus_only = false);

/// J on E_x(x, r) for the given frame.
LocalEnergyBreakdown functional_on_ellipsoid(const ScalarField& v, const CoefficientField& A, const PhaseWeights& q,
                                             const AffineFrame& frame, double r, bool plus_only = false);

/// J (or J^+) over the whole grid domain, every cell counted in full.
LocalEnergyBreakdown functional_on_domain(const ScalarField& v, const CoefficientField& A, const PhaseWeights& q,
                                          bool plus_only = false);

/// Sampled sup over the sphere of |u - v|.
double trace_deviation(const ScalarField& u, const ScalarField& v, const Point& x, double r);

/// Largest nodal gradient norm of u over the nodes of cells meeting B(x, r).
double local_lipschitz(const ScalarField& u, const Point& x, double r);

struct MinimalityGap {
  double additive_gap = 0.0;
  double multiplicative_ratio = 1.0;
  double energy_u = 0.0;
  double energy_v = 0.0;
};

/// additive_gap = J(v) + kappa r^{n+alpha} - J(u), multiplicative_ratio = J(u)/J(v).
/// The traces must agree on the sphere to 10 h Lip(u).
MinimalityGap minimality_gap(const ScalarField& u, const ScalarField& v, const CoefficientField& A,
                             const PhaseWeights& q, const Point& x, double r, double kappa, double alpha,
                             bool plus_only = false);

enum class Phase { plus, minus };

/// (1 + lambda phi) u on {u > 0} (Phase::plus) or {u < 0} (Phase::minus), u elsewhere.
ScalarField scaling_competitor(const ScalarField& u, const ScalarField& phi, double lambda, Phase sign);

/// (1 - |y - c|^2 / rho^2)^2 inside B(c, rho), zero outside: a C^1 bump of height 1.
ScalarField bump(const Grid& grid, const Point& center, double radius);

struct CertificateProbe {
  Point x;
  double r = 0.0;
  std::string competitor;
  /// J(v) + kappa_hat r^{n+alpha} - J(u)
  double gap = 0.0;
  /// J(v) - J(u)
  double raw_gap = 0.0;
};

struct SkippedProbe {
  Point x;
  double r = 0.0;
  std::string reason;
};

struct MinimalityCertificate {
  double kappa_hat = 0.0;
  double alpha = 1.0;
  std::vector<CertificateProbe> probes;
  std::vector<SkippedProbe> skipped;
};

}  // namespace fblab
