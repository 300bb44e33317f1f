#pragma once

// Monitored quantities at sampled points and scales: omega, the sphere means b and
// b^+, membership in the class G(tau, C0, C1, r0), sign locality, log growth and
// decay of omega, the ACF functional and its almost-monotonicity sweep, continuity
// and Lipschitz moduli, gradient Hoelder fits and the scaling perturbation check.
//
// Frame variants work with u_x = u o T_x^-1, the field seen in coordinates where
// A(x) is the identity.

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "fblab/energy.hpp"

namespace fblab {

struct ProbeBall {
  Point x;
  double r = 0.0;
  AffineFrame frame;
};

ProbeBall make_probe(const CoefficientField& A, const Point& x, double r);

struct GClassParams {
  double tau = 0.005;
  double c0 = 1.0;
  double c1 = 3.0;
  double r0 = 1.0;
  /// Almost-minimality exponent entering r^alpha omega^2.
  double alpha = 0.5;

  void validate() const;
  /// k = lambda^{1/2} Lambda^{-1/2} / 6
  static double k(const CoefficientField& A);
};

/// Root mean square of |grad u| over B(x, s).
double omega(const ScalarField& u, const Point& x, double s);
/// Root mean square of |grad u_x| over B(x, s) for the frame anchored at x.
double omega(const ScalarField& u, const AffineFrame& frame, double s);

struct BoundaryMeans {
  double b = 0.0;
  double b_plus = 0.0;
};

/// Sphere averages of u_x and |u_x| over the sphere of radius r around the anchor.
BoundaryMeans boundary_means(const ScalarField& u, const ProbeBall& probe);

struct GClassResult {
  /// False when r > r0 or E_x(x, 2r) leaves the domain; the margins below are then unset
  /// except the containment margin.
  bool applicable = false;
  bool member = false;
  double omega = 0.0;
  BoundaryMeans means;
  /// min over axes of (distance of x to the faces) - 2r sqrt(A_ii(x)).
  double containment_margin = 0.0;
  /// r^-1 |b| - C0 tau^-n (1 + r^alpha omega^2)^{1/2}; -infinity when b vanishes.
  double b_margin = -std::numeric_limits<double>::infinity();
  /// C1 |b| - b^+
  double b_plus_margin = -std::numeric_limits<double>::infinity();
};

GClassResult g_class_membership(const ScalarField& u, const ProbeBall& probe, const GClassParams& params);

struct SignLocality {
  bool applicable = false;
  /// Fraction of samples of E_x(x, tau r / 3) where u sign(b) < 0.
  double fraction = 0.0;
  /// Wrong-sign samples at least one grid cell inside the ellipsoid, or the anchor itself.
  int interior_wrong = 0;
  int samples = 0;
};

SignLocality sign_locality(const ScalarField& u, const ProbeBall& probe, const GClassParams& params);

struct LogGrowthRow {
  double s = 0.0;
  double omega = 0.0;
  /// C omega(r) + C log(r/s) - omega(s) with the fitted C.
  double margin = 0.0;
};

struct LogGrowth {
  std::vector<LogGrowthRow> rows;
  double fitted_constant = 0.0;
};

/// omega(u_x, x, 2^-j r) for j = 0..depth and the least C with
/// omega(s) <= C omega(r) + C log(r/s).
LogGrowth omega_log_growth(const ScalarField& u, const CoefficientField& A, const Point& x, double r, int depth);

struct DecayRatio {
  double ratio = 0.0;
  /// omega(u_x, x, r) vanished; ratio reported as 0.
  bool degenerate = false;
};

/// omega(u_x, x, theta r) / omega(u_x, x, r); theta in (0, 1/2), or (0, 1/3) when two_phase.
DecayRatio omega_decay_ratio(const ScalarField& u, const CoefficientField& A, const Point& x, double r, double theta,
                             bool two_phase = false);

struct AcfValue {
  double phi_plus = 0.0;
  double phi_minus = 0.0;
  double phi = 0.0;
};

/// Phi_+- = int_B |grad u^+-|^2 |z - y|^{2-n} (kernel 1 in the plane), Phi = r^-4 Phi_+ Phi_-.
AcfValue acf_phi(const ScalarField& u, const Point& y, double r);

struct AcfSweep {
  Point anchor;
  double anchor_value = 0.0;
  double anchor_tolerance = 0.0;
  std::vector<double> radii;
  std::vector<AcfValue> values;
  double delta = 0.0;
  double alpha = 0.0;
  /// Least C >= 0 with Phi(s) <= Phi(r) + C r^delta over all sampled s < r.
  double fitted_constant = 0.0;
  /// 1 + (mean of |grad u|^2 over B(x0, 2 r0))^2 + ((log r0)_+)^4 with r0 the largest radius.
  double constant_proxy = 0.0;
  /// (n (n - 2) omega_n)^-1; unset in the plane.
  std::optional<double> kernel_normalization;
  /// Planar sweeps use the kernel |z - y|^0 by convention.
  bool convention_extended = false;
};

/// Requires |u(x0)| <= 2h Lip(u), 0 < delta < alpha / (4 (n + 1)) and ascending radii.
AcfSweep acf_sweep(const ScalarField& u, const Point& x0, const std::vector<double>& radii, double delta,
                   double alpha);

struct PairSample {
  Point x;
  Point y;
};

/// Point pairs in B(x0, r0) at separations 2 r0, r0, r0/2, ... down to 4h, pair_count per
/// separation.  The coordinate axes are always among the pair directions.
std::vector<PairSample> dyadic_pairs(const Grid& grid, const Point& x0, double r0, int pair_count);

/// max |u(x) - u(y)| / (|x - y| (1 + log(2 r0 / |x - y|))) over dyadic_pairs.
double continuity_modulus(const ScalarField& u, const Point& x0, double r0, int pair_count = 32);

struct LipschitzReport {
  double lipschitz = 0.0;
  /// omega(u_x0, x0, 2 r0)
  double omega_2r0 = 0.0;
  double ratio = 0.0;
};

/// Largest pairwise slope over dyadic_pairs and its ratio to omega(u_x0, x0, 2 r0) + 1.
LipschitzReport lipschitz_constant(const ScalarField& u, const CoefficientField& A, const Point& x0, double r0,
                                   int pair_count = 32);

struct HolderReport {
  Point center;
  double radius = 0.0;
  double target_exponent = 0.0;
  double fitted_exponent = 0.0;
  double seminorm = 0.0;
  bool constant_gradient = false;
  bool pass = false;
};

/// Log-log fit of the largest gradient difference per dyadic separation over B(center, radius),
/// which must keep |u| >= 4h Lip(u).  Passes when the exponent is at least
/// alpha / (n + 2 + alpha) - 0.05.
HolderReport gradient_holder(const ScalarField& u, const Point& center, double radius, double alpha,
                             int pair_count = 32);

struct PerturbationSpec {
  ScalarField phi;
  double amplitude = 0.0;
  Phase sign = Phase::plus;
};

/// J(v) + kappa_hat r^{n+alpha} - J(u) on the probe ball for v = scaling_competitor(u, phi, amplitude, sign).
double perturbation_inequality(const ScalarField& u, const CoefficientField& A, const PhaseWeights& q,
                               const ProbeBall& probe, const PerturbationSpec& spec,
                               const MinimalityCertificate& certificate, bool plus_only = false);

struct DiagnosticsRow {
  ProbeBall probe;
  GClassParams params;
  double omega = 0.0;
  double b = 0.0;
  double b_plus = 0.0;
  GClassResult g;
  std::string notes;
};

/// One row per (center, radius) pair, centers outermost, in input order.
std::vector<DiagnosticsRow> diagnostics_sweep(const ScalarField& u, const CoefficientField& A,
                                              const std::vector<Point>& centers, const std::vector<double>& radii,
                                              const GClassParams& params, int threads = 1);

}  // namespace fblab
