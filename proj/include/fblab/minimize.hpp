#pragma once

// Discrete minimizers of J and J^+ on the whole grid domain, planar seeds, and
// almost-minimality certificates measured against a family of competitors.

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "fblab/energy.hpp"

namespace fblab {

struct SolverParams {
  /// Smoothing widths, strictly decreasing; empty means {8h, 4h, 2h}.
  std::vector<double> epsilon_schedule;
  int max_iterations = 20000;
  /// Stage stops once the energy decrease over `window` iterations falls below this fraction of J.
  double energy_tolerance = 1e-10;
  int window = 20;
  int history = 12;

  void validate(double h) const;
  std::vector<double> schedule(double h) const;
};

enum class SeedKind { planar_one_phase, planar_two_phase, linear, perturbed };

struct SeedSpec {
  SeedKind kind = SeedKind::linear;
  SeedKind base = SeedKind::planar_one_phase;
  double a = 1.0;
  double b = 1.0;
  Point normal;
  double offset = 0.0;
  double amplitude = 0.0;
  Point bump_center;
  double bump_radius = 0.0;
};

ScalarField seed(const SeedSpec& spec, const Grid& grid);

/// Multilinear resampling of f onto another grid whose domain lies inside f's.
ScalarField resample(const ScalarField& f, const Grid& grid);

/// C^2 one-sided sigmoid: 0 for t <= 0, 6t^5 - 15t^4 + 10t^3 on [0, 1], 1 for t >= 1.
double smooth_step(double t);
double smooth_step_derivative(double t);

/// J_eps(v) = v^T K v + sum_k w_k h^n [q_+^2 H(v_k/eps) + q_-^2 H(-v_k/eps)] over the
/// interior nodes, with boundary nodes fixed to the boundary data.  K is the cell
/// quadrature of <A grad v, grad v>; w_k are trapezoid weights.
class SmoothedFunctional {
 public:
  SmoothedFunctional(const CoefficientField& A, const PhaseWeights& q, const ScalarField& boundary_data,
                     bool plus_only);

  Eigen::Index size() const noexcept { return static_cast<Eigen::Index>(interior_.size()); }
  double value(const Eigen::VectorXd& x, double eps) const;
  double value_and_gradient(const Eigen::VectorXd& x, double eps, Eigen::VectorXd& grad) const;
  /// Diagonal of the Dirichlet Hessian, used for scaling.
  const Eigen::VectorXd& dirichlet_diagonal() const noexcept { return diagonal_; }

  /// Grid node of the k-th unknown.
  std::size_t node(Eigen::Index k) const { return interior_[static_cast<std::size_t>(k)]; }
  Eigen::VectorXd restrict(const ScalarField& f) const;
  ScalarField extend(const Eigen::VectorXd& x) const;
  /// Minimizes the Dirichlet part with pinned nodes held at 0.  With plus_only, nodes
  /// that come out negative are pinned as well and the solve is repeated.
  Eigen::VectorXd relax(const Eigen::VectorXd& x, std::vector<char> pinned, bool plus_only) const;
  /// Interior values solving the Dirichlet problem for the boundary data alone.
  Eigen::VectorXd dirichlet_solution() const;

 private:
  ScalarField boundary_;
  bool plus_only_;
  std::vector<std::size_t> interior_;
  Eigen::SparseMatrix<double> K_;
  Eigen::VectorXd linear_;
  double constant_ = 0.0;
  Eigen::VectorXd diagonal_;
  Eigen::VectorXd plus_weight_;
  Eigen::VectorXd minus_weight_;
};

struct MinimizeReport {
  ScalarField field;
  std::vector<double> epsilons;
  std::vector<double> smoothed_energy;
  std::vector<double> sharp_energy;
  std::vector<int> iterations;
};

/// Continuation in eps with Jacobi-scaled L-BFGS and Armijo backtracking.
/// plus_only projects onto v >= 0 after every step.  At the end of each stage the
/// Dirichlet energy is re-minimized with two choices of nodes held at 0: the exact
/// zeros, and the values below eps/2 in magnitude that do not border the opposite
/// phase.  Whichever lowers the sharp J most replaces the iterate.
MinimizeReport minimize_functional_report(const CoefficientField& A, const PhaseWeights& q,
                                          const ScalarField& boundary_data, const SolverParams& params,
                                          bool plus_only, const std::optional<ScalarField>& initial = std::nullopt);

ScalarField minimize_functional(const CoefficientField& A, const PhaseWeights& q, const ScalarField& boundary_data,
                                const SolverParams& params, bool plus_only);

struct CertifyOptions {
  bool plus_only = false;
  int threads = 1;
};

/// Probe centers from a Halton sequence over the points at distance at least half the
/// inradius from the boundary; radii r0, r0/2, r0/4 with r0 a quarter of the distance.
std::vector<Point> probe_centers(const Grid& grid, int count);

MinimalityCertificate certify_almost_minimality(const ScalarField& u, const CoefficientField& A, const PhaseWeights& q,
                                                double alpha, int probe_count, const CertifyOptions& options = {});

std::pair<ScalarField, MinimalityCertificate> perturb_to_almost_minimizer(
    const ScalarField& u, double amplitude, const ScalarField& bump_field, const CoefficientField& A,
    const PhaseWeights& q, double alpha, int probe_count, const CertifyOptions& options = {});

}  // namespace fblab
