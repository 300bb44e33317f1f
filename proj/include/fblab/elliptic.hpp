#pragma once

// Dirichlet problems on balls: the harmonic replacement u_r^* and solves of
// div(A grad u) = 0 with the trace of a given field.
//
// Unknowns are the nodes strictly inside B(x, r).  The discrete energy is
//
//   h^{n-2} sum_edges w_e (v_P - v_Q)^2 + h^{n-2} sum_cut w_e (v_P - g)^2 / theta
//     + h^n sum_cells sum_{i != j} a_ij D_i D_j
//
// where cut edges end on the sphere at fraction theta of the spacing with value g
// interpolated from the trace (Shortley-Weller), w_e averages a_ii over the cells
// sharing the edge, and the cross terms run over every cell with an unknown
// corner.  Its minimizer solves a symmetric positive definite system.

#include <Eigen/Sparse>

#include "fblab/fields.hpp"

namespace fblab {

struct DirichletSolution {
  ScalarField field;
  double residual = 0.0;
  int iterations = 0;
  double discrete_energy = 0.0;
};

class BallDirichletProblem {
 public:
  /// `trace` supplies boundary data on the sphere and the values kept outside the ball.
  /// A null coefficient pointer means the Laplacian.
  BallDirichletProblem(const ScalarField& trace, const CoefficientField* A, const Point& center, double radius);

  const Point& center() const noexcept { return center_; }
  double radius() const noexcept { return radius_; }
  Eigen::Index unknown_count() const noexcept { return static_cast<Eigen::Index>(unknowns_.size()); }

  /// Preconditioned conjugate gradients from the trace mean; throws ConvergenceError.
  DirichletSolution solve(double tolerance = 1e-10, int max_iterations = 100000) const;

  /// Discrete energy of a field on the same grid, read at the unknown nodes.
  double energy(const ScalarField& candidate) const;

 private:
  ScalarField trace_;
  Point center_;
  double radius_;
  std::vector<std::size_t> unknowns_;
  Eigen::SparseMatrix<double> matrix_;
  Eigen::VectorXd rhs_;
  double constant_ = 0.0;
};

/// Harmonic replacement of u in B(x, r); u is kept outside the ball.
ScalarField harmonic_extension(const ScalarField& u, const Point& x, double r);

/// Solution of div(A grad v) = 0 in B(x, r) with v = u on the sphere; u is kept outside.
ScalarField div_a_solve(const CoefficientField& A, const ScalarField& u, const Point& x, double r);

struct OrthogonalityResidual {
  double value = 0.0;
  /// Set when the replacement has no energy and the absolute residual is returned.
  bool absolute = false;
};

/// |int <grad(u - u*), grad u*>| / int |grad u*|^2 for u* the harmonic replacement on B(x, r).
OrthogonalityResidual orthogonality_residual(const ScalarField& u, const Point& x, double r);

}  // namespace fblab
