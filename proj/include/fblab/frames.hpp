#pragma once

// The affine change of variables that freezes the coefficient matrix to the
// identity at a point:
//
//   T_x(y)    = A^{-1/2}(x) (y - x) + x
//   T_x^-1(y) = A^{1/2}(x)  (y - x) + x
//   E_x(x, r) = T_x^-1(B(x, r))
//
// The frame stores det A^{1/2}(x) = |det T_x^-1|, the factor by which volumes
// grow when mapping the ball back onto the ellipsoid.  Energies therefore obey
// J_E(v) = det_factor * J_B(v_x).

#include <vector>

#include "fblab/fields.hpp"

namespace fblab {

/// Unique symmetric positive definite square root of M, after symmetrization.
/// Throws InvalidMatrixError for non-symmetric or non-positive-definite input.
template <typename Scalar>
MatrixT<Scalar> spd_sqrt(const MatrixT<Scalar>& M) {
  if (M.rows() != M.cols() || M.rows() < 1) throw InvalidMatrixError("matrix must be square");
  const Scalar scale = std::max(Scalar(1), M.cwiseAbs().maxCoeff());
  if ((M - M.transpose()).cwiseAbs().maxCoeff() > Scalar(1e-12) * scale)
    throw InvalidMatrixError("matrix is not symmetric");
  const MatrixT<Scalar> sym = (M + M.transpose()) / Scalar(2);
  Eigen::SelfAdjointEigenSolver<MatrixT<Scalar>> es(sym);
  if (es.info() != Eigen::Success || !(es.eigenvalues().minCoeff() > Scalar(0)))
    throw InvalidMatrixError("matrix is not positive definite");
  const MatrixT<Scalar> root =
      es.eigenvectors() * es.eigenvalues().cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
  return (root + root.transpose()) / Scalar(2);
}

template <typename Scalar>
struct BasicAffineFrame {
  using PointType = PointT<Scalar>;
  using MatrixType = MatrixT<Scalar>;

  PointType anchor;
  MatrixType sqrt_matrix;
  MatrixType inv_sqrt_matrix;
  Scalar det_factor;

  /// Frame anchored at x for the frozen coefficient A(x).
  static BasicAffineFrame from_matrix(const PointType& x, const MatrixType& A_at_x) {
    const MatrixType root = spd_sqrt<Scalar>(A_at_x);
    Eigen::SelfAdjointEigenSolver<MatrixType> es(root);
    const MatrixType inv = es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() *
                           es.eigenvectors().transpose();
    return BasicAffineFrame{x, root, (inv + inv.transpose()) / Scalar(2), es.eigenvalues().prod()};
  }

  static BasicAffineFrame identity(const PointType& x) {
    const auto n = x.size();
    return BasicAffineFrame{x, MatrixType::Identity(n, n), MatrixType::Identity(n, n), Scalar(1)};
  }

  int dim() const { return static_cast<int>(anchor.size()); }

  /// T_x
  PointType map_forward(const PointType& y) const { return inv_sqrt_matrix * (y - anchor) + anchor; }
  /// T_x^-1
  PointType map_inverse(const PointType& y) const { return sqrt_matrix * (y - anchor) + anchor; }

  bool is_identity(Scalar tol = Scalar(1e-14)) const {
    return (sqrt_matrix - MatrixType::Identity(dim(), dim())).cwiseAbs().maxCoeff() <= tol;
  }
};

using AffineFrame = BasicAffineFrame<double>;

/// Frame for the coefficient field interpolated at x.
AffineFrame frame_at(const CoefficientField& A, const Point& x);

/// det A^{1/2}(x): the Jacobian of T_x^-1.
inline double energy_transport_factor(const AffineFrame& frame) { return frame.det_factor; }

struct Ellipsoid {
  AffineFrame frame;
  double radius;

  bool contains(const Point& p) const { return (frame.inv_sqrt_matrix * (p - frame.anchor)).norm() < radius; }
};

/// Images under T_x^-1 of `count` uniformly spread points of the sphere of radius r.
std::vector<Point> ellipsoid_boundary_samples(const Ellipsoid& e, int count);

/// Cells meeting the ellipsoid with their covered volume fraction, in lexicographic order.
/// Cut cells are resolved by sub-sampling; identity frames use the exact ball fractions.
void for_each_cell_in_ellipsoid(const Grid& grid, const Ellipsoid& e,
                                const std::function<void(const Index3&, double)>& fn);

double integrate_cells_over_ellipsoid(const Grid& grid, const Ellipsoid& e,
                                      const std::function<double(const Index3&)>& cell_integrand);

/// u_x, A_x and (q_x)_{+-} resampled on a fresh grid centered at the anchor.
struct TransformedFrame {
  AffineFrame frame;
  double radius;
  ScalarField u_x;
  CoefficientField A_x;
  PhaseWeights q_x;
};

/// Spacing used for pulled-back grids: h * lambda^{1/2} / 2, refined further for
/// radii below eight such cells.
double pullback_spacing(double h, double lambda_min, double radius);

/// u o T_x^-1 on a grid over B(x, radius).  Nodes whose preimage is needed by any
/// quadrature on B(x, radius) must map inside u's domain (OutOfDomainError otherwise);
/// the remaining corner nodes are clamped into the domain.
ScalarField pullback_scalar(const ScalarField& u, const AffineFrame& frame, double radius, double spacing);

TransformedFrame pullback(const ScalarField& u, const CoefficientField& A, const PhaseWeights& q, const Point& x,
                          double radius);

}  // namespace fblab
