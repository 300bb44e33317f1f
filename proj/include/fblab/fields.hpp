#pragma once

// Uniform Cartesian grids and the scalar / matrix fields sampled on them.
//
// Node storage is row-major with the last axis fastest.  All containers are
// immutable after construction apart from explicit value access, so fields
// can be shared across worker threads freely.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "fblab/errors.hpp"

namespace fblab {

inline constexpr int kMaxDim = 3;

template <typename Scalar>
using PointT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
template <typename Scalar>
using MatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

using Point = PointT<double>;
using Matrix = MatrixT<double>;
using Index3 = std::array<int, 3>;

/// Number of stored upper-triangle entries of a symmetric dim x dim matrix.
constexpr int symmetric_entries(int dim) { return dim * (dim + 1) / 2; }

template <typename Scalar>
class BasicGrid {
 public:
  using PointType = PointT<Scalar>;

  BasicGrid() = default;

  BasicGrid(int dim, PointType origin, Scalar spacing, Index3 shape)
      : dim_(dim), origin_(std::move(origin)), spacing_(spacing), shape_(shape) {
    if (dim_ < 2 || dim_ > kMaxDim) throw PreconditionError("grid dimension must be 2 or 3");
    if (origin_.size() != dim_) throw PreconditionError("grid origin has wrong dimension");
    if (!(spacing_ > Scalar(0)) || !std::isfinite(static_cast<double>(spacing_)))
      throw PreconditionError("grid spacing must be positive and finite");
    for (int a = 0; a < kMaxDim; ++a) {
      if (a < dim_ && shape_[a] < 4) throw PreconditionError("grid needs at least 4 nodes per axis");
      if (a >= dim_) shape_[a] = 1;
    }
  }

  /// Grid covering [lo, hi]^dim with spacing as close to `spacing` as an integer node count allows.
  static BasicGrid cube(int dim, Scalar lo, Scalar hi, Scalar spacing) {
    const int cells = static_cast<int>(std::lround(static_cast<double>((hi - lo) / spacing)));
    Index3 shape{1, 1, 1};
    for (int a = 0; a < dim; ++a) shape[a] = cells + 1;
    PointType origin = PointType::Constant(dim, lo);
    return BasicGrid(dim, origin, (hi - lo) / Scalar(cells), shape);
  }

  int dim() const noexcept { return dim_; }
  Scalar spacing() const noexcept { return spacing_; }
  const PointType& origin() const noexcept { return origin_; }
  const Index3& shape() const noexcept { return shape_; }

  std::size_t node_count() const noexcept {
    return static_cast<std::size_t>(shape_[0]) * shape_[1] * shape_[2];
  }
  std::size_t cell_count() const noexcept {
    std::size_t c = 1;
    for (int a = 0; a < dim_; ++a) c *= static_cast<std::size_t>(shape_[a] - 1);
    return c;
  }

  std::size_t linear_index(const Index3& i) const noexcept {
    return (static_cast<std::size_t>(i[0]) * shape_[1] + i[1]) * shape_[2] + i[2];
  }
  Index3 multi_index(std::size_t k) const noexcept {
    Index3 i{0, 0, 0};
    i[2] = static_cast<int>(k % shape_[2]);
    k /= shape_[2];
    i[1] = static_cast<int>(k % shape_[1]);
    i[0] = static_cast<int>(k / shape_[1]);
    return i;
  }

  PointType node(const Index3& i) const {
    PointType p(dim_);
    for (int a = 0; a < dim_; ++a) p[a] = origin_[a] + spacing_ * Scalar(i[a]);
    return p;
  }
  PointType node(std::size_t k) const { return node(multi_index(k)); }

  PointType lower() const { return origin_; }
  PointType upper() const {
    PointType p(dim_);
    for (int a = 0; a < dim_; ++a) p[a] = origin_[a] + spacing_ * Scalar(shape_[a] - 1);
    return p;
  }

  /// True when i touches the outer face of the node lattice.
  bool is_boundary_node(const Index3& i) const noexcept {
    for (int a = 0; a < dim_; ++a)
      if (i[a] == 0 || i[a] == shape_[a] - 1) return true;
    return false;
  }

  bool contains(const PointType& p, Scalar slack = Scalar(0)) const {
    for (int a = 0; a < dim_; ++a) {
      const Scalar hi = origin_[a] + spacing_ * Scalar(shape_[a] - 1);
      if (p[a] < origin_[a] - slack || p[a] > hi + slack) return false;
    }
    return true;
  }

  /// Signed distance from p to the boundary of the domain box (positive inside).
  Scalar distance_to_boundary(const PointType& p) const {
    Scalar d = std::numeric_limits<Scalar>::infinity();
    for (int a = 0; a < dim_; ++a) {
      const Scalar hi = origin_[a] + spacing_ * Scalar(shape_[a] - 1);
      d = std::min(d, std::min(p[a] - origin_[a], hi - p[a]));
    }
    return d;
  }

  /// True when the closed ball sits strictly inside the domain box.
  bool contains_ball(const PointType& center, Scalar radius) const {
    return distance_to_boundary(center) > radius;
  }

  bool same_lattice(const BasicGrid& other) const {
    return dim_ == other.dim_ && shape_ == other.shape_ && spacing_ == other.spacing_ &&
           origin_ == other.origin_;
  }

 private:
  int dim_ = 2;
  PointType origin_ = PointType::Zero(2);
  Scalar spacing_ = Scalar(1);
  Index3 shape_{4, 4, 1};
};

template <typename Scalar>
class BasicScalarField {
 public:
  using GridType = BasicGrid<Scalar>;
  using PointType = PointT<Scalar>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  BasicScalarField() = default;

  BasicScalarField(GridType grid, Vector values) : grid_(std::move(grid)), values_(std::move(values)) {
    if (static_cast<std::size_t>(values_.size()) != grid_.node_count())
      throw PreconditionError("field value count does not match grid");
    if (!values_.allFinite()) throw PreconditionError("field values must be finite");
  }

  static BasicScalarField constant(GridType grid, Scalar c) {
    Vector v = Vector::Constant(static_cast<Eigen::Index>(grid.node_count()), c);
    return BasicScalarField(std::move(grid), std::move(v));
  }

  template <typename Fn>
  static BasicScalarField from_function(GridType grid, Fn&& f) {
    Vector v(static_cast<Eigen::Index>(grid.node_count()));
    for (std::size_t k = 0; k < grid.node_count(); ++k) v[static_cast<Eigen::Index>(k)] = f(grid.node(k));
    return BasicScalarField(std::move(grid), std::move(v));
  }

  const GridType& grid() const noexcept { return grid_; }
  const Vector& values() const noexcept { return values_; }

  Scalar operator[](std::size_t k) const { return values_[static_cast<Eigen::Index>(k)]; }
  Scalar at(const Index3& i) const { return values_[static_cast<Eigen::Index>(grid_.linear_index(i))]; }

  /// Same grid, new values; the invariants are re-checked.
  BasicScalarField with_values(Vector values) const { return BasicScalarField(grid_, std::move(values)); }

  BasicScalarField positive_part() const { return with_values(values_.cwiseMax(Scalar(0))); }
  BasicScalarField negative_part() const { return with_values((-values_).cwiseMax(Scalar(0))); }

 private:
  GridType grid_;
  Vector values_;
};

/// Symmetric matrix field with ellipticity bounds lambda <= eig(A) <= Lambda.
template <typename Scalar>
class BasicCoefficientField {
 public:
  using GridType = BasicGrid<Scalar>;
  using PointType = PointT<Scalar>;
  using MatrixType = MatrixT<Scalar>;
  using Storage = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  struct Bounds {
    Scalar lambda_min;
    Scalar lambda_max;
    Scalar hoelder_exponent;
    Scalar hoelder_seminorm;
  };

  BasicCoefficientField() = default;

  /// `entries` holds the upper triangle of each nodal matrix in row order, one row per node.
  BasicCoefficientField(GridType grid, Storage entries, Bounds bounds)
      : grid_(std::move(grid)), entries_(std::move(entries)), bounds_(bounds) {
    const int dim = grid_.dim();
    if (static_cast<std::size_t>(entries_.rows()) != grid_.node_count() ||
        entries_.cols() != symmetric_entries(dim))
      throw PreconditionError("coefficient storage does not match grid");
    if (!(bounds_.lambda_min > Scalar(0)) || bounds_.lambda_max < bounds_.lambda_min)
      throw InvalidMatrixError("ellipticity bounds must satisfy 0 < lambda <= Lambda");
    if (!(bounds_.hoelder_exponent > Scalar(0)) || bounds_.hoelder_exponent > Scalar(1))
      throw PreconditionError("Hoelder exponent must lie in (0, 1]");
    const Scalar lo = bounds_.lambda_min * Scalar(1 - 1e-9);
    const Scalar hi = bounds_.lambda_max * Scalar(1 + 1e-9);
    for (std::size_t k = 0; k < grid_.node_count(); ++k) {
      const MatrixType m = at(k);
      if (!m.allFinite()) throw InvalidMatrixError("coefficient matrix is not finite");
      Eigen::SelfAdjointEigenSolver<MatrixType> es(m, Eigen::EigenvaluesOnly);
      const auto& ev = es.eigenvalues();
      if (ev.minCoeff() < lo || ev.maxCoeff() > hi)
        throw InvalidMatrixError("nodal eigenvalue outside [lambda, Lambda] at node " + std::to_string(k));
    }
  }

  /// Builds the field from a matrix-valued function; each matrix must be symmetric to 1e-12.
  template <typename Fn>
  static BasicCoefficientField from_function(GridType grid, Fn&& f, Bounds bounds) {
    const int dim = grid.dim();
    Storage s(static_cast<Eigen::Index>(grid.node_count()), symmetric_entries(dim));
    for (std::size_t k = 0; k < grid.node_count(); ++k) {
      const MatrixType m = f(grid.node(k));
      if (m.rows() != dim || m.cols() != dim) throw InvalidMatrixError("coefficient matrix has wrong size");
      if ((m - m.transpose()).cwiseAbs().maxCoeff() > Scalar(1e-12))
        throw InvalidMatrixError("coefficient matrix is not symmetric");
      int c = 0;
      for (int i = 0; i < dim; ++i)
        for (int j = i; j < dim; ++j) s(static_cast<Eigen::Index>(k), c++) = m(i, j);
    }
    return BasicCoefficientField(std::move(grid), std::move(s), bounds);
  }

  static BasicCoefficientField identity(GridType grid, Scalar hoelder_exponent = Scalar(1)) {
    const int dim = grid.dim();
    return from_function(
        std::move(grid), [dim](const PointType&) { return MatrixType::Identity(dim, dim); },
        Bounds{Scalar(1), Scalar(1), hoelder_exponent, Scalar(0)});
  }

  const GridType& grid() const noexcept { return grid_; }
  const Storage& entries() const noexcept { return entries_; }
  const Bounds& bounds() const noexcept { return bounds_; }
  Scalar lambda_min() const noexcept { return bounds_.lambda_min; }
  Scalar lambda_max() const noexcept { return bounds_.lambda_max; }
  Scalar hoelder_exponent() const noexcept { return bounds_.hoelder_exponent; }
  Scalar hoelder_seminorm() const noexcept { return bounds_.hoelder_seminorm; }

  MatrixType at(std::size_t k) const {
    return unpack(grid_.dim(), entries_.row(static_cast<Eigen::Index>(k)));
  }
  MatrixType at(const Index3& i) const { return at(grid_.linear_index(i)); }

  /// Symmetric matrix from its packed upper triangle.
  template <typename Row>
  static MatrixType unpack(int dim, const Row& row) {
    MatrixType m(dim, dim);
    int c = 0;
    for (int i = 0; i < dim; ++i)
      for (int j = i; j < dim; ++j) {
        m(i, j) = row(c);
        m(j, i) = row(c);
        ++c;
      }
    return m;
  }

 private:
  GridType grid_;
  Storage entries_;
  Bounds bounds_{Scalar(1), Scalar(1), Scalar(1), Scalar(0)};
};

/// Non-negative phase weights q_+ and q_- on a common grid.
template <typename Scalar>
class BasicPhaseWeights {
 public:
  using FieldType = BasicScalarField<Scalar>;

  BasicPhaseWeights() = default;

  BasicPhaseWeights(FieldType q_plus, FieldType q_minus)
      : q_plus_(std::move(q_plus)), q_minus_(std::move(q_minus)) {
    if (!q_plus_.grid().same_lattice(q_minus_.grid()))
      throw PreconditionError("phase weights must share a grid");
    if (q_plus_.values().minCoeff() < Scalar(0) || q_minus_.values().minCoeff() < Scalar(0))
      throw PreconditionError("phase weights must be non-negative");
  }

  static BasicPhaseWeights constant(const typename FieldType::GridType& grid, Scalar qp, Scalar qm) {
    return BasicPhaseWeights(FieldType::constant(grid, qp), FieldType::constant(grid, qm));
  }

  const FieldType& q_plus() const noexcept { return q_plus_; }
  const FieldType& q_minus() const noexcept { return q_minus_; }
  Scalar sup_plus() const { return q_plus_.values().maxCoeff(); }
  Scalar sup_minus() const { return q_minus_.values().maxCoeff(); }

 private:
  FieldType q_plus_;
  FieldType q_minus_;
};

using Grid = BasicGrid<double>;
using ScalarField = BasicScalarField<double>;
using CoefficientField = BasicCoefficientField<double>;
using PhaseWeights = BasicPhaseWeights<double>;

// ---------------------------------------------------------------------------
// Interpolation

/// Cell containing a point and the local coordinates of the point in it.
template <typename Scalar>
struct CellLocation {
  Index3 cell{0, 0, 0};
  std::array<Scalar, 3> t{0, 0, 0};
};

template <typename Scalar>
CellLocation<Scalar> locate(const BasicGrid<Scalar>& grid, const PointT<Scalar>& p) {
  CellLocation<Scalar> loc;
  const Scalar h = grid.spacing();
  const Scalar slack = Scalar(1e-10) * h;
  for (int a = 0; a < grid.dim(); ++a) {
    Scalar s = (p[a] - grid.origin()[a]) / h;
    const int cells = grid.shape()[a] - 1;
    if (!(s >= -slack / h) || !(s <= Scalar(cells) + slack / h))
      throw OutOfDomainError("point outside the grid domain");
    s = std::clamp(s, Scalar(0), Scalar(cells));
    const Scalar nearest = std::round(s);
    if (std::abs(s - nearest) <= Scalar(64) * std::numeric_limits<Scalar>::epsilon() * std::max(Scalar(1), s)) s = nearest;
    int i = static_cast<int>(std::floor(s));
    if (i >= cells) i = cells - 1;
    loc.cell[a] = i;
    loc.t[a] = s - Scalar(i);
  }
  return loc;
}

/// Visits the 2^dim corners of a cell with their multilinear weights.
template <typename Scalar, typename Fn>
void for_each_corner(int dim, const CellLocation<Scalar>& loc, Fn&& fn) {
  const int corners = 1 << dim;
  for (int c = 0; c < corners; ++c) {
    Index3 i = loc.cell;
    Scalar w(1);
    for (int a = 0; a < dim; ++a) {
      const int bit = (c >> a) & 1;
      i[a] += bit;
      w *= bit ? loc.t[a] : Scalar(1) - loc.t[a];
    }
    fn(i, w);
  }
}

/// Multilinear interpolation; exact on fields affine in the coordinates.
template <typename Scalar>
Scalar interpolate(const BasicScalarField<Scalar>& f, const PointT<Scalar>& p) {
  const auto loc = locate(f.grid(), p);
  Scalar sum(0);
  for_each_corner(f.grid().dim(), loc, [&](const Index3& i, Scalar w) {
    if (w != Scalar(0)) sum += w * f.at(i);
  });
  return sum;
}

template <typename Scalar>
MatrixT<Scalar> interpolate(const BasicCoefficientField<Scalar>& A, const PointT<Scalar>& p) {
  const auto loc = locate(A.grid(), p);
  const int dim = A.grid().dim();
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic, Eigen::RowMajor, 1, 6> row =
      Eigen::Matrix<Scalar, 1, Eigen::Dynamic, Eigen::RowMajor, 1, 6>::Zero(symmetric_entries(dim));
  for_each_corner(dim, loc, [&](const Index3& i, Scalar w) {
    if (w != Scalar(0)) row += w * A.entries().row(static_cast<Eigen::Index>(A.grid().linear_index(i)));
  });
  return BasicCoefficientField<Scalar>::unpack(dim, row);
}

/// Central-difference gradient at an interior node.
template <typename Scalar>
PointT<Scalar> nodal_gradient(const BasicScalarField<Scalar>& f, const Index3& i) {
  const auto& g = f.grid();
  PointT<Scalar> grad(g.dim());
  for (int a = 0; a < g.dim(); ++a) {
    Index3 lo = i, hi = i;
    lo[a] -= 1;
    hi[a] += 1;
    grad[a] = (f.at(hi) - f.at(lo)) / (Scalar(2) * g.spacing());
  }
  return grad;
}

/// Central-difference gradient interpolated to p; p must be at least one cell from the boundary.
template <typename Scalar>
PointT<Scalar> gradient(const BasicScalarField<Scalar>& f, const PointT<Scalar>& p) {
  const auto& g = f.grid();
  const Scalar h = g.spacing();
  for (int a = 0; a < g.dim(); ++a) {
    const Scalar s = (p[a] - g.origin()[a]) / h;
    if (s < Scalar(1) - Scalar(1e-10) || s > Scalar(g.shape()[a] - 2) + Scalar(1e-10))
      throw OutOfDomainError("gradient point closer than one cell to the boundary");
  }
  const auto loc = locate(g, p);
  PointT<Scalar> grad = PointT<Scalar>::Zero(g.dim());
  for_each_corner(g.dim(), loc, [&](Index3 i, Scalar w) {
    if (w == Scalar(0)) return;
    for (int a = 0; a < g.dim(); ++a) i[a] = std::clamp(i[a], 1, g.shape()[a] - 2);
    grad += w * nodal_gradient(f, i);
  });
  return grad;
}

// ---------------------------------------------------------------------------
// Quadrature (double precision)

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

struct Ball {
  Point center;
  double radius;
};

/// Exact measure of [lo, hi] (a box) intersected with the ball, in dimension 2 or 3.
double box_ball_measure(int dim, const Point& center, double radius, const Point& lo, const Point& hi);

/// Volume of the unit ball in dimension n.
double unit_ball_volume(int dim);

Point cell_center(const Grid& grid, const Index3& cell);

/// Visits every cell meeting the ball in lexicographic order with its covered volume fraction.
void for_each_cell_in_ball(const Grid& grid, const Ball& ball,
                           const std::function<void(const Index3&, double)>& fn);

enum class RadialKernel {
  none,
  /// |z - y|^(2 - n); identically 1 when n = 2.
  newtonian,
};

/// Integral over B(center, radius) of a per-cell integrand (evaluated at the cell center)
/// optionally times a radial kernel centered at the ball center.  Throws OutOfDomainError
/// unless the closed ball lies inside the domain.
double integrate_cells_over_ball(const Grid& grid, const Ball& ball, RadialKernel kernel,
                                 const std::function<double(const Index3&)>& cell_integrand);

/// Mean of the corner values of a cell, i.e. the multilinear interpolant at its center.
double cell_mean(const ScalarField& f, const Index3& cell);

double ball_integral(const ScalarField& f, const Point& center, double radius,
                     RadialKernel kernel = RadialKernel::none);

/// Unit directions used for sphere averages: 512 equispaced angles (n = 2) or a
/// 1024-point Fibonacci lattice (n = 3).
const std::vector<Point>& sphere_directions(int dim);

double sphere_average(const ScalarField& f, const Point& center, double radius);

/// Lower bound for the C^{0,alpha} seminorm of A from sampled node pairs (operator norm).
double hoelder_seminorm(const CoefficientField& A, double alpha, int sample_count);

}  // namespace fblab
