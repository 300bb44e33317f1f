#include "fblab/frames.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace fblab {

AffineFrame frame_at(const CoefficientField& A, const Point& x) { return AffineFrame::from_matrix(x, interpolate(A, x)); }

std::vector<Point> ellipsoid_boundary_samples(const Ellipsoid& e, int count) {
  if (count < 16) throw PreconditionError("at least 16 boundary samples are required");
  const int dim = e.frame.dim();
  std::vector<Point> out;
  out.reserve(static_cast<std::size_t>(count));
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int k = 0; k < count; ++k) {
    Point d(dim);
    if (dim == 2) {
      const double t = 2.0 * std::numbers::pi * k / count;
      d << std::cos(t), std::sin(t);
    } else {
      const double z = 1.0 - (2.0 * k + 1.0) / count;
      const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
      d << rho * std::cos(golden * k), rho * std::sin(golden * k), z;
    }
    out.push_back(e.frame.map_inverse(Point(e.frame.anchor + e.radius * d)));
  }
  return out;
}

void for_each_cell_in_ellipsoid(const Grid& grid, const Ellipsoid& e,
                                const std::function<void(const Index3&, double)>& fn) {
  if (e.frame.is_identity()) {
    for_each_cell_in_ball(grid, Ball{e.frame.anchor, e.radius}, fn);
    return;
  }
  const int dim = grid.dim();
  const double h = grid.spacing();
  const Matrix& S = e.frame.inv_sqrt_matrix;
  const Matrix A = e.frame.sqrt_matrix * e.frame.sqrt_matrix;
  Eigen::SelfAdjointEigenSolver<Matrix> es(S, Eigen::EigenvaluesOnly);
  const double s_norm = es.eigenvalues().cwiseAbs().maxCoeff();
  const double half_diag = 0.5 * std::sqrt(double(dim)) * h;
  const int sub = dim == 2 ? 16 : 8;

  Index3 first{0, 0, 0}, last{0, 0, 0};
  for (int a = 0; a < dim; ++a) {
    const double extent = e.radius * std::sqrt(A(a, a));
    const int cells = grid.shape()[a] - 1;
    first[a] = std::clamp(static_cast<int>(std::floor((e.frame.anchor[a] - extent - grid.origin()[a]) / h)), 0, cells - 1);
    last[a] = std::clamp(static_cast<int>(std::floor((e.frame.anchor[a] + extent - grid.origin()[a]) / h)), 0, cells - 1);
  }

  Index3 c{0, 0, 0};
  Point p(dim);
  for (c[0] = first[0]; c[0] <= last[0]; ++c[0])
    for (c[1] = first[1]; c[1] <= last[1]; ++c[1])
      for (c[2] = (dim == 3 ? first[2] : 0); c[2] <= (dim == 3 ? last[2] : 0); ++c[2]) {
        const Point center = cell_center(grid, c);
        const double mapped = (S * (center - e.frame.anchor)).norm();
        if (mapped - s_norm * half_diag >= e.radius) continue;
        bool all_inside = true;
        for (int k = 0; k < (1 << dim) && all_inside; ++k) {
          for (int a = 0; a < dim; ++a) p[a] = grid.origin()[a] + h * (c[a] + ((k >> a) & 1));
          all_inside = (S * (p - e.frame.anchor)).norm() <= e.radius;
        }
        if (all_inside) {
          fn(c, 1.0);
          continue;
        }
        int inside = 0, total = 0;
        const int zcount = dim == 3 ? sub : 1;
        for (int i = 0; i < sub; ++i)
          for (int j = 0; j < sub; ++j)
            for (int k = 0; k < zcount; ++k) {
              p[0] = grid.origin()[0] + h * (c[0] + (i + 0.5) / sub);
              p[1] = grid.origin()[1] + h * (c[1] + (j + 0.5) / sub);
              if (dim == 3) p[2] = grid.origin()[2] + h * (c[2] + (k + 0.5) / sub);
              ++total;
              if ((S * (p - e.frame.anchor)).norm() < e.radius) ++inside;
            }
        if (inside > 0) fn(c, double(inside) / double(total));
      }
}

double integrate_cells_over_ellipsoid(const Grid& grid, const Ellipsoid& e,
                                      const std::function<double(const Index3&)>& cell_integrand) {
  for (const Point& p : ellipsoid_boundary_samples(e, grid.dim() == 2 ? 256 : 1024))
    if (!grid.contains(p)) throw OutOfDomainError("ellipsoid exits the grid domain");
  const double cell_volume = std::pow(grid.spacing(), grid.dim());
  CompensatedSum sum;
  for_each_cell_in_ellipsoid(grid, e, [&](const Index3& c, double frac) {
    sum.add(cell_integrand(c) * frac * cell_volume);
  });
  return sum.value();
}

double pullback_spacing(double h, double lambda_min, double radius) {
  const double base = h * std::sqrt(lambda_min) / 2.0;
  return std::min(base, radius / 8.0);
}

namespace {

// Grid of spacing s centered at x covering B(x, radius) with two spare cells.
Grid frame_grid(const Point& x, double radius, double s) {
  const int half = static_cast<int>(std::ceil(radius / s)) + 2;
  Index3 shape{1, 1, 1};
  for (int a = 0; a < x.size(); ++a) shape[a] = 2 * half + 1;
  return Grid(static_cast<int>(x.size()), Point(x.array() - s * half), s, shape);
}

// Preimage of node y, checked against the domain when the node is used by quadratures on the ball.
Point checked_preimage(const Grid& domain, const AffineFrame& frame, const Point& y, double needed_radius) {
  if ((y - frame.anchor).norm() <= 1e-9 * domain.spacing()) return frame.anchor;
  Point z = frame.map_inverse(y);
  if ((y - frame.anchor).norm() <= needed_radius) {
    if (!domain.contains(z, 1e-10 * domain.spacing())) throw OutOfDomainError("pulled-back ball exits the domain");
    return z;
  }
  for (int a = 0; a < z.size(); ++a) z[a] = std::clamp(z[a], domain.lower()[a], domain.upper()[a]);
  return z;
}

}  // namespace

ScalarField pullback_scalar(const ScalarField& u, const AffineFrame& frame, double radius, double spacing) {
  if (!(radius > 0.0) || !(spacing > 0.0)) throw PreconditionError("pullback radius and spacing must be positive");
  const Grid grid = frame_grid(frame.anchor, radius, spacing);
  const double needed = radius + 1.01 * std::sqrt(double(grid.dim())) * spacing;
  ScalarField::Vector values(static_cast<Eigen::Index>(grid.node_count()));
  for (std::size_t k = 0; k < grid.node_count(); ++k)
    values[static_cast<Eigen::Index>(k)] = interpolate(u, checked_preimage(u.grid(), frame, grid.node(k), needed));
  return ScalarField(grid, std::move(values));
}

TransformedFrame pullback(const ScalarField& u, const CoefficientField& A, const PhaseWeights& q, const Point& x,
                          double radius) {
  const AffineFrame frame = frame_at(A, x);
  const double spacing = pullback_spacing(u.grid().spacing(), A.lambda_min(), radius);
  const Grid grid = frame_grid(x, radius, spacing);
  const int dim = grid.dim();
  const double needed = radius + 1.01 * std::sqrt(double(dim)) * spacing;
  const Matrix& S = frame.inv_sqrt_matrix;

  ScalarField::Vector uv(static_cast<Eigen::Index>(grid.node_count()));
  ScalarField::Vector qp(uv.size()), qm(uv.size());
  CoefficientField::Storage entries(uv.size(), symmetric_entries(dim));
  for (std::size_t k = 0; k < grid.node_count(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    const Point z = checked_preimage(u.grid(), frame, grid.node(k), needed);
    uv[kk] = interpolate(u, z);
    qp[kk] = interpolate(q.q_plus(), z);
    qm[kk] = interpolate(q.q_minus(), z);
    const Matrix Ax = S * interpolate(A, z) * S;
    int c = 0;
    for (int i = 0; i < dim; ++i)
      for (int j = i; j < dim; ++j) entries(kk, c++) = 0.5 * (Ax(i, j) + Ax(j, i));
  }

  const double lam = A.lambda_min(), Lam = A.lambda_max(), alpha = A.hoelder_exponent();
  const CoefficientField::Bounds bounds{lam / Lam, Lam / lam, alpha,
                                        A.hoelder_seminorm() / lam * std::pow(Lam, alpha / 2.0)};
  return TransformedFrame{frame,
                          radius,
                          ScalarField(grid, std::move(uv)),
                          CoefficientField(grid, std::move(entries), bounds),
                          PhaseWeights(ScalarField(grid, std::move(qp)), ScalarField(grid, std::move(qm)))};
}

}  // namespace fblab
