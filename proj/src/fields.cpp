#include "fblab/fields.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace fblab {

namespace {

constexpr double kPi = std::numbers::pi;

// 10-point Gauss-Legendre rule on [-1, 1].
constexpr std::array<double, 10> kGaussNodes = {
    -0.9739065285171717, -0.8650633666889845, -0.6794095682990244, -0.4333953941292472,
    -0.1488743389816312, 0.1488743389816312,  0.4333953941292472,  0.6794095682990244,
    0.8650633666889845,  0.9739065285171717};
constexpr std::array<double, 10> kGaussWeights = {
    0.0666713443086881, 0.1494513491505806, 0.2190863625159820, 0.2692667193099963,
    0.2955242247147529, 0.2955242247147529, 0.2692667193099963, 0.2190863625159820,
    0.1494513491505806, 0.0666713443086881};

// Antiderivative of sqrt(r^2 - x^2).
double chord_antiderivative(double r, double x) {
  const double s = std::clamp(x / r, -1.0, 1.0);
  return 0.5 * (x * std::sqrt(std::max(0.0, r * r - x * x)) + r * r * std::asin(s));
}

// Area of the disk |p| < r intersected with [x0, x1] x [y0, y1].
double disk_rect_area(double r, double x0, double x1, double y0, double y1) {
  if (r <= 0.0) return 0.0;
  x0 = std::max(x0, -r);
  x1 = std::min(x1, r);
  y0 = std::max(y0, -r);
  y1 = std::min(y1, r);
  if (x0 >= x1 || y0 >= y1) return 0.0;

  std::array<double, 6> breaks{};
  int nb = 0;
  breaks[nb++] = x0;
  breaks[nb++] = x1;
  for (const double y : {y0, y1}) {
    if (std::abs(y) < r) {
      const double x = std::sqrt(r * r - y * y);
      for (const double b : {-x, x})
        if (b > x0 && b < x1) breaks[nb++] = b;
    }
  }
  std::sort(breaks.begin(), breaks.begin() + nb);

  double area = 0.0;
  for (int k = 0; k + 1 < nb; ++k) {
    const double a = breaks[k], b = breaks[k + 1];
    if (b <= a) continue;
    const double m = 0.5 * (a + b);
    const double s = std::sqrt(std::max(0.0, r * r - m * m));
    const bool top_is_line = y1 < s;
    const bool bottom_is_line = y0 > -s;
    const double top = top_is_line ? y1 : s;
    const double bottom = bottom_is_line ? y0 : -s;
    if (top <= bottom) continue;
    const double chord = chord_antiderivative(r, b) - chord_antiderivative(r, a);
    const double upper = top_is_line ? y1 * (b - a) : chord;
    const double lower = bottom_is_line ? y0 * (b - a) : -chord;
    area += upper - lower;
  }
  return std::max(area, 0.0);
}

// Volume of the ball |p| < r intersected with a box, by slicing along x.
double ball_box_volume(double r, const std::array<double, 6>& box) {
  const double x0 = std::max(box[0], -r), x1 = std::min(box[1], r);
  if (x0 >= x1) return 0.0;
  std::vector<double> breaks{x0, x1};
  auto add_distance = [&](double d) {
    if (d < r) {
      const double x = std::sqrt(r * r - d * d);
      for (const double b : {-x, x})
        if (b > x0 && b < x1) breaks.push_back(b);
    }
  };
  const double ys[2] = {box[2], box[3]}, zs[2] = {box[4], box[5]};
  for (int i = 0; i < 2; ++i) {
    add_distance(std::abs(ys[i]));
    add_distance(std::abs(zs[i]));
    for (int j = 0; j < 2; ++j) add_distance(std::hypot(ys[i], zs[j]));
  }
  std::sort(breaks.begin(), breaks.end());

  CompensatedSum volume;
  for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
    const double a = breaks[k], b = breaks[k + 1];
    if (b <= a) continue;
    // Two Gauss panels per piece; endpoint singularities are of square-root type at worst.
    for (int panel = 0; panel < 2; ++panel) {
      const double pa = a + 0.5 * panel * (b - a), pb = pa + 0.5 * (b - a);
      const double half = 0.5 * (pb - pa), mid = 0.5 * (pa + pb);
      for (std::size_t g = 0; g < kGaussNodes.size(); ++g) {
        const double x = mid + half * kGaussNodes[g];
        const double rho = std::sqrt(std::max(0.0, r * r - x * x));
        volume.add(half * kGaussWeights[g] * disk_rect_area(rho, box[2], box[3], box[4], box[5]));
      }
    }
  }
  return std::max(volume.value(), 0.0);
}

}  // namespace

double unit_ball_volume(int dim) { return dim == 2 ? kPi : 4.0 * kPi / 3.0; }

double box_ball_measure(int dim, const Point& center, double radius, const Point& lo, const Point& hi) {
  if (dim == 2)
    return disk_rect_area(radius, lo[0] - center[0], hi[0] - center[0], lo[1] - center[1], hi[1] - center[1]);
  const std::array<double, 6> box{lo[0] - center[0], hi[0] - center[0], lo[1] - center[1],
                                  hi[1] - center[1], lo[2] - center[2], hi[2] - center[2]};
  return ball_box_volume(radius, box);
}

Point cell_center(const Grid& grid, const Index3& cell) {
  Point p(grid.dim());
  for (int a = 0; a < grid.dim(); ++a) p[a] = grid.origin()[a] + grid.spacing() * (cell[a] + 0.5);
  return p;
}

void for_each_cell_in_ball(const Grid& grid, const Ball& ball,
                           const std::function<void(const Index3&, double)>& fn) {
  const int dim = grid.dim();
  const double h = grid.spacing();
  const double r = ball.radius;
  const double cell_volume = std::pow(h, dim);
  Index3 first{0, 0, 0}, last{0, 0, 0};
  for (int a = 0; a < dim; ++a) {
    const int cells = grid.shape()[a] - 1;
    first[a] = std::clamp(static_cast<int>(std::floor((ball.center[a] - r - grid.origin()[a]) / h)), 0, cells - 1);
    last[a] = std::clamp(static_cast<int>(std::floor((ball.center[a] + r - grid.origin()[a]) / h)), 0, cells - 1);
  }
  Point lo(dim), hi(dim);
  Index3 c{0, 0, 0};
  for (c[0] = first[0]; c[0] <= last[0]; ++c[0])
    for (c[1] = first[1]; c[1] <= last[1]; ++c[1])
      for (c[2] = (dim == 3 ? first[2] : 0); c[2] <= (dim == 3 ? last[2] : 0); ++c[2]) {
        double near2 = 0.0, far2 = 0.0;
        for (int a = 0; a < dim; ++a) {
          lo[a] = grid.origin()[a] + h * c[a];
          hi[a] = lo[a] + h;
          const double d0 = lo[a] - ball.center[a], d1 = hi[a] - ball.center[a];
          const double near = (d0 > 0.0) ? d0 : (d1 < 0.0 ? -d1 : 0.0);
          const double far = std::max(std::abs(d0), std::abs(d1));
          near2 += near * near;
          far2 += far * far;
        }
        if (near2 >= r * r) continue;
        if (far2 <= r * r) {
          fn(c, 1.0);
          continue;
        }
        const double frac = box_ball_measure(dim, ball.center, r, lo, hi) / cell_volume;
        if (frac > 0.0) fn(c, std::min(frac, 1.0));
      }
}

namespace {

double newtonian_kernel(int dim, double distance) { return dim == 2 ? 1.0 : 1.0 / distance; }

// Integral of the kernel over B(0, rho).
double kernel_ball_integral(int dim, RadialKernel kernel, double rho) {
  if (kernel == RadialKernel::none || dim == 2) return unit_ball_volume(dim) * std::pow(rho, dim);
  return 2.0 * kPi * rho * rho;
}

}  // namespace

double integrate_cells_over_ball(const Grid& grid, const Ball& ball, RadialKernel kernel,
                                 const std::function<double(const Index3&)>& cell_integrand) {
  if (!(ball.radius > 0.0)) throw PreconditionError("ball radius must be positive");
  if (grid.distance_to_boundary(ball.center) < ball.radius * (1.0 - 1e-12))
    throw OutOfDomainError("ball exits the grid domain");
  const int dim = grid.dim();
  const double cell_volume = std::pow(grid.spacing(), dim);

  if (kernel == RadialKernel::none || dim == 2) {
    CompensatedSum sum;
    for_each_cell_in_ball(grid, ball, [&](const Index3& c, double frac) {
      sum.add(cell_integrand(c) * frac * cell_volume);
    });
    return sum.value();
  }

  // Singular kernel: the innermost shell is integrated analytically against the
  // integrand frozen at its mean over that shell.
  const double inner = std::min(2.0 * grid.spacing(), ball.radius);
  const Ball inner_ball{ball.center, inner};
  CompensatedSum outer, inner_mass;
  Point lo(dim), hi(dim);
  for_each_cell_in_ball(grid, ball, [&](const Index3& c, double frac) {
    const double value = cell_integrand(c);
    double frac_inner = 0.0;
    double near2 = 0.0;
    for (int a = 0; a < dim; ++a) {
      lo[a] = grid.origin()[a] + grid.spacing() * c[a];
      hi[a] = lo[a] + grid.spacing();
      const double d0 = lo[a] - ball.center[a], d1 = hi[a] - ball.center[a];
      const double near = (d0 > 0.0) ? d0 : (d1 < 0.0 ? -d1 : 0.0);
      near2 += near * near;
    }
    if (near2 < inner * inner)
      frac_inner = std::min(box_ball_measure(dim, ball.center, inner, lo, hi) / cell_volume, frac);
    inner_mass.add(value * frac_inner * cell_volume);
    const double shell = frac - frac_inner;
    if (shell > 0.0) {
      const double dist = (cell_center(grid, c) - ball.center).norm();
      outer.add(value * newtonian_kernel(dim, dist) * shell * cell_volume);
    }
  });
  const double inner_mean = inner_mass.value() / (unit_ball_volume(dim) * std::pow(inner, dim));
  return outer.value() + inner_mean * kernel_ball_integral(dim, kernel, inner);
}

double cell_mean(const ScalarField& f, const Index3& cell) {
  const int dim = f.grid().dim();
  const int corners = 1 << dim;
  double sum = 0.0;
  for (int k = 0; k < corners; ++k) {
    Index3 i = cell;
    for (int a = 0; a < dim; ++a) i[a] += (k >> a) & 1;
    sum += f.at(i);
  }
  return sum / corners;
}

double ball_integral(const ScalarField& f, const Point& center, double radius, RadialKernel kernel) {
  return integrate_cells_over_ball(f.grid(), Ball{center, radius}, kernel,
                                   [&](const Index3& c) { return cell_mean(f, c); });
}

const std::vector<Point>& sphere_directions(int dim) {
  static const std::vector<Point> circle = [] {
    constexpr int count = 512;
    std::vector<Point> dirs;
    dirs.reserve(count);
    for (int k = 0; k < count; ++k) {
      const double t = 2.0 * kPi * k / count;
      Point p(2);
      p << std::cos(t), std::sin(t);
      dirs.push_back(p);
    }
    return dirs;
  }();
  static const std::vector<Point> sphere = [] {
    constexpr int count = 1024;
    const double golden = kPi * (3.0 - std::sqrt(5.0));
    std::vector<Point> dirs;
    dirs.reserve(count);
    for (int k = 0; k < count; ++k) {
      const double z = 1.0 - (2.0 * k + 1.0) / count;
      const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
      const double phi = golden * k;
      Point p(3);
      p << rho * std::cos(phi), rho * std::sin(phi), z;
      dirs.push_back(p);
    }
    return dirs;
  }();
  if (dim == 2) return circle;
  if (dim == 3) return sphere;
  throw PreconditionError("sphere directions exist only for n = 2, 3");
}

double sphere_average(const ScalarField& f, const Point& center, double radius) {
  if (f.grid().distance_to_boundary(center) < radius * (1.0 - 1e-12))
    throw OutOfDomainError("sphere exits the grid domain");
  const auto& dirs = sphere_directions(f.grid().dim());
  CompensatedSum sum;
  for (const Point& d : dirs) sum.add(interpolate(f, Point(center + radius * d)));
  return sum.value() / static_cast<double>(dirs.size());
}

namespace {

double operator_norm(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace

double hoelder_seminorm(const CoefficientField& A, double alpha, int sample_count) {
  if (!(alpha > 0.0) || alpha > 1.0) throw PreconditionError("alpha must lie in (0, 1]");
  if (sample_count < 1) throw PreconditionError("sample_count must be positive");
  const Grid& grid = A.grid();
  const int dim = grid.dim();
  const double h = grid.spacing();

  auto ratio = [&](const Index3& x, const Index3& y) {
    double d2 = 0.0;
    for (int a = 0; a < dim; ++a) d2 += double(x[a] - y[a]) * double(x[a] - y[a]);
    if (d2 == 0.0) return 0.0;
    return operator_norm(A.at(x) - A.at(y)) / std::pow(std::sqrt(d2) * h, alpha);
  };

  int levels = 1;
  int min_extent = grid.shape()[0];
  for (int a = 1; a < dim; ++a) min_extent = std::min(min_extent, grid.shape()[a]);
  while ((1 << levels) < min_extent - 1) ++levels;

  std::mt19937_64 rng(0x5eedf00dULL);
  struct Pair {
    double value;
    Index3 x, y;
  };
  std::vector<Pair> best;
  constexpr std::size_t keep = 8;

  for (int k = 0; k < sample_count; ++k) {
    Index3 x{0, 0, 0}, y{0, 0, 0};
    const int span = 1 << (k % levels);
    for (int a = 0; a < dim; ++a) {
      x[a] = std::uniform_int_distribution<int>(0, grid.shape()[a] - 1)(rng);
      const int off = std::uniform_int_distribution<int>(-span, span)(rng);
      y[a] = std::clamp(x[a] + off, 0, grid.shape()[a] - 1);
    }
    const double v = ratio(x, y);
    if (best.size() < keep || v > best.back().value) {
      best.push_back({v, x, y});
      std::sort(best.begin(), best.end(), [](const Pair& l, const Pair& r) { return l.value > r.value; });
      if (best.size() > keep) best.pop_back();
    }
  }

  // Greedy refinement of the best pairs: move either endpoint by one node while the ratio grows.
  double result = 0.0;
  for (Pair p : best) {
    bool improved = true;
    for (int step = 0; improved && step < 100000; ++step) {
      improved = false;
      for (int which = 0; which < 2 && !improved; ++which)
        for (int a = 0; a < dim && !improved; ++a)
          for (const int s : {-1, 1}) {
            Pair q = p;
            Index3& moved = which == 0 ? q.x : q.y;
            moved[a] += s;
            if (moved[a] < 0 || moved[a] >= grid.shape()[a]) continue;
            q.value = ratio(q.x, q.y);
            if (q.value > p.value) {
              p = q;
              improved = true;
              break;
            }
          }
    }
    result = std::max(result, p.value);
  }
  return result;
}

}  // namespace fblab
