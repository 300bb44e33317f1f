#include "fblab/elliptic.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <algorithm>
#include <cmath>

#include "fblab/energy.hpp"

namespace fblab {

namespace {

// A linear form sum_k coeff_k v_{unknown_k} + known.
struct LinearForm {
  std::array<std::pair<Eigen::Index, double>, 8> terms{};
  int size = 0;
  double known = 0.0;

  void add_unknown(Eigen::Index i, double c) { terms[static_cast<std::size_t>(size++)] = {i, c}; }
};

class Assembler {
 public:
  explicit Assembler(Eigen::Index n) : rhs(Eigen::VectorXd::Zero(n)) {}

  // Adds w * L1 * L2 to the energy.
  void add(double w, const LinearForm& l1, const LinearForm& l2) {
    for (int a = 0; a < l1.size; ++a)
      for (int b = 0; b < l2.size; ++b) {
        const auto [i, ci] = l1.terms[static_cast<std::size_t>(a)];
        const auto [j, cj] = l2.terms[static_cast<std::size_t>(b)];
        const double v = 0.5 * w * ci * cj;
        triplets.emplace_back(i, j, v);
        triplets.emplace_back(j, i, v);
      }
    for (int a = 0; a < l1.size; ++a) rhs[l1.terms[static_cast<std::size_t>(a)].first] -= 0.5 * w * l2.known * l1.terms[static_cast<std::size_t>(a)].second;
    for (int b = 0; b < l2.size; ++b) rhs[l2.terms[static_cast<std::size_t>(b)].first] -= 0.5 * w * l1.known * l2.terms[static_cast<std::size_t>(b)].second;
    constant += w * l1.known * l2.known;
  }

  std::vector<Eigen::Triplet<double>> triplets;
  Eigen::VectorXd rhs;
  double constant = 0.0;
};

}  // namespace

BallDirichletProblem::BallDirichletProblem(const ScalarField& trace, const CoefficientField* A, const Point& center,
                                           double radius)
    : trace_(trace), center_(center), radius_(radius) {
  const Grid& g = trace.grid();
  const int dim = g.dim();
  const double h = g.spacing();
  if (!(radius >= 4.0 * h * (1.0 - 1e-12))) throw PreconditionError("ball radius must be at least 4 grid cells");
  if (g.distance_to_boundary(center) < radius * (1.0 - 1e-12)) throw OutOfDomainError("ball exits the grid domain");
  if (A && !A->grid().same_lattice(g)) throw PreconditionError("coefficients must share the trace's grid");

  std::vector<Eigen::Index> index(g.node_count(), -1);
  Index3 lo{0, 0, 0}, hi{0, 0, 0};
  for (int a = 0; a < dim; ++a) {
    lo[a] = std::max(0, static_cast<int>(std::floor((center[a] - radius - g.origin()[a]) / h)));
    hi[a] = std::min(g.shape()[a] - 1, static_cast<int>(std::ceil((center[a] + radius - g.origin()[a]) / h)));
  }
  Index3 i{0, 0, 0};
  for (i[0] = lo[0]; i[0] <= hi[0]; ++i[0])
    for (i[1] = lo[1]; i[1] <= hi[1]; ++i[1])
      for (i[2] = lo[2]; i[2] <= hi[2]; ++i[2]) {
        if ((g.node(i) - center).norm() < radius) {
          const std::size_t k = g.linear_index(i);
          index[k] = static_cast<Eigen::Index>(unknowns_.size());
          unknowns_.push_back(k);
        }
      }
  const auto n = static_cast<Eigen::Index>(unknowns_.size());
  Assembler as(n);

  // Mean of a_aa over the cells sharing the edge from node `base` along axis a.
  auto edge_weight = [&](const Index3& base, int a) {
    if (!A) return 1.0;
    double sum = 0.0;
    int count = 0;
    const int others = 1 << (dim - 1);
    for (int m = 0; m < others; ++m) {
      Index3 c = base;
      int bit = 0;
      bool valid = true;
      for (int b = 0; b < dim; ++b) {
        if (b == a) continue;
        c[b] -= (m >> bit++) & 1;
        if (c[b] < 0 || c[b] >= g.shape()[b] - 1) valid = false;
      }
      if (!valid) continue;
      sum += cell_coefficient(*A, c)(a, a);
      ++count;
    }
    return sum / count;
  };

  const double edge_scale = std::pow(h, dim - 2);
  for (Eigen::Index u = 0; u < n; ++u) {
    const Index3 p = g.multi_index(unknowns_[static_cast<std::size_t>(u)]);
    const Point pp = g.node(p);
    for (int a = 0; a < dim; ++a)
      for (const int sigma : {1, -1}) {
        Index3 q = p;
        q[a] += sigma;
        const Eigen::Index qi = index[g.linear_index(q)];
        Index3 base = sigma > 0 ? p : q;
        const double w = edge_weight(base, a) * edge_scale;
        LinearForm l;
        l.add_unknown(u, 1.0);
        if (qi >= 0) {
          if (sigma < 0) continue;
          l.add_unknown(qi, -1.0);
          as.add(w, l, l);
          continue;
        }
        const Point d = pp - center;
        const double s = -sigma * d[a] + std::sqrt(std::max(0.0, d[a] * d[a] + radius * radius - d.squaredNorm()));
        const double theta = std::clamp(s / h, 1e-6, 1.0);
        Point hit = pp;
        hit[a] += sigma * theta * h;
        l.known = -interpolate(trace, hit);
        as.add(w / theta, l, l);
      }
  }

  if (A) {
    // Cross terms on every cell with an unknown corner, so that constant
    // coefficients reproduce affine fields exactly.
    const double cell_volume = std::pow(h, dim);
    const int edges = 1 << (dim - 1);
    std::vector<char> seen(g.node_count(), 0);
    for (const std::size_t k : unknowns_) {
      const Index3 p = g.multi_index(k);
      for (int m = 0; m < (1 << dim); ++m) {
        Index3 c = p;
        for (int a = 0; a < dim; ++a) c[a] -= (m >> a) & 1;
        const std::size_t cl = g.linear_index(c);
        if (seen[cl]) continue;
        seen[cl] = 1;
        const Matrix mat = cell_coefficient(*A, c);
        std::array<LinearForm, 3> D{};
        for (int corner_bits = 0; corner_bits < (1 << dim); ++corner_bits) {
          Index3 corner = c;
          for (int a = 0; a < dim; ++a) corner[a] += (corner_bits >> a) & 1;
          const std::size_t lin = g.linear_index(corner);
          for (int a = 0; a < dim; ++a) {
            const double coeff = (((corner_bits >> a) & 1) ? 1.0 : -1.0) / (edges * h);
            auto& form = D[static_cast<std::size_t>(a)];
            if (index[lin] >= 0)
              form.add_unknown(index[lin], coeff);
            else
              form.known += coeff * trace[lin];
          }
        }
        for (int a = 0; a < dim; ++a)
          for (int b = a + 1; b < dim; ++b)
            if (mat(a, b) != 0.0)
              as.add(2.0 * mat(a, b) * cell_volume, D[static_cast<std::size_t>(a)], D[static_cast<std::size_t>(b)]);
      }
    }
  }

  matrix_.resize(n, n);
  matrix_.setFromTriplets(as.triplets.begin(), as.triplets.end());
  rhs_ = std::move(as.rhs);
  constant_ = as.constant;
}

DirichletSolution BallDirichletProblem::solve(double tolerance, int max_iterations) const {
  Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg;
  cg.setTolerance(tolerance);
  cg.setMaxIterations(max_iterations);
  cg.compute(matrix_);
  const Eigen::VectorXd guess = Eigen::VectorXd::Constant(unknown_count(), sphere_average(trace_, center_, radius_));
  const Eigen::VectorXd v = cg.solveWithGuess(rhs_, guess);
  if (cg.info() != Eigen::Success) throw ConvergenceError("Dirichlet solve did not converge", cg.error());
  ScalarField::Vector values = trace_.values();
  for (std::size_t k = 0; k < unknowns_.size(); ++k) values[static_cast<Eigen::Index>(unknowns_[k])] = v[static_cast<Eigen::Index>(k)];
  DirichletSolution out{trace_.with_values(std::move(values)), cg.error(), static_cast<int>(cg.iterations()), 0.0};
  out.discrete_energy = energy(out.field);
  return out;
}

double BallDirichletProblem::energy(const ScalarField& candidate) const {
  if (!candidate.grid().same_lattice(trace_.grid())) throw PreconditionError("candidate must share the trace's grid");
  Eigen::VectorXd v(unknown_count());
  for (std::size_t k = 0; k < unknowns_.size(); ++k) v[static_cast<Eigen::Index>(k)] = candidate[unknowns_[k]];
  return v.dot(matrix_ * v) - 2.0 * rhs_.dot(v) + constant_;
}

ScalarField harmonic_extension(const ScalarField& u, const Point& x, double r) {
  return BallDirichletProblem(u, nullptr, x, r).solve().field;
}

ScalarField div_a_solve(const CoefficientField& A, const ScalarField& u, const Point& x, double r) {
  return BallDirichletProblem(u, &A, x, r).solve().field;
}

OrthogonalityResidual orthogonality_residual(const ScalarField& u, const Point& x, double r) {
  const ScalarField star = harmonic_extension(u, x, r);
  const Grid& g = u.grid();
  const int dim = g.dim();
  const double h = g.spacing();
  const int edges = 1 << (dim - 1);
  CompensatedSum inner;
  // w = u - u* vanishes off the ball, so every cell meeting it is integrated in full.
  for_each_cell_in_ball(g, Ball{x, r}, [&](const Index3& c, double) {
    double cell = 0.0;
    for (int a = 0; a < dim; ++a)
      for (int k = 0; k < (1 << dim); ++k) {
        if ((k >> a) & 1) continue;
        Index3 p = c, q = c;
        for (int b = 0; b < dim; ++b) {
          p[b] += (k >> b) & 1;
          q[b] += ((k | (1 << a)) >> b) & 1;
        }
        const double ds = star.at(q) - star.at(p);
        const double dw = (u.at(q) - star.at(q)) - (u.at(p) - star.at(p));
        cell += ds * dw;
      }
    inner.add(cell / edges * std::pow(h, dim - 2));
  });
  const double energy = dirichlet_energy(star, Ball{x, r});
  const double scale = std::max(1.0, dirichlet_energy(u, Ball{x, r}));
  if (energy <= 1e-14 * scale) return {std::abs(inner.value()), true};
  return {std::abs(inner.value()) / energy, false};
}

}  // namespace fblab
