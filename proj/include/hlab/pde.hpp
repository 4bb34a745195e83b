#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <vector>

#include "hlab/errors.hpp"
#include "hlab/fields.hpp"
#include "hlab/grid.hpp"

namespace hlab {

struct PdeReport {
  double sup_grad = 0.0;      // sup_t ||Jacobian||_HS over grid nodes
  double sup_hessian = 0.0;   // sup_t Frobenius norm of the second-derivative tensor
  double residual = 0.0;      // worst per-step scheme defect (inf norm)
  double horizon = 0.0;       // t1 - t0 actually solved on
  double lambda = 0.0;        // resolvent parameter (0 for the terminal-value system)
  int steady_iterations = 0;  // stationary-extension iterations (resolvent only)
};

struct PdeSolution {
  GridFunction u;
  PdeReport report;
};

namespace detail {

inline constexpr double pde_residual_tol = 1e-8;
inline constexpr double ellipticity_floor = 1e-10;

/// Implicit-Euler stepper for the operator lambda*I - L on [-L,L]^d with
/// homogeneous Neumann boundary (mirror ghost nodes), marching a backward
/// equation in reversed time.  One factorization per time level is shared by
/// all solution components.
class BackwardMarcher {
 public:
  BackwardMarcher(const CoefficientField& a,
                  const std::optional<CoefficientField>& drift, double lambda,
                  const SpaceTimeGrid& grid)
      : a_(a), drift_(drift), lambda_(lambda), grid_(grid) {
    grid_.validate();
    if (a_.kind() != FieldKind::matrix_field)
      throw ArgumentError("second-order coefficient must be a matrix field");
    if (a_.dim() != grid_.dim)
      throw ArgumentError("coefficient dimension does not match grid");
    if (drift_ && drift_->dim() != grid_.dim)
      throw ArgumentError("drift dimension does not match grid");
  }

  /// Factorize I + dt*(lambda*I - L(t_level)).
  void factorize(double t_level, double dt) {
    const int d = grid_.dim;
    const int M = grid_.nodes_per_axis;
    const double h = grid_.mesh();
    const std::size_t n = grid_.node_count();
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(n * (d == 1 ? 3 : 9));

    auto reflect = [M](int i) {
      if (i < 0) return -i;
      if (i > M - 1) return 2 * (M - 1) - i;
      return i;
    };
    auto scatter = [&](std::size_t row, int i1, int i2, double w) {
      trips.emplace_back(static_cast<int>(row),
                         static_cast<int>(grid_.node_index(reflect(i1),
                                                           reflect(i2))),
                         w);
    };

    double worst_eig = std::numeric_limits<double>::infinity();
    Vec worst_x;
    for (std::size_t row = 0; row < n; ++row) {
      int i1 = d == 1 ? static_cast<int>(row) : static_cast<int>(row) / M;
      int i2 = d == 1 ? 0 : static_cast<int>(row) % M;
      Vec x = grid_.node_point(row);
      Mat a = a_.mat_at(t_level, x);
      double eig = min_eigenvalue_sym(a);
      if (eig < worst_eig) {
        worst_eig = eig;
        worst_x = x;
      }
      Vec b = drift_ ? drift_->vec_at(t_level, x) : Vec();

      trips.emplace_back(static_cast<int>(row), static_cast<int>(row),
                         1.0 + dt * lambda_);
      // -dt * (1/2) a_kk second differences.
      double c11 = -dt * 0.5 * a(0, 0) / (h * h);
      scatter(row, i1 + 1, i2, c11);
      scatter(row, i1 - 1, i2, c11);
      scatter(row, i1, i2, -2.0 * c11);
      if (d == 2) {
        double c22 = -dt * 0.5 * a(1, 1) / (h * h);
        scatter(row, i1, i2 + 1, c22);
        scatter(row, i1, i2 - 1, c22);
        scatter(row, i1, i2, -2.0 * c22);
        // Mixed term: a is symmetric, the two cross terms combine.
        double c12 = -dt * a(0, 1) / (4.0 * h * h);
        scatter(row, i1 + 1, i2 + 1, c12);
        scatter(row, i1 - 1, i2 - 1, c12);
        scatter(row, i1 + 1, i2 - 1, -c12);
        scatter(row, i1 - 1, i2 + 1, -c12);
      }
      if (drift_) {
        double g1 = -dt * b[0] / (2.0 * h);
        scatter(row, i1 + 1, i2, g1);
        scatter(row, i1 - 1, i2, -g1);
        if (d == 2) {
          double g2 = -dt * b[1] / (2.0 * h);
          scatter(row, i1, i2 + 1, g2);
          scatter(row, i1, i2 - 1, -g2);
        }
      }
    }
    if (worst_eig <= ellipticity_floor) {
      std::ostringstream os;
      os << "second-order coefficient is not uniformly elliptic on the grid: "
            "min eigenvalue "
         << worst_eig << " at t=" << t_level << ", x=(";
      for (int k = 0; k < d; ++k) os << (k ? "," : "") << worst_x[k];
      os << ")";
      throw PreconditionError(os.str());
    }

    matrix_.resize(static_cast<int>(n), static_cast<int>(n));
    matrix_.setFromTriplets(trips.begin(), trips.end());
    solver_.compute(matrix_);
    if (solver_.info() != Eigen::Success)
      throw SingularityError("sparse factorization failed");
  }

  /// Solve (I + dt*(lambda*I - L)) out = rhs; returns the scheme defect.
  double solve(const Eigen::VectorXd& rhs, Eigen::VectorXd& out) const {
    out = solver_.solve(rhs);
    if (solver_.info() != Eigen::Success)
      throw ConvergenceError("sparse solve failed");
    return (matrix_ * out - rhs).lpNorm<Eigen::Infinity>();
  }

 private:
  const CoefficientField& a_;
  const std::optional<CoefficientField>& drift_;
  double lambda_;
  SpaceTimeGrid grid_;
  Eigen::SparseMatrix<double> matrix_;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> solver_;
};

/// Shared marching core.  Solves
///   d_t u + L u - lambda u = f,  u(t1, .) = terminal,
/// storing u on every grid slice.  f has one component per solution
/// component.
inline PdeSolution march_backward(
    const CoefficientField& a, const std::optional<CoefficientField>& drift,
    const CoefficientField& f, double lambda, const SpaceTimeGrid& grid,
    const std::vector<Eigen::VectorXd>& terminal, int steady_iterations) {
  const int ncomp = f.dim();
  GridFunction u(grid, ncomp);
  const std::size_t n = grid.node_count();
  const double dt = grid.dt();

  BackwardMarcher marcher(a, drift, lambda, grid);

  std::vector<Eigen::VectorXd> cur(terminal);
  for (int c = 0; c < ncomp; ++c)
    for (std::size_t k = 0; k < n; ++k)
      u.at(grid.time_steps, k, c) = cur[c][static_cast<int>(k)];

  double worst_defect = 0.0;
  Eigen::VectorXd rhs(static_cast<int>(n)), next(static_cast<int>(n));
  std::vector<double> fvals(n * static_cast<std::size_t>(ncomp));
  for (int j = grid.time_steps - 1; j >= 0; --j) {
    const double t_level = grid.slice_time(j);
    marcher.factorize(t_level, dt);
    for (std::size_t k = 0; k < n; ++k) {
      Vec v = f.vec_at(t_level, grid.node_point(k));
      for (int c = 0; c < ncomp; ++c) fvals[k * ncomp + c] = v[c];
    }
    for (int c = 0; c < ncomp; ++c) {
      for (std::size_t k = 0; k < n; ++k)
        rhs[static_cast<int>(k)] =
            cur[c][static_cast<int>(k)] - dt * fvals[k * ncomp + c];
      worst_defect = std::max(worst_defect, marcher.solve(rhs, next));
      cur[c] = next;
      for (std::size_t k = 0; k < n; ++k)
        u.at(j, k, c) = next[static_cast<int>(k)];
    }
  }
  if (worst_defect > pde_residual_tol)
    throw ConvergenceError("scheme defect exceeds tolerance");

  u.finalize();
  PdeSolution sol{std::move(u), {}};
  sol.report.sup_grad = sol.u.sup_jacobian_hs();
  sol.report.sup_hessian = sol.u.sup_hessian_hs();
  sol.report.residual = worst_defect;
  sol.report.horizon = grid.t1 - grid.t0;
  sol.report.lambda = lambda;
  sol.report.steady_iterations = steady_iterations;
  return sol;
}

}  // namespace detail

/// Terminal-value system d_r u + L_r u + b = 0 on [t0,t1], u(t1,.) = 0, with
/// L_r = (1/2) Tr[a grad^2] + <b, grad> (the drift term is optional).
/// Discretized by implicit Euler in reversed time with Neumann mirror
/// boundaries.
inline PdeSolution solve_backward_system(const CoefficientField& a,
                                         const CoefficientField& b,
                                         const SpaceTimeGrid& grid,
                                         bool include_drift = true) {
  if (b.kind() != FieldKind::vector_field)
    throw ArgumentError("drift must be a vector field");
  // d_r u + L u + b = 0 is the lambda = 0 resolvent form with source -(-b):
  // d_r u + L u - 0*u = -b.
  auto minus_b = CoefficientField::drift(
      b.dim(), [b](double t, const Vec& x) -> Vec { return -b.vec_at(t, x); },
      b.regularity());
  std::optional<CoefficientField> drift;
  if (include_drift) drift = b;
  std::vector<Eigen::VectorXd> terminal(
      static_cast<std::size_t>(b.dim()),
      Eigen::VectorXd::Zero(static_cast<int>(grid.node_count())));
  return detail::march_backward(a, drift, minus_b, 0.0, grid, terminal, 0);
}

/// Resolvent system d_t psi + L_t psi - lambda psi = f on [t0,t1], where the
/// bounded-on-[t0,infinity) solution is selected by freezing the coefficients
/// beyond t1: under that extension the bounded solution is stationary past
/// t1, so psi(t1,.) is the steady state of the frozen-coefficient problem,
/// computed by damped implicit iteration before marching back to t0.
inline PdeSolution solve_resolvent_system(const CoefficientField& a,
                                          const std::optional<CoefficientField>& b,
                                          const CoefficientField& f,
                                          double lambda,
                                          const SpaceTimeGrid& grid) {
  if (!(lambda > 0.0)) throw ArgumentError("resolvent parameter must be positive");
  if (f.kind() != FieldKind::vector_field)
    throw ArgumentError("resolvent source must be a vector field");

  const std::size_t n = grid.node_count();
  const int ncomp = f.dim();
  const double dtau = 1.0;  // extension pseudo-time step; contraction 1/(1+dtau*lambda)
  detail::BackwardMarcher steady(a, b, lambda, grid);
  steady.factorize(grid.t1, dtau);

  std::vector<Eigen::VectorXd> psi(
      static_cast<std::size_t>(ncomp),
      Eigen::VectorXd::Zero(static_cast<int>(n)));
  Eigen::VectorXd rhs(static_cast<int>(n)), next(static_cast<int>(n));
  std::vector<double> fvals(n * static_cast<std::size_t>(ncomp));
  for (std::size_t k = 0; k < n; ++k) {
    Vec v = f.vec_at(grid.t1, grid.node_point(k));
    for (int c = 0; c < ncomp; ++c) fvals[k * ncomp + c] = v[c];
  }

  int iterations = 0;
  const int max_iterations = 400;
  for (;; ++iterations) {
    if (iterations >= max_iterations)
      throw ConvergenceError(
          "stationary-extension phase did not reach tolerance");
    double delta = 0.0, scale = 1.0;
    for (int c = 0; c < ncomp; ++c) {
      for (std::size_t k = 0; k < n; ++k)
        rhs[static_cast<int>(k)] =
            psi[c][static_cast<int>(k)] - dtau * fvals[k * ncomp + c];
      steady.solve(rhs, next);
      delta = std::max(delta,
                       (next - psi[c]).lpNorm<Eigen::Infinity>());
      scale = std::max(scale, next.lpNorm<Eigen::Infinity>());
      psi[c] = next;
    }
    if (delta < 1e-13 * scale) break;
  }

  return detail::march_backward(a, b, f, lambda, grid, psi, iterations + 1);
}

}  // namespace hlab
