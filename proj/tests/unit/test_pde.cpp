#include <cmath>
#include <optional>

#include <catch2/catch_amalgamated.hpp>

#include "hlab/errors.hpp"
#include "hlab/fields.hpp"
#include "hlab/grid.hpp"
#include "hlab/linalg.hpp"
#include "hlab/pde.hpp"

using hlab::CoefficientField;
using hlab::make_vec;
using hlab::Mat;
using hlab::SpaceTimeGrid;
using hlab::Vec;

namespace {

CoefficientField identity_a(int dim) {
  return CoefficientField::diffusion(
      dim, [dim](double, const Vec&) { return Mat(Mat::Identity(dim, dim)); });
}

CoefficientField constant_drift(double c) {
  return CoefficientField::drift(
      1, [c](double, const Vec&) { return make_vec({c}); });
}

SpaceTimeGrid grid1d(int nodes, int steps, double half_width = 2.0,
                     double horizon = 1.0) {
  SpaceTimeGrid g;
  g.dim = 1;
  g.nodes_per_axis = nodes;
  g.half_width = half_width;
  g.t0 = 0.0;
  g.t1 = horizon;
  g.time_steps = steps;
  return g;
}

}  // namespace

TEST_CASE("zero source gives the zero solution") {
  auto sol = hlab::solve_backward_system(identity_a(1), constant_drift(0.0),
                                         grid1d(9, 4));
  CHECK(sol.u.sup_abs() == Catch::Approx(0.0).margin(1e-14));
  CHECK(sol.report.residual < 1e-12);
}

TEST_CASE("constant drift integrates to c * (t1 - r) exactly") {
  // Spatially constant states are untouched by the operator, so each
  // implicit step adds exactly dt * c.
  const double c = 0.7;
  auto sol = hlab::solve_backward_system(identity_a(1), constant_drift(c),
                                         grid1d(9, 8));
  const auto& g = sol.u.grid();
  for (int j = 0; j < g.slice_count(); ++j) {
    double expect = c * (g.t1 - g.slice_time(j));
    for (std::size_t n = 0; n < g.node_count(); ++n)
      CHECK(sol.u.at(j, n, 0) == Catch::Approx(expect).margin(1e-12));
  }
  CHECK(sol.report.sup_grad == Catch::Approx(0.0).margin(1e-11));
  CHECK(sol.report.sup_hessian == Catch::Approx(0.0).margin(1e-10));
  CHECK(sol.report.residual < 1e-10);
  CHECK(sol.report.horizon == Catch::Approx(1.0));
}

TEST_CASE("halving the horizon halves the solution size for constant drift") {
  const double c = 1.0;
  auto full = hlab::solve_backward_system(identity_a(1), constant_drift(c),
                                          grid1d(9, 8, 2.0, 1.0));
  auto half = hlab::solve_backward_system(identity_a(1), constant_drift(c),
                                          grid1d(9, 8, 2.0, 0.5));
  CHECK(full.u.sup_abs() == Catch::Approx(1.0).margin(1e-12));
  CHECK(half.u.sup_abs() == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("solution stays below horizon times the drift bound") {
  // Comparison-principle surrogate: u(r) integrates the semigroup applied to
  // b over [r, t1], so sup |u| <= (t1 - r) sup |b|.
  auto b = CoefficientField::drift(1, [](double, const Vec& x) {
    return make_vec({std::tanh(3.0 * x[0])});
  });
  auto sol =
      hlab::solve_backward_system(identity_a(1), b, grid1d(41, 16, 3.0, 1.0));
  CHECK(sol.u.sup_abs() <= 1.0 + 1e-9);
  CHECK(sol.report.residual < 1e-8);
}

TEST_CASE("manufactured solution converges at second order in space") {
  // Target u*(r,x) = (t1 - r) cos(pi x / L) is Neumann-compatible on [-L,L].
  // Forcing it through the source term: d_r u + (1/2) u'' = -b with
  // b = cos(pi x/L) - (t1 - r) (1/2)(pi/L)^2 cos(pi x/L).
  const double L = 2.0;
  const double w = 3.14159265358979323846 / L;
  auto forcing = [w](double r, double t1, double x) {
    return std::cos(w * x) * (1.0 + (t1 - r) * 0.5 * w * w);
  };
  auto run = [&](int nodes, int steps) {
    auto b = CoefficientField::drift(1, [&, t1 = 1.0](double r, const Vec& x) {
      return make_vec({forcing(r, t1, x[0])});
    });
    auto sol = hlab::solve_backward_system(identity_a(1), b,
                                           grid1d(nodes, steps, L, 1.0),
                                           /*include_drift=*/false);
    // Max nodal error at r = t0 against the closed form.
    double err = 0.0;
    const auto& g = sol.u.grid();
    for (std::size_t n = 0; n < g.node_count(); ++n) {
      double x = g.node_point(n)[0];
      err = std::max(err,
                     std::abs(sol.u.at(0, n, 0) - 1.0 * std::cos(w * x)));
    }
    return err;
  };
  // Halve h, quarter dt: total error (O(dt) + O(h^2)) should drop ~4x.
  double coarse = run(17, 8);
  double fine = run(33, 32);
  CHECK(coarse / fine >= 3.0);
  CHECK(fine < 0.01);
}

TEST_CASE("resolvent of a constant source is -f/lambda") {
  const double lambda = 4.0;
  const double c = 2.0;
  auto f = constant_drift(c);
  auto sol = hlab::solve_resolvent_system(identity_a(1), std::nullopt, f,
                                          lambda, grid1d(9, 4));
  const auto& g = sol.u.grid();
  for (int j = 0; j < g.slice_count(); ++j)
    for (std::size_t n = 0; n < g.node_count(); ++n)
      CHECK(sol.u.at(j, n, 0) == Catch::Approx(-c / lambda).margin(1e-10));
  CHECK(sol.report.lambda == lambda);
  CHECK(sol.report.steady_iterations > 0);
}

TEST_CASE("larger damping shrinks the resolvent solution") {
  auto f = CoefficientField::drift(1, [](double, const Vec& x) {
    return make_vec({std::sin(x[0])});
  });
  auto small = hlab::solve_resolvent_system(identity_a(1), std::nullopt, f,
                                            1.0, grid1d(33, 8));
  auto large = hlab::solve_resolvent_system(identity_a(1), std::nullopt, f,
                                            16.0, grid1d(33, 8));
  CHECK(large.u.sup_abs() < small.u.sup_abs());
  // Damped bound sup |psi| <= sup |f| / lambda.
  CHECK(small.u.sup_abs() <= 1.0 / 1.0 + 1e-6);
  CHECK(large.u.sup_abs() <= 1.0 / 16.0 + 1e-6);
}

TEST_CASE("resolvent rejects nonpositive damping") {
  CHECK_THROWS_AS(
      hlab::solve_resolvent_system(identity_a(1), std::nullopt,
                                   constant_drift(1.0), 0.0, grid1d(9, 4)),
      hlab::ArgumentError);
}

TEST_CASE("degenerate diffusion is rejected with a located error") {
  // sigma with rows (1,-1), (-1,1): a = sigma sigma^T is singular.
  auto sigma = CoefficientField::diffusion(2, [](double, const Vec&) {
    Mat s(2, 2);
    s << 1.0, -1.0, -1.0, 1.0;
    return s;
  });
  auto a = CoefficientField::diffusion(
      2, [sigma](double t, const Vec& x) { return sigma.a_at(t, x); });
  auto b = CoefficientField::drift(
      2, [](double, const Vec&) { return Vec(Vec::Zero(2)); });
  SpaceTimeGrid g;
  g.dim = 2;
  g.nodes_per_axis = 5;
  g.half_width = 1.0;
  g.time_steps = 2;
  CHECK_THROWS_AS(hlab::solve_backward_system(a, b, g),
                  hlab::PreconditionError);
}

TEST_CASE("two-dimensional system with mixed second derivatives stays exact "
          "for constant sources") {
  // Anisotropic but nondegenerate a: the constant-state argument still holds
  // componentwise, so u = c (t1 - r) per component.
  auto sigma = CoefficientField::diffusion(2, [](double, const Vec&) {
    Mat s(2, 2);
    s << 1.0, 0.3, 0.0, 0.8;
    return s;
  });
  auto a = CoefficientField::diffusion(
      2, [sigma](double t, const Vec& x) { return sigma.a_at(t, x); });
  auto b = CoefficientField::drift(
      2, [](double, const Vec&) { return make_vec({0.4, -0.9}); });
  SpaceTimeGrid g;
  g.dim = 2;
  g.nodes_per_axis = 7;
  g.half_width = 1.5;
  g.time_steps = 4;
  auto sol = hlab::solve_backward_system(a, b, g);
  for (std::size_t n = 0; n < g.node_count(); ++n) {
    CHECK(sol.u.at(0, n, 0) == Catch::Approx(0.4).margin(1e-11));
    CHECK(sol.u.at(0, n, 1) == Catch::Approx(-0.9).margin(1e-11));
  }
}
