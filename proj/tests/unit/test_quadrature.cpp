#include <cmath>

#include <catch2/catch_amalgamated.hpp>

#include "hlab/linalg.hpp"
#include "hlab/quadrature.hpp"

TEST_CASE("line rule is exact on high-degree polynomials") {
  // A 16-point rule integrates polynomials up to degree 31 exactly.
  auto f30 = [](double x) { return std::pow(x, 30); };
  CHECK(hlab::integrate_gl16(f30, -1.0, 1.0) ==
        Catch::Approx(2.0 / 31.0).epsilon(1e-13));
  auto f2 = [](double x) { return x * x; };
  CHECK(hlab::integrate_gl16(f2, 0.0, 1.0) ==
        Catch::Approx(1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("line rule handles smooth non-polynomial integrands") {
  auto f = [](double x) { return std::sin(x); };
  CHECK(hlab::integrate_gl16(f, 0.0, 3.14159265358979323846) ==
        Catch::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("tensor rule integrates over centered cubes in each dimension") {
  using hlab::Vec;
  auto one = [](const Vec&) { return 1.0; };
  CHECK(hlab::integrate_gl16_cube(one, 1, 1.5) == Catch::Approx(3.0));
  CHECK(hlab::integrate_gl16_cube(one, 2, 1.5) == Catch::Approx(9.0));
  CHECK(hlab::integrate_gl16_cube(one, 3, 0.5) == Catch::Approx(1.0));

  auto prod = [](const Vec& x) {
    double p = 1.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) p *= x[i] * x[i];
    return p;
  };
  CHECK(hlab::integrate_gl16_cube(prod, 2, 1.0) ==
        Catch::Approx(4.0 / 9.0).epsilon(1e-13));
  CHECK(hlab::integrate_gl16_cube(prod, 3, 1.0) ==
        Catch::Approx(8.0 / 27.0).epsilon(1e-13));
}
