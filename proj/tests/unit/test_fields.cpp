#include <cmath>
#include <limits>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "hlab/errors.hpp"
#include "hlab/fields.hpp"
#include "hlab/linalg.hpp"

using hlab::CoefficientField;
using hlab::make_vec;
using hlab::Mat;
using hlab::Regularity;
using hlab::Vec;

TEST_CASE("regularity factories validate their parameters") {
  CHECK_THROWS_AS(Regularity::hoelder(0.0), hlab::ArgumentError);
  CHECK_THROWS_AS(Regularity::hoelder(1.5), hlab::ArgumentError);
  CHECK(Regularity::hoelder(0.5).theta == 0.5);
  CHECK_THROWS_AS(Regularity::lps(-1.0, 2.0), hlab::ArgumentError);
}

TEST_CASE("space-time integrability subcriticality is d/p + 2/q < 1") {
  CHECK(hlab::lps_subcritical(1, Regularity::lps(3.0, 4.0)));   // 5/6
  CHECK_FALSE(hlab::lps_subcritical(3, Regularity::lps(3.0, 4.0)));  // 3/2
  CHECK_FALSE(hlab::lps_subcritical(2, Regularity::lps(2.0, 4.0)));  // exactly 1
  CHECK_FALSE(hlab::lps_subcritical(1, Regularity::smooth()));
}

TEST_CASE("field evaluation rejects non-finite and mis-sized values") {
  auto bad_nan = CoefficientField::drift(1, [](double, const Vec&) {
    Vec v(1);
    v[0] = std::numeric_limits<double>::quiet_NaN();
    return v;
  });
  CHECK_THROWS_AS(bad_nan.vec_at(0.0, make_vec({0.0})), hlab::EvaluationError);

  auto bad_size = CoefficientField::drift(2, [](double, const Vec&) {
    return Vec(Vec::Zero(3));
  });
  CHECK_THROWS_AS(bad_size.vec_at(0.0, make_vec({0.0, 0.0})),
                  hlab::EvaluationError);

  auto mat = CoefficientField::diffusion(
      1, [](double, const Vec&) { return Mat(Mat::Identity(1, 1)); });
  CHECK_THROWS_AS(mat.vec_at(0.0, make_vec({0.0})), hlab::ArgumentError);
  CHECK_THROWS_AS(CoefficientField::drift(4, nullptr), hlab::ArgumentError);
}

TEST_CASE("diffusion square is sigma sigma^T") {
  auto sigma = CoefficientField::diffusion(2, [](double, const Vec&) {
    Mat s(2, 2);
    s << 1.0, 2.0, 0.0, 3.0;
    return s;
  });
  Mat a = sigma.a_at(0.0, make_vec({0.0, 0.0}));
  CHECK(a(0, 0) == Catch::Approx(5.0));
  CHECK(a(0, 1) == Catch::Approx(6.0));
  CHECK(a(1, 0) == Catch::Approx(6.0));
  CHECK(a(1, 1) == Catch::Approx(9.0));
}

TEST_CASE("diagonal diffusion yields exact ellipticity band on circle probes") {
  auto sigma = CoefficientField::diffusion(2, [](double, const Vec&) {
    Mat s(2, 2);
    s << 1.0, 0.0, 0.0, 2.0;
    return s;
  });
  auto probes = hlab::circle_direction_probes(0.01);
  auto w = hlab::check_nondegeneracy(sigma, probes);
  CHECK_FALSE(w.violated);
  CHECK(w.delta == Catch::Approx(1.0));            // angle 0 is probed exactly
  CHECK(w.kappa_upper == Catch::Approx(4.0).margin(1e-3));
  // For a diagonal matrix the componentwise surrogate equals the true form.
  CHECK(w.surrogate_delta == Catch::Approx(w.delta).margin(1e-9));
  CHECK(w.surrogate_kappa == Catch::Approx(w.kappa_upper).margin(1e-9));
}

TEST_CASE("degenerate matrix is caught while its componentwise surrogate is not") {
  // The 2x2 matrix with rows (1,-1) and (-1,1) annihilates the diagonal
  // direction, but the surrogate sum_i y_i^2 |row_i|^2 equals 2 on every unit
  // direction, so surrogate-based reasoning would wrongly certify it.
  auto sigma = CoefficientField::diffusion(2, [](double, const Vec&) {
    Mat s(2, 2);
    s << 1.0, -1.0, -1.0, 1.0;
    return s;
  });
  auto probes = hlab::circle_direction_probes(0.001);
  auto w = hlab::check_nondegeneracy(sigma, probes);
  CHECK(w.violated);
  CHECK(w.delta < 1e-5);
  CHECK(w.surrogate_delta == Catch::Approx(2.0).margin(1e-9));
  CHECK(w.surrogate_kappa == Catch::Approx(2.0).margin(1e-9));
  // The worst direction is the diagonal (up to sign).
  CHECK(std::abs(std::abs(w.worst_direction[0]) - std::sqrt(0.5)) < 1e-2);
}

TEST_CASE("direction probes must be unit vectors") {
  auto sigma = CoefficientField::diffusion(
      2, [](double, const Vec&) { return Mat(Mat::Identity(2, 2)); });
  std::vector<hlab::DirectionProbe> probes{
      {0.0, Vec(Vec::Zero(2)), make_vec({2.0, 0.0})}};
  CHECK_THROWS_AS(hlab::check_nondegeneracy(sigma, probes),
                  hlab::ArgumentError);
}

TEST_CASE("random probe generators include basis directions and honor counts") {
  auto probes = hlab::random_direction_probes(3, 10, 77);
  REQUIRE(probes.size() == 13);
  CHECK(probes[0].direction[0] == 1.0);
  CHECK(probes[1].direction[1] == 1.0);
  CHECK(probes[2].direction[2] == 1.0);
  for (const auto& p : probes)
    CHECK(std::abs(p.direction.norm() - 1.0) < 1e-9);

  auto pairs = hlab::random_pair_probes(2, 25, 1.0, 78);
  REQUIRE(pairs.size() == 25);
  for (const auto& p : pairs) CHECK((p.x - p.y).norm() > 0.0);
}

TEST_CASE("Hoelder seminorm of |x|^theta against the origin is exactly one") {
  const double theta = 0.5;
  auto b = CoefficientField::drift(1, [theta](double, const Vec& x) {
    Vec v(1);
    v[0] = std::pow(std::abs(x[0]), theta);
    return v;
  });
  std::vector<hlab::PairProbe> probes;
  for (double x : {0.25, 1.0, 2.0})
    probes.push_back({0.0, make_vec({x}), make_vec({0.0})});
  probes.push_back({0.0, make_vec({4.0}), make_vec({1.0})});
  CHECK(hlab::check_hoelder_seminorm(b, theta, probes) == Catch::Approx(1.0));
  CHECK_THROWS_AS(hlab::check_hoelder_seminorm(b, 0.0, probes),
                  hlab::ArgumentError);
  std::vector<hlab::PairProbe> dup{{0.0, make_vec({1.0}), make_vec({1.0})}};
  CHECK_THROWS_AS(hlab::check_hoelder_seminorm(b, theta, dup),
                  hlab::ArgumentError);
}

TEST_CASE("inverse diffusion bound is the exact Frobenius norm for diagonals") {
  auto sigma = CoefficientField::diffusion(2, [](double, const Vec&) {
    Mat s(2, 2);
    s << 1.0, 0.0, 0.0, 2.0;
    return s;
  });
  std::vector<hlab::PointProbe> probes{{0.0, Vec(Vec::Zero(2))}};
  // a = diag(1,4), a^{-1} = diag(1, 1/4), HS norm sqrt(1 + 1/16).
  CHECK(hlab::check_inverse_diffusion_bound(sigma, probes) ==
        Catch::Approx(std::sqrt(1.0 + 1.0 / 16.0)));

  auto singular = CoefficientField::diffusion(2, [](double, const Vec&) {
    Mat s(2, 2);
    s << 1.0, -1.0, -1.0, 1.0;
    return s;
  });
  CHECK_THROWS_AS(hlab::check_inverse_diffusion_bound(singular, probes),
                  hlab::SingularityError);
}

TEST_CASE("mollification reproduces constant and linear fields exactly") {
  auto c = CoefficientField::drift(2, [](double, const Vec&) {
    return make_vec({3.0, -1.5});
  });
  auto mc = hlab::mollify(c, 4);
  Vec v = mc.vec_at(0.0, make_vec({0.7, -0.2}));
  CHECK(v[0] == Catch::Approx(3.0).margin(1e-13));
  CHECK(v[1] == Catch::Approx(-1.5).margin(1e-13));

  // Odd symmetry of the kernel support makes linear fields fixed points.
  auto lin = CoefficientField::drift(1, [](double, const Vec& x) {
    Vec v1(1);
    v1[0] = 2.0 * x[0];
    return v1;
  });
  auto ml = hlab::mollify(lin, 2);
  CHECK(ml.vec_at(0.0, make_vec({0.3}))[0] == Catch::Approx(0.6).margin(1e-13));
}

TEST_CASE("mollified discontinuous drift converges pointwise away from the jump") {
  auto sgn = CoefficientField::drift(1, [](double, const Vec& x) {
    Vec v(1);
    v[0] = x[0] >= 0.0 ? 1.0 : -1.0;
    return v;
  });
  // At the jump the symmetric average is zero for every scale.
  for (int n : {1, 2, 8})
    CHECK(hlab::mollify(sgn, n).vec_at(0.0, make_vec({0.0}))[0] ==
          Catch::Approx(0.0).margin(1e-13));
  // Away from the jump the value is exact once the support radius 1/n fits.
  CHECK(hlab::mollify(sgn, 4).vec_at(0.0, make_vec({0.3}))[0] ==
        Catch::Approx(1.0).margin(1e-13));
  CHECK(hlab::mollify(sgn, 4).vec_at(0.0, make_vec({-0.3}))[0] ==
        Catch::Approx(-1.0).margin(1e-13));
  // At scale 1 the point 0.3 sits inside the kernel support and the value is
  // strictly between the two branches.
  double v = hlab::mollify(sgn, 1).vec_at(0.0, make_vec({0.3}))[0];
  CHECK(v > 0.0);
  CHECK(v < 1.0);
  CHECK_THROWS_AS(hlab::mollify(sgn, 0), hlab::ArgumentError);
}

TEST_CASE("energy form matches the closed form for diagonal diffusion") {
  auto sigma = CoefficientField::diffusion(2, [](double, const Vec&) {
    Mat s(2, 2);
    s << 1.0, 0.0, 0.0, 2.0;
    return s;
  });
  auto f = [](const Vec& x) { return x[1]; };
  // (1/2) |sigma^T grad f|^2 = (1/2) * 4 = 2.
  CHECK(hlab::carre_du_champ(sigma, f, f, 0.0, make_vec({0.0, 0.0})) ==
        Catch::Approx(2.0).margin(1e-8));
  auto g = [](const Vec& x) { return x[0]; };
  CHECK(hlab::carre_du_champ(sigma, f, g, 0.0, make_vec({0.0, 0.0})) ==
        Catch::Approx(0.0).margin(1e-8));
}
