#include <cmath>
#include <optional>

#include <catch2/catch_amalgamated.hpp>

#include "hlab/fields.hpp"
#include "hlab/kernel_bounds.hpp"
#include "hlab/linalg.hpp"
#include "hlab/sde.hpp"

using hlab::CoefficientField;
using hlab::Driver;
using hlab::make_vec;
using hlab::SdeProblem;
using hlab::Vec;

namespace {

SdeProblem stable_1d(double alpha, double horizon = 2.0) {
  auto drift = CoefficientField::drift(
      1, [](double, const Vec&) { return make_vec({0.0}); });
  return SdeProblem{1, std::move(drift), std::nullopt, Driver::stable, alpha,
                    horizon};
}

}  // namespace

TEST_CASE("cauchy kernel envelope constant comes out near the exact value") {
  // For alpha = 1 and t = 1 the transition density is Cauchy,
  // p(y) = (1/pi) / (1 + (y-x)^2), and the envelope constant of
  // min(1, |r|^{-2}) is exactly 2*pi, attained at |r| = 1.
  auto problem = stable_1d(1.0);
  std::vector<double> starts{0.0, 1.0};
  std::vector<double> offsets{-50.0, -2.0, -1.5, -1.0, -0.5, 0.0,
                              0.5,   1.0,  1.5,  2.0,  50.0};
  std::vector<double> z_probes{-1.0, 0.0, 0.5, 1.0, 2.0};
  auto rep = hlab::verify_kernel_bounds(problem, 1.0, starts, offsets, z_probes,
                                        30000, 0.125, 555);
  CHECK(rep.t == 1.0);
  CHECK(rep.alpha == 1.0);
  CHECK(rep.c_fit > 5.5);
  CHECK(rep.c_fit < 7.2);
  CHECK(rep.sup_envelope_over_density > rep.sup_density_over_envelope);

  // The +-50 offsets have density far below the estimator's noise floor and
  // are dropped rather than compared.
  CHECK(rep.den1_dropped >= 2);
  CHECK(rep.den1_used + rep.den1_dropped == starts.size() * offsets.size());

  CHECK(rep.den2_all_hold);
  CHECK(rep.den2_min_margin >= 1.0);
  CHECK(rep.den2_checked > 0);
  CHECK(rep.den2_checked + rep.den2_dropped ==
        starts.size() * (starts.size() - 1) * z_probes.size());
}

TEST_CASE("intermediate stable index admits a moderate envelope constant") {
  auto problem = stable_1d(1.5);
  std::vector<double> starts{-0.5, 0.5};
  std::vector<double> offsets{-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0};
  std::vector<double> z_probes{-1.0, 0.0, 1.0};
  auto rep = hlab::verify_kernel_bounds(problem, 0.5, starts, offsets, z_probes,
                                        20000, 0.0625, 808);
  CHECK(rep.c_fit > 1.0);
  CHECK(rep.c_fit < 50.0);
  CHECK(rep.den2_all_hold);
  CHECK(rep.den1_used > 0);
}

TEST_CASE("kernel bound preconditions") {
  std::vector<double> starts{0.0, 1.0};
  std::vector<double> offsets{0.0, 1.0};
  std::vector<double> zs{0.0};

  auto brownian = SdeProblem{1,
                             CoefficientField::drift(
                                 1, [](double, const Vec&) { return make_vec({0.0}); }),
                             std::nullopt, Driver::brownian, 2.0, 2.0};
  CHECK_THROWS_AS(hlab::verify_kernel_bounds(brownian, 1.0, starts, offsets, zs,
                                             100, 0.125, 1),
                  hlab::ArgumentError);

  auto planar = SdeProblem{2,
                           CoefficientField::drift(
                               2, [](double, const Vec&) {
                                 return Vec(Vec::Zero(2));
                               }),
                           std::nullopt, Driver::stable, 1.5, 2.0};
  CHECK_THROWS_AS(hlab::verify_kernel_bounds(planar, 1.0, starts, offsets, zs,
                                             100, 0.125, 1),
                  hlab::ArgumentError);

  auto ok = stable_1d(1.0);
  CHECK_THROWS_AS(hlab::verify_kernel_bounds(ok, 1.0, {0.0}, offsets, zs, 100,
                                             0.125, 1),
                  hlab::ArgumentError);  // one start is not enough
  CHECK_THROWS_AS(hlab::verify_kernel_bounds(ok, 1.0, starts, {}, zs, 100,
                                             0.125, 1),
                  hlab::ArgumentError);
  CHECK_THROWS_AS(hlab::verify_kernel_bounds(ok, 0.0, starts, offsets, zs, 100,
                                             0.125, 1),
                  hlab::ArgumentError);
}
