#include <cmath>
#include <limits>

#include <catch2/catch_amalgamated.hpp>

#include "hlab/linalg.hpp"
#include "hlab/sde.hpp"

using hlab::CoefficientField;
using hlab::Driver;
using hlab::make_vec;
using hlab::SdeProblem;
using hlab::Vec;

namespace {

SdeProblem additive_1d(CoefficientField drift, double horizon = 2.0) {
  return SdeProblem{1, std::move(drift), std::nullopt, Driver::brownian, 2.0,
                    horizon};
}

CoefficientField zero_drift(int dim) {
  return CoefficientField::drift(
      dim, [dim](double, const Vec&) { return Vec(Vec::Zero(dim)); });
}

}  // namespace

TEST_CASE("zero drift and zero rate give exact linear distance decay") {
  // With shared noise the relative motion is the deterministic pull
  // |x-y|/T, so every pair merges exactly at the horizon.
  auto problem = additive_1d(zero_drift(1));
  auto st = hlab::simulate_coupled_pair(problem, make_vec({1.0}),
                                        make_vec({-1.0}), 0.0, 1.0, 200,
                                        1.0 / 64.0, 17);
  CHECK(st.success_fraction == 1.0);
  CHECK(st.eps == Catch::Approx(2e-4));
  for (double tau : st.tau) {
    REQUIRE(std::isfinite(tau));
    CHECK(tau <= 1.0 + 1e-12);
    CHECK(tau >= 1.0 - 2.0 / 64.0);  // merges within the last steps
  }
}

TEST_CASE("coincident starting points couple immediately at zero cost") {
  auto problem = additive_1d(zero_drift(1));
  auto st = hlab::simulate_coupled_pair(problem, make_vec({0.3}),
                                        make_vec({0.3}), 0.0, 1.0, 50,
                                        1.0 / 32.0, 3);
  CHECK(st.success_fraction == 1.0);
  for (double tau : st.tau) CHECK(tau == 0.0);
  for (double g : st.girsanov_log_density) CHECK(g == 0.0);
  CHECK(st.girsanov_mean.mean == Catch::Approx(1.0));
  CHECK(st.girsanov_mean.std_error == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("positive rate front-loads the pull and couples strictly earlier") {
  auto problem = additive_1d(zero_drift(1));
  auto st = hlab::simulate_coupled_pair(problem, make_vec({1.0}),
                                        make_vec({0.0}), 1.0, 1.0, 100,
                                        1.0 / 128.0, 29);
  CHECK(st.success_fraction == 1.0);
  for (double tau : st.tau) {
    REQUIRE(std::isfinite(tau));
    CHECK(tau < 1.0 - 1.0 / 128.0);
  }
}

TEST_CASE("change-of-measure density is an exact discrete martingale") {
  auto problem = additive_1d(zero_drift(1));
  auto st = hlab::simulate_coupled_pair(problem, make_vec({0.5}),
                                        make_vec({-0.5}), 0.0, 1.0, 2000,
                                        1.0 / 64.0, 41);
  // Mean of exp(-u.dW - 1/2 |u|^2 dt) over paths is 1 in expectation, with
  // the discrete-time identity holding exactly per step.
  CHECK(std::abs(st.girsanov_mean.mean - 1.0) <
        3.0 * st.girsanov_mean.std_error);
}

TEST_CASE("one-sided Lipschitz monitor separates contracting from expanding "
          "drifts") {
  auto contracting = CoefficientField::drift(
      1, [](double, const Vec& x) { return make_vec({-x[0]}); });
  auto st_ok = hlab::simulate_coupled_pair(additive_1d(contracting),
                                           make_vec({1.0}), make_vec({-1.0}),
                                           0.0, 1.0, 20, 1.0 / 32.0, 7);
  CHECK(st_ok.drift_condition_violations == 0);
  CHECK_FALSE(st_ok.drift_condition_warning);

  auto expanding = CoefficientField::drift(
      1, [](double, const Vec& x) { return make_vec({x[0]}); });
  auto st_bad = hlab::simulate_coupled_pair(additive_1d(expanding),
                                            make_vec({1.0}), make_vec({-1.0}),
                                            0.0, 1.0, 20, 1.0 / 32.0, 7);
  CHECK(st_bad.drift_condition_violations > 0);
  CHECK(st_bad.drift_condition_warning);
}

TEST_CASE("coupling rejects unsupported drivers and bad steps") {
  SdeProblem stable{1, zero_drift(1), std::nullopt, Driver::stable, 1.5, 1.0};
  CHECK_THROWS_AS(hlab::simulate_coupled_pair(stable, make_vec({1.0}),
                                              make_vec({0.0}), 0.0, 1.0, 10,
                                              0.1, 1),
                  hlab::ArgumentError);
  SdeProblem scaled{1, zero_drift(1),
                    CoefficientField::diffusion(
                        1, [](double, const Vec&) {
                          return hlab::Mat(2.0 * hlab::Mat::Identity(1, 1));
                        }),
                    Driver::brownian, 2.0, 1.0};
  CHECK_THROWS_AS(hlab::simulate_coupled_pair(scaled, make_vec({1.0}),
                                              make_vec({0.0}), 0.0, 1.0, 10,
                                              0.1, 1),
                  hlab::ArgumentError);
  auto problem = additive_1d(zero_drift(1));
  CHECK_THROWS_AS(hlab::simulate_coupled_pair(problem, make_vec({1.0}),
                                              make_vec({0.0}), 0.0, 1.0, 10,
                                              0.3, 1),
                  hlab::ArgumentError);  // dt does not divide the horizon
}
