#include <cmath>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "hlab/errors.hpp"
#include "hlab/rng.hpp"
#include "hlab/stats.hpp"

TEST_CASE("running moments match closed-form values on a small sample") {
  hlab::RunningStats acc;
  for (double x : {2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0}) acc.add(x);
  CHECK(acc.count() == 8);
  CHECK(acc.mean() == Catch::Approx(5.0));
  CHECK(acc.variance() == Catch::Approx(32.0 / 7.0));  // unbiased
  CHECK(acc.std_error() ==
        Catch::Approx(std::sqrt(32.0 / 7.0 / 8.0)));
}

TEST_CASE("interval estimate carries the 99% width") {
  std::vector<double> xs{1.0, 2.0, 3.0};
  auto est = hlab::mc_estimate(xs);
  CHECK(est.mean == Catch::Approx(2.0));
  CHECK(est.n == 3);
  CHECK(est.z == Catch::Approx(2.576));
  CHECK(est.upper() - est.lower() ==
        Catch::Approx(2.0 * 2.576 * est.std_error));
  CHECK(est.lower() < est.mean);
}

TEST_CASE("sorted-sample quantiles interpolate linearly") {
  std::vector<double> xs{1.0, 2.0, 3.0, 4.0, 5.0};
  CHECK(hlab::quantile_sorted(xs, 0.0) == 1.0);
  CHECK(hlab::quantile_sorted(xs, 1.0) == 5.0);
  CHECK(hlab::quantile_sorted(xs, 0.5) == Catch::Approx(3.0));
  CHECK(hlab::quantile_sorted(xs, 0.25) == Catch::Approx(2.0));
  CHECK(hlab::quantile_sorted(xs, 0.1) == Catch::Approx(1.4));
  CHECK_THROWS_AS(hlab::quantile_sorted(std::vector<double>{}, 0.5),
                  hlab::ArgumentError);
}

TEST_CASE("two-sample KS distance separates disjoint samples") {
  std::vector<double> a{0.0, 1.0, 2.0};
  std::vector<double> b{10.0, 11.0, 12.0};
  CHECK(hlab::ks_distance_sorted(a, b) == Catch::Approx(1.0));
  CHECK(hlab::ks_distance_sorted(a, a) <= 1.0 / 3.0 + 1e-12);
}

TEST_CASE("two-sample KS critical value matches the closed form") {
  CHECK(hlab::ks_critical_value(100, 100, 0.01) ==
        Catch::Approx(0.2301807413001365).epsilon(1e-9));
}

TEST_CASE("one-sample KS distance is zero for a perfectly placed grid") {
  // Points at the midpoints of each 1/n probability cell give distance 1/(2n).
  std::vector<double> xs;
  const int n = 10;
  for (int i = 0; i < n; ++i) xs.push_back((i + 0.5) / n);
  auto uniform_cdf = [](double x) { return x; };
  CHECK(hlab::ks_distance_cdf_sorted(xs, uniform_cdf) ==
        Catch::Approx(0.05));
}

TEST_CASE("robust bandwidth matches a hand-computed value") {
  std::vector<double> xs;
  for (int i = 0; i < 10; ++i) xs.push_back(static_cast<double>(i));
  CHECK(hlab::silverman_bandwidth(xs) ==
        Catch::Approx(1.719286404692283).epsilon(1e-12));
}

TEST_CASE("zero-spread samples cannot produce a bandwidth") {
  std::vector<double> xs(5, 3.0);
  CHECK_THROWS_AS(hlab::silverman_bandwidth(xs), hlab::DegenerateError);
}

TEST_CASE("density estimate recovers the standard normal at the mode") {
  hlab::RngStream r(21, 0);
  std::vector<double> xs(40000);
  for (auto& x : xs) x = r.normal();
  auto kde = hlab::Kde1d::fit(std::move(xs));
  const double phi0 = 0.3989422804014327;
  CHECK(std::abs(kde(0.0) - phi0) < 0.05 * phi0);
  CHECK(kde.noise_floor() < 0.01 * phi0);
  // Far in the tail the estimate drops below the declared noise floor.
  CHECK(kde(60.0) < kde.noise_floor());
}
