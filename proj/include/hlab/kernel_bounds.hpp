#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "hlab/errors.hpp"
#include "hlab/sde.hpp"
#include "hlab/stats.hpp"

namespace hlab {

/// Two-sided envelope certificate for the transition density of the stable
/// driver, d = 1.
///
/// den1:  c^{-1} g <= p(t,x,y) <= c g   with  g = min(t^{-1/alpha},
///        t / |x-y|^{1+alpha}),
/// den2:  p(t,x,z) <= 2^{1+alpha} c^2 (1 + |x-y|/t^{1/alpha})^{1+alpha}
///        p(t,y,z).
///
/// Densities are kernel estimates; probes whose estimated density sits below
/// the KDE noise floor are dropped (counted) rather than compared.
struct KernelBoundsReport {
  double t = 0.0;
  double alpha = 0.0;
  double c_fit = 0.0;  // minimal c validating den1 on the used probes
  double sup_density_over_envelope = 0.0;
  double sup_envelope_over_density = 0.0;
  std::size_t den1_used = 0;
  std::size_t den1_dropped = 0;
  bool den2_all_hold = false;
  double den2_min_margin = 0.0;  // min over checks of rhs/lhs (>= 1 iff holds)
  std::size_t den2_checked = 0;
  std::size_t den2_dropped = 0;
};

inline KernelBoundsReport verify_kernel_bounds(
    const SdeProblem& problem, double t, const std::vector<double>& starts,
    const std::vector<double>& offsets, const std::vector<double>& z_probes,
    std::size_t n, double dt, std::uint64_t seed, const SimOptions& opts = {}) {
  problem.validate();
  if (problem.driver != Driver::stable)
    throw ArgumentError("kernel bounds apply to the stable driver");
  if (problem.dim != 1)
    throw ArgumentError("kernel density estimation is one-dimensional");
  if (starts.size() < 2)
    throw ArgumentError("needs at least two start points for the den2 check");
  if (offsets.empty()) throw ArgumentError("needs offset probes");
  if (!(t > 0.0)) throw ArgumentError("needs t > 0");

  const double alpha = problem.alpha;
  const double t_pow = std::pow(t, 1.0 / alpha);
  auto envelope = [&](double r) {
    double far = t / std::pow(std::abs(r), 1.0 + alpha);
    return std::min(1.0 / t_pow, far);
  };

  std::vector<Kde1d> kdes;
  kdes.reserve(starts.size());
  for (std::size_t i = 0; i < starts.size(); ++i) {
    Vec x0(1);
    x0[0] = starts[i];
    PathEnsemble ens = simulate_paths(problem, x0, n, dt, {t},
                                      derive_seed(seed, i), opts);
    std::vector<double> samples;
    samples.reserve(n);
    for (std::size_t p = 0; p < ens.n_paths; ++p)
      if (!ens.failed[p]) samples.push_back(ens.states[0][p]);
    kdes.push_back(Kde1d::fit(std::move(samples)));
  }

  KernelBoundsReport rep;
  rep.t = t;
  rep.alpha = alpha;

  for (std::size_t i = 0; i < starts.size(); ++i) {
    const double floor = kdes[i].noise_floor();
    for (double off : offsets) {
      double p_hat = kdes[i](starts[i] + off);
      if (p_hat < floor) {
        ++rep.den1_dropped;
        continue;
      }
      double g = envelope(off);
      rep.sup_density_over_envelope =
          std::max(rep.sup_density_over_envelope, p_hat / g);
      rep.sup_envelope_over_density =
          std::max(rep.sup_envelope_over_density, g / p_hat);
      ++rep.den1_used;
    }
  }
  if (rep.den1_used == 0)
    throw DegenerateError("every den1 probe fell below the noise floor");
  rep.c_fit = std::max(rep.sup_density_over_envelope,
                       rep.sup_envelope_over_density);

  const double c2 = rep.c_fit * rep.c_fit;
  rep.den2_min_margin = std::numeric_limits<double>::infinity();
  bool all_hold = true;
  for (std::size_t i = 0; i < starts.size(); ++i)
    for (std::size_t j = 0; j < starts.size(); ++j) {
      if (i == j) continue;
      double gap = std::abs(starts[i] - starts[j]);
      double geom = std::pow(2.0, 1.0 + alpha) * c2 *
                    std::pow(1.0 + gap / t_pow, 1.0 + alpha);
      for (double z : z_probes) {
        double pi = kdes[i](z);
        double pj = kdes[j](z);
        if (pi < kdes[i].noise_floor() || pj < kdes[j].noise_floor()) {
          ++rep.den2_dropped;
          continue;
        }
        double margin = geom * pj / pi;
        rep.den2_min_margin = std::min(rep.den2_min_margin, margin);
        if (margin < 1.0) all_hold = false;
        ++rep.den2_checked;
      }
    }
  if (rep.den2_checked == 0)
    throw DegenerateError("every den2 probe fell below the noise floor");
  rep.den2_all_hold = all_hold;
  return rep;
}

}  // namespace hlab
