#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "hlab/errors.hpp"
#include "hlab/harnack.hpp"
#include "hlab/semigroup.hpp"

namespace hlab {

/// Options for the log-endpoint interpolation identity
///
///   T_{s,t} log f (x) - log T_{s,t} f (x)
///     + int_s^t T_{s,r} [ Gamma(r)(g_r, g_r) / g_r^2 ] (x) dr  =  0,
///   g_r = T_{r,t} f,
///
/// checked by an outer ensemble from (s,x) and either a closed-form inner
/// semigroup (value/gradient callbacks) or a nested inner ensemble per outer
/// sample and quadrature node.
struct InterpolationOptions {
  int nodes = 5;             // trapezoid nodes on [s,t], endpoints included
  std::size_t n_outer = 20000;
  std::size_t n_inner = 800;  // nested mode only
  double inner_fd_step = 1e-3;
  double dt = 1e-2;           // outer step; also the nested inner step
  double max_rel_inner_se = 0.2;
  double max_warning_fraction = 0.05;
  std::function<double(double, const Vec&)> inner_value;  // optional oracle
  std::function<Vec(double, const Vec&)> inner_gradient;

  bool exact_inner() const {
    return static_cast<bool>(inner_value) && static_cast<bool>(inner_gradient);
  }
};

struct InterpolationReport {
  double mean_log = 0.0;    // E log f(X_t)
  double log_mean = 0.0;    // log E f(X_t)
  double integral = 0.0;    // trapezoid value of the correction integral
  double residual = 0.0;
  double residual_se = 0.0;
  std::vector<double> nodes;
  std::vector<double> node_means;  // E G(r_k, X_{r_k}) per node
  std::size_t inner_evaluations = 0;
  std::size_t inner_warnings = 0;
  Verdict verdict = Verdict::inconclusive;
};

inline InterpolationReport verify_interpolation_identity(
    const SdeProblem& problem, const TestFunction& f, double s, double t,
    const Vec& x, const InterpolationOptions& options, std::uint64_t seed) {
  problem.validate();
  if (problem.driver != Driver::brownian)
    throw ArgumentError("interpolation identity needs the Brownian driver");
  if (!f.lower_bounded_by_one)
    throw ArgumentError("needs a test function declared >= 1");
  if (!(t > s)) throw ArgumentError("needs t > s");
  if (options.nodes < 2) throw ArgumentError("needs at least two nodes");
  const bool exact = options.exact_inner();
  if (!exact && options.n_inner < 2)
    throw ArgumentError("nested mode needs an inner sample size");

  const int d = problem.dim;
  const int K = options.nodes;
  const double gap = (t - s) / (K - 1);
  std::vector<double> nodes(K);
  for (int k = 0; k < K; ++k) nodes[k] = s + k * gap;
  nodes.back() = t;

  SimOptions so;
  so.t_start = s;
  PathEnsemble outer = simulate_paths(problem, x, options.n_outer, options.dt,
                                      nodes, derive_seed(seed, 0xA11), so);

  std::size_t inner_evals = 0, inner_warnings = 0;

  // g_r(z) and grad g_r(z), by oracle or nested ensemble with CRN gradient.
  auto inner = [&](double r, const Vec& z, std::uint64_t tag, double& g,
                   Vec& grad) {
    if (exact) {
      g = options.inner_value(r, z);
      grad = options.inner_gradient(r, z);
      return;
    }
    std::uint64_t is = derive_seed(seed, tag);
    McEstimate ge = estimate_functional(problem, FunctionalKind::plain, 0.0, f,
                                        r, t, z, options.n_inner, options.dt,
                                        is);
    g = ge.mean;
    ++inner_evals;
    if (ge.std_error > options.max_rel_inner_se * std::abs(ge.mean))
      ++inner_warnings;
    grad.resize(d);
    for (int i = 0; i < d; ++i) {
      Vec zp = z, zm = z;
      zp[i] += options.inner_fd_step;
      zm[i] -= options.inner_fd_step;
      McEstimate gp = estimate_functional(problem, FunctionalKind::plain, 0.0,
                                          f, r, t, zp, options.n_inner,
                                          options.dt, is);
      McEstimate gm = estimate_functional(problem, FunctionalKind::plain, 0.0,
                                          f, r, t, zm, options.n_inner,
                                          options.dt, is);
      grad[i] = (gp.mean - gm.mean) / (2.0 * options.inner_fd_step);
    }
  };

  auto correction = [&](double r, const Vec& z, std::uint64_t tag) {
    // r = t: g_t = f, with the analytic gradient when available.
    double g;
    Vec grad(d);
    if (std::abs(r - t) < 1e-14) {
      g = f(z);
      if (f.has_gradient())
        grad = f.gradient(z);
      else {
        for (int i = 0; i < d; ++i) {
          Vec zp = z, zm = z;
          zp[i] += options.inner_fd_step;
          zm[i] -= options.inner_fd_step;
          grad[i] = (f(zp) - f(zm)) / (2.0 * options.inner_fd_step);
        }
      }
    } else {
      inner(r, z, tag, g, grad);
    }
    if (!(g > 0.0))
      throw DegenerateError("inner semigroup estimate is not positive");
    Vec sg = problem.diffusion
                 ? Vec(problem.diffusion->mat_at(r, z).transpose() * grad)
                 : grad;
    return 0.5 * sg.squaredNorm() / (g * g);
  };

  std::vector<double> weights(K, gap);
  weights.front() = 0.5 * gap;
  weights.back() = 0.5 * gap;

  RunningStats s_acc, f_acc;
  std::vector<RunningStats> node_acc(K);
  for (std::size_t p = 0; p < outer.n_paths; ++p) {
    if (outer.failed[p]) continue;
    double integral_term = 0.0;
    for (int k = 0; k < K; ++k) {
      Vec z = outer.state(k, p);
      double gval = correction(nodes[k], z, (static_cast<std::uint64_t>(p) << 8) ^
                                                static_cast<std::uint64_t>(k));
      node_acc[k].add(gval);
      integral_term += weights[k] * gval;
    }
    double fv = f(outer.state(K - 1, p));
    if (fv < 1.0 - 1e-12)
      throw IntegrandError("sampled value below 1 in the identity check");
    s_acc.add(std::log(std::max(fv, 1.0)) + integral_term);
    f_acc.add(fv);
  }

  InterpolationReport rep;
  rep.nodes = nodes;
  for (int k = 0; k < K; ++k) rep.node_means.push_back(node_acc[k].mean());
  rep.mean_log = s_acc.mean() - [&] {
    double acc = 0.0;
    for (int k = 0; k < K; ++k) acc += weights[k] * node_acc[k].mean();
    return acc;
  }();
  rep.integral = 0.0;
  for (int k = 0; k < K; ++k) rep.integral += weights[k] * node_acc[k].mean();
  rep.log_mean = std::log(f_acc.mean());
  rep.residual = s_acc.mean() - rep.log_mean;
  double rel = f_acc.std_error() / f_acc.mean();
  rep.residual_se = std::sqrt(s_acc.std_error() * s_acc.std_error() + rel * rel);
  rep.inner_evaluations = inner_evals;
  rep.inner_warnings = inner_warnings;

  if (!exact && inner_evals > 0 &&
      static_cast<double>(inner_warnings) >
          options.max_warning_fraction * static_cast<double>(inner_evals)) {
    rep.verdict = Verdict::inconclusive;
    return rep;
  }
  rep.verdict = std::abs(rep.residual) <= 3.0 * rep.residual_se
                    ? Verdict::holds
                    : Verdict::violated;
  return rep;
}

}  // namespace hlab
