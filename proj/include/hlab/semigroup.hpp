#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "hlab/errors.hpp"
#include "hlab/sde.hpp"
#include "hlab/stats.hpp"

namespace hlab {

enum class FunctionalKind { plain, log_functional, power };

/// Observable for semigroup estimates.  The flags declare the admissible
/// range (checked sample-by-sample); gradient is optional and only needed by
/// gradient-ratio diagnostics.
struct TestFunction {
  std::string name;
  std::function<double(const Vec&)> eval;
  bool lower_bounded_by_one = false;
  bool nonnegative = false;
  std::function<Vec(const Vec&)> gradient;

  double operator()(const Vec& x) const {
    if (!eval) throw PreconditionError("test function has no evaluator");
    double v = eval(x);
    if (!std::isfinite(v))
      throw EvaluationError("test function returned a non-finite value");
    return v;
  }

  bool has_gradient() const { return static_cast<bool>(gradient); }
};

/// Mean estimate in log scale, for functionals whose natural-scale values
/// overflow (large powers of unbounded observables).
struct LogMeanEstimate {
  double log_mean = 0.0;
  double rel_std_error = 0.0;  // std error of the mean divided by the mean
  std::size_t n = 0;
  double z = z99;

  double lower() const { return log_mean - z * rel_std_error; }
  double upper() const { return log_mean + z * rel_std_error; }
};

namespace detail {

/// log of mean(exp(w_i)) with a relative standard error, via max-shift.
inline LogMeanEstimate log_mean_exp(const std::vector<double>& w) {
  if (w.empty()) throw ArgumentError("log-mean of empty sample");
  double m = -std::numeric_limits<double>::infinity();
  for (double v : w) m = std::max(m, v);
  if (!std::isfinite(m))
    throw DegenerateError("all samples vanish; log-mean undefined");
  RunningStats acc;
  for (double v : w) acc.add(std::exp(v - m));
  LogMeanEstimate e;
  e.n = w.size();
  e.log_mean = m + std::log(acc.mean());
  e.rel_std_error = acc.std_error() / acc.mean();
  return e;
}

inline std::vector<double> terminal_values(const SdeProblem& problem,
                                           const TestFunction& f, double s,
                                           double t, const Vec& x,
                                           std::size_t n, double dt,
                                           std::uint64_t seed,
                                           const SimOptions& base_opts) {
  SimOptions opts = base_opts;
  opts.t_start = s;
  PathEnsemble ens = simulate_paths(problem, x, n, dt, {t}, seed, opts);
  std::vector<double> vals;
  vals.reserve(n);
  for (std::size_t p = 0; p < ens.n_paths; ++p) {
    if (ens.failed[p]) continue;
    vals.push_back(f(ens.state(0, p)));
  }
  if (vals.empty()) throw SimulationError("no usable paths");
  return vals;
}

}  // namespace detail

/// Monte Carlo estimate of the semigroup functional at (s,x):
///   plain:  E f(X_t),  log: E log f(X_t) (requires f >= 1),
///   power:  E f(X_t)^p (requires f >= 0 and p > 1).
inline McEstimate estimate_functional(const SdeProblem& problem,
                                      FunctionalKind kind, double p,
                                      const TestFunction& f, double s,
                                      double t, const Vec& x, std::size_t n,
                                      double dt, std::uint64_t seed,
                                      const SimOptions& opts = {}) {
  if (kind == FunctionalKind::log_functional && !f.lower_bounded_by_one)
    throw ArgumentError(
        "log functional needs a test function declared >= 1");
  if (kind == FunctionalKind::power && !(p > 1.0))
    throw ArgumentError("power functional needs p > 1");
  if (kind == FunctionalKind::power && !f.nonnegative)
    throw ArgumentError("power functional needs a nonnegative test function");

  std::vector<double> vals =
      detail::terminal_values(problem, f, s, t, x, n, dt, seed, opts);
  RunningStats acc;
  for (double v : vals) {
    switch (kind) {
      case FunctionalKind::plain:
        acc.add(v);
        break;
      case FunctionalKind::log_functional:
        if (v < 1.0 - 1e-12)
          throw IntegrandError("sampled value " + std::to_string(v) +
                               " below 1 in a log functional");
        acc.add(std::log(std::max(v, 1.0)));
        break;
      case FunctionalKind::power:
        if (v < 0.0)
          throw IntegrandError("sampled value below 0 in a power functional");
        acc.add(std::pow(v, p));
        break;
    }
  }
  return acc.estimate();
}

/// log E[f(X_t)^p] computed stably in log scale (the natural-scale mean may
/// overflow for large p).  Requires f >= 0.
inline LogMeanEstimate estimate_log_power_mean(const SdeProblem& problem,
                                               double p, const TestFunction& f,
                                               double s, double t, const Vec& x,
                                               std::size_t n, double dt,
                                               std::uint64_t seed,
                                               const SimOptions& opts = {}) {
  if (!(p > 0.0)) throw ArgumentError("power must be positive");
  if (!f.nonnegative)
    throw ArgumentError("power mean needs a nonnegative test function");
  std::vector<double> vals =
      detail::terminal_values(problem, f, s, t, x, n, dt, seed, opts);
  std::vector<double> w;
  w.reserve(vals.size());
  for (double v : vals) {
    if (v < 0.0)
      throw IntegrandError("sampled value below 0 in a power functional");
    w.push_back(v > 0.0 ? p * std::log(v)
                        : -std::numeric_limits<double>::infinity());
  }
  return detail::log_mean_exp(w);
}

// ---------------------------------------------------------------------------
// Gradient-ratio diagnostic

/// |grad P_t f(x)|^2 (common-random-number central differences, one coordinate
/// at a time) against P_t |grad f|^2 (x) from the same ensemble paths.
struct GradientRatioReport {
  double grad_norm_sq = 0.0;
  double grad_norm_sq_se = 0.0;
  McEstimate rhs;                      // P_t |grad f|^2
  std::vector<McEstimate> derivative;  // per-coordinate CRN derivatives
  double ratio = 0.0;
  double ratio_se = 0.0;
  double fd_step = 0.0;
};

inline GradientRatioReport estimate_gradient_ratio(
    const SdeProblem& problem, const TestFunction& f, double t, const Vec& x,
    std::size_t n, double dt, std::uint64_t seed, const SimOptions& opts = {}) {
  if (!f.has_gradient())
    throw ArgumentError("gradient ratio needs an analytic test-function gradient");
  const int d = problem.dim;

  // Center ensemble: sets the step size and evaluates the comparison side.
  SimOptions o = opts;
  o.t_start = 0.0;
  PathEnsemble center = simulate_paths(problem, x, n, dt, {t}, seed, o);
  RunningStats center_acc, rhs_acc;
  for (std::size_t pth = 0; pth < center.n_paths; ++pth) {
    if (center.failed[pth]) continue;
    Vec xt = center.state(0, pth);
    center_acc.add(f(xt));
    Vec g = f.gradient(xt);
    if (!all_finite(g))
      throw EvaluationError("test-function gradient is not finite");
    rhs_acc.add(g.squaredNorm());
  }
  McEstimate rhs = rhs_acc.estimate();
  if (rhs.mean <= rhs.z * rhs.std_error)
    throw DegenerateError(
        "gradient comparison side is indistinguishable from zero");

  double h = std::max(1e-3, std::sqrt(center_acc.std_error()));

  GradientRatioReport rep;
  rep.rhs = rhs;
  rep.fd_step = h;
  double grad_sq = 0.0, grad_sq_se = 0.0;
  for (int k = 0; k < d; ++k) {
    Vec xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    // Same seed on both sides: the difference is computed path by path.
    PathEnsemble plus = simulate_paths(problem, xp, n, dt, {t}, seed, o);
    PathEnsemble minus = simulate_paths(problem, xm, n, dt, {t}, seed, o);
    RunningStats diff;
    for (std::size_t pth = 0; pth < n; ++pth) {
      if (plus.failed[pth] || minus.failed[pth]) continue;
      diff.add((f(plus.state(0, pth)) - f(minus.state(0, pth))) / (2.0 * h));
    }
    McEstimate dk = diff.estimate();
    rep.derivative.push_back(dk);
    grad_sq += dk.mean * dk.mean;
    grad_sq_se += 2.0 * std::abs(dk.mean) * dk.std_error;
  }
  rep.grad_norm_sq = grad_sq;
  rep.grad_norm_sq_se = grad_sq_se;
  rep.ratio = grad_sq / rhs.mean;
  rep.ratio_se = rep.ratio * std::sqrt(
      std::pow(grad_sq_se / std::max(grad_sq, 1e-300), 2) +
      std::pow(rhs.std_error / rhs.mean, 2));
  return rep;
}

// ---------------------------------------------------------------------------
// Mollified-coefficient convergence

/// Shared-noise coupling of dY = sigma_n(t,Y) dW across the mollification
/// schedule, measured against the finest member: reports E|Y^n_t - Y^ref_t|
/// per schedule entry and checks the sequence is nonincreasing within the
/// confidence widths.
struct MollificationReport {
  std::vector<int> schedule;
  int reference_n = 0;
  std::vector<McEstimate> distance;
  bool nonincreasing_within_error = true;
};

inline MollificationReport mollification_convergence(
    const CoefficientField& sigma, const Vec& x0, double t,
    std::vector<int> schedule, std::size_t n_paths, double dt,
    std::uint64_t seed) {
  if (sigma.kind() != FieldKind::matrix_field)
    throw ArgumentError("mollification convergence needs a diffusion field");
  if (schedule.size() < 2)
    throw ArgumentError("mollification schedule needs >= 2 entries");
  std::sort(schedule.begin(), schedule.end());
  for (int m : schedule)
    if (m < 1) throw ArgumentError("mollification indices must be >= 1");

  const int d = sigma.dim();
  const int ref = schedule.back() * 2;
  std::vector<CoefficientField> members;
  for (int m : schedule) members.push_back(mollify(sigma, m));
  CoefficientField reference = mollify(sigma, ref);

  auto nsteps = static_cast<std::size_t>(std::llround(t / dt));
  if (nsteps == 0 || std::abs(static_cast<double>(nsteps) * dt - t) > 1e-9)
    throw ArgumentError("dt must divide the horizon");

  std::vector<RunningStats> dist(schedule.size());
  std::vector<Vec> ys(schedule.size());
  Vec z(d), yref(d);
  for (std::size_t p = 0; p < n_paths; ++p) {
    RngStream rng(seed, p);
    for (auto& y : ys) y = x0;
    yref = x0;
    double tt = 0.0;
    const double sq = std::sqrt(dt);
    for (std::size_t k = 0; k < nsteps; ++k) {
      for (int i = 0; i < d; ++i) z[i] = rng.normal();
      for (std::size_t m = 0; m < ys.size(); ++m)
        ys[m] += members[m].mat_at(tt, ys[m]) * (sq * z);
      yref += reference.mat_at(tt, yref) * (sq * z);
      tt += dt;
    }
    for (std::size_t m = 0; m < ys.size(); ++m)
      dist[m].add((ys[m] - yref).norm());
  }

  MollificationReport rep;
  rep.schedule = schedule;
  rep.reference_n = ref;
  for (auto& acc : dist) rep.distance.push_back(acc.estimate());
  for (std::size_t m = 1; m < rep.distance.size(); ++m) {
    if (rep.distance[m].lower() > rep.distance[m - 1].upper()) {
      rep.nonincreasing_within_error = false;
      throw ConsistencyError(
          "mollified-coefficient distances increased along the schedule "
          "beyond confidence widths");
    }
  }
  return rep;
}

}  // namespace hlab
