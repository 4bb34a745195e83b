#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "hlab/errors.hpp"
#include "hlab/fields.hpp"
#include "hlab/linalg.hpp"
#include "hlab/rng.hpp"
#include "hlab/stats.hpp"

namespace hlab {

enum class Driver { brownian, stable };

/// SDE dX = b(t,X)dt + sigma(t,X)dW (Brownian) or dX = b(t,X)dt + dZ with Z
/// an isotropic alpha-stable process normalized so the characteristic
/// function of Z_t is exp(-t |xi|^alpha).  A missing diffusion field means
/// the identity matrix.
struct SdeProblem {
  int dim = 1;
  CoefficientField drift;
  std::optional<CoefficientField> diffusion;
  Driver driver = Driver::brownian;
  double alpha = 2.0;
  double horizon = 1.0;

  void validate() const {
    if (dim < 1 || dim > max_dim) throw ArgumentError("dimension must be 1..3");
    if (drift.dim() != dim) throw ArgumentError("drift dimension mismatch");
    if (diffusion) {
      if (diffusion->kind() != FieldKind::matrix_field)
        throw ArgumentError("diffusion must be a matrix field");
      if (diffusion->dim() != dim)
        throw ArgumentError("diffusion dimension mismatch");
    }
    if (driver == Driver::stable) {
      if (diffusion)
        throw ArgumentError("stable driver requires identity diffusion");
      if (!(alpha >= 1.0 && alpha <= 2.0))
        throw ArgumentError("stable index must lie in [1,2]");
    }
    if (!(horizon > 0.0)) throw ArgumentError("horizon must be positive");
  }
};

namespace detail {

inline constexpr double sde_pi = 3.14159265358979323846;

// Chambers-Mallows-Stuck sampler for the symmetric alpha-stable law with
// characteristic function exp(-|xi|^alpha).  The single formula covers the
// whole range: alpha = 2 reduces to 2*sin(U)*sqrt(E) ~ N(0,2) and alpha = 1
// to tan(U) (standard Cauchy).
inline double cms_standard_stable(double alpha, RngStream& rng) {
  double u = sde_pi * (rng.uniform01() - 0.5);
  double e = rng.exponential();
  if (alpha == 2.0) return 2.0 * std::sin(u) * std::sqrt(e);
  double inv_alpha = 1.0 / alpha;
  double x = std::sin(alpha * u) / std::pow(std::cos(u), inv_alpha);
  double tail = (1.0 - alpha) * inv_alpha;
  if (tail != 0.0)
    x *= std::pow(std::cos((1.0 - alpha) * u) / e, tail);
  return x;
}

// Uniform random rotation applied in place; the isotropic driver for d > 1
// is the coordinatewise sampler composed with this rotation.
inline void apply_random_rotation(Vec& z, RngStream& rng) {
  const int d = static_cast<int>(z.size());
  if (d == 1) return;
  if (d == 2) {
    double a = 2.0 * sde_pi * rng.uniform01();
    double c = std::cos(a), s = std::sin(a);
    double z0 = z[0], z1 = z[1];
    z[0] = c * z0 - s * z1;
    z[1] = s * z0 + c * z1;
    return;
  }
  // Shoemake's uniform quaternion.
  double u1 = rng.uniform01(), u2 = rng.uniform01(), u3 = rng.uniform01();
  double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
  double t2 = 2.0 * sde_pi * u2, t3 = 2.0 * sde_pi * u3;
  double qx = a * std::sin(t2), qy = a * std::cos(t2);
  double qz = b * std::sin(t3), qw = b * std::cos(t3);
  Mat r(3, 3);
  r(0, 0) = 1 - 2 * (qy * qy + qz * qz);
  r(0, 1) = 2 * (qx * qy - qz * qw);
  r(0, 2) = 2 * (qx * qz + qy * qw);
  r(1, 0) = 2 * (qx * qy + qz * qw);
  r(1, 1) = 1 - 2 * (qx * qx + qz * qz);
  r(1, 2) = 2 * (qy * qz - qx * qw);
  r(2, 0) = 2 * (qx * qz - qy * qw);
  r(2, 1) = 2 * (qy * qz + qx * qw);
  r(2, 2) = 1 - 2 * (qx * qx + qy * qy);
  z = r * z;
}

}  // namespace detail

/// Increment of the isotropic alpha-stable driver over a step of length dt,
/// i.e. dt^{1/alpha} times a standard isotropic stable vector.
inline Vec sample_stable_increment(double alpha, double dt, int dim,
                                   RngStream& rng) {
  if (!(alpha >= 1.0 && alpha <= 2.0))
    throw ArgumentError("stable index must lie in [1,2]");
  if (!(dt > 0.0)) throw ArgumentError("step size must be positive");
  Vec z(dim);
  for (int i = 0; i < dim; ++i) z[i] = detail::cms_standard_stable(alpha, rng);
  detail::apply_random_rotation(z, rng);
  return std::pow(dt, 1.0 / alpha) * z;
}

/// Euler-Maruyama ensemble at the requested save times.
///
/// Path i draws from the dedicated stream (seed, i), so the ensemble is
/// bit-reproducible for a given seed regardless of the worker count.  A path
/// whose state leaves |x|_inf <= blowup_threshold (or whose coefficients stop
/// evaluating finitely) is frozen at its last good state and marked failed.
struct PathEnsemble {
  int dim = 1;
  std::size_t n_paths = 0;
  double dt = 0.0;
  double t_start = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> save_times;
  std::vector<std::vector<double>> states;  // [save index][path*dim + k]
  std::vector<std::uint8_t> failed;

  double failure_fraction() const {
    if (failed.empty()) return 0.0;
    std::size_t bad = 0;
    for (auto f : failed) bad += f;
    return static_cast<double>(bad) / static_cast<double>(failed.size());
  }

  Vec state(std::size_t save_idx, std::size_t path) const {
    Vec x(dim);
    for (int k = 0; k < dim; ++k)
      x[k] = states[save_idx][path * static_cast<std::size_t>(dim) + k];
    return x;
  }

  void save_csv(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << "path,time";
    for (int k = 0; k < dim; ++k) os << ",x" << (k + 1);
    os << ",failed\n";
    os.precision(17);
    for (std::size_t p = 0; p < n_paths; ++p)
      for (std::size_t s = 0; s < save_times.size(); ++s) {
        os << p << "," << save_times[s];
        for (int k = 0; k < dim; ++k)
          os << "," << states[s][p * static_cast<std::size_t>(dim) + k];
        os << "," << static_cast<int>(failed[p]) << "\n";
      }
    if (!os) throw IoError("write failed: " + path);
  }
};

struct SimOptions {
  double t_start = 0.0;
  int threads = 1;
  double blowup_threshold = 1e6;
  double max_failure_fraction = 0.01;
};

inline PathEnsemble simulate_paths(const SdeProblem& problem, const Vec& x0,
                                   std::size_t n_paths, double dt,
                                   std::vector<double> save_times,
                                   std::uint64_t seed,
                                   const SimOptions& opts = {}) {
  problem.validate();
  if (x0.size() != problem.dim) throw ArgumentError("initial point dimension mismatch");
  if (n_paths == 0) throw ArgumentError("need at least one path");
  if (!(dt > 0.0)) throw ArgumentError("step size must be positive");
  if (save_times.empty()) throw ArgumentError("need at least one save time");
  std::sort(save_times.begin(), save_times.end());
  if (save_times.front() < opts.t_start - 1e-12 ||
      save_times.back() > problem.horizon + 1e-9)
    throw ArgumentError("save times must lie in [t_start, horizon]");

  // Steps between consecutive save times; dt must divide the gaps.
  std::vector<std::size_t> steps_between;
  double prev = opts.t_start;
  for (double s : save_times) {
    double gap = s - prev;
    auto k = static_cast<std::size_t>(std::llround(gap / dt));
    if (std::abs(static_cast<double>(k) * dt - gap) > 1e-9 * std::max(1.0, gap))
      throw ArgumentError("dt must divide the gaps between save times");
    steps_between.push_back(k);
    prev = s;
  }

  PathEnsemble out;
  out.dim = problem.dim;
  out.n_paths = n_paths;
  out.dt = dt;
  out.t_start = opts.t_start;
  out.seed = seed;
  out.save_times = save_times;
  out.states.assign(save_times.size(),
                    std::vector<double>(n_paths * static_cast<std::size_t>(problem.dim)));
  out.failed.assign(n_paths, 0);

  const int d = problem.dim;
  const bool identity_diffusion = !problem.diffusion.has_value();
  const double sqrt_dt = std::sqrt(dt);

  auto run_range = [&](std::size_t lo, std::size_t hi) {
    Vec x(d), xn(d), z(d);
    for (std::size_t p = lo; p < hi; ++p) {
      RngStream rng(seed, p);
      x = x0;
      bool dead = false;
      double t = opts.t_start;
      for (std::size_t s = 0; s < save_times.size(); ++s) {
        for (std::size_t k = 0; k < steps_between[s] && !dead; ++k) {
          try {
            Vec b = problem.drift.vec_at(t, x);
            if (problem.driver == Driver::brownian) {
              for (int i = 0; i < d; ++i) z[i] = rng.normal();
              if (identity_diffusion)
                xn = x + dt * b + sqrt_dt * z;
              else
                xn = x + dt * b +
                     problem.diffusion->mat_at(t, x) * (sqrt_dt * z);
            } else {
              xn = x + dt * b +
                   sample_stable_increment(problem.alpha, dt, d, rng);
            }
          } catch (const EvaluationError&) {
            dead = true;
            break;
          }
          if (!all_finite(xn) ||
              xn.lpNorm<Eigen::Infinity>() > opts.blowup_threshold) {
            dead = true;
            break;
          }
          x = xn;
          t += dt;
        }
        if (dead) out.failed[p] = 1;
        for (int i = 0; i < d; ++i)
          out.states[s][p * static_cast<std::size_t>(d) + i] = x[i];
      }
    }
  };

  int workers = std::max(1, opts.threads);
  if (workers == 1 || n_paths < 2) {
    run_range(0, n_paths);
  } else {
    std::vector<std::thread> pool;
    std::size_t chunk = (n_paths + workers - 1) / static_cast<std::size_t>(workers);
    for (int w = 0; w < workers; ++w) {
      std::size_t lo = static_cast<std::size_t>(w) * chunk;
      std::size_t hi = std::min(n_paths, lo + chunk);
      if (lo >= hi) break;
      pool.emplace_back(run_range, lo, hi);
    }
    for (auto& th : pool) th.join();
  }

  if (out.failure_fraction() > opts.max_failure_fraction)
    throw SimulationError("too many paths failed (fraction " +
                          std::to_string(out.failure_fraction()) + ")");
  return out;
}

// ---------------------------------------------------------------------------
// Reflection-style coupling with a deterministic attraction schedule.

/// Statistics of the coupled pair (X,Y) driven by shared noise, where Y gets
/// the extra drift xi(t) (X-Y)/|X-Y| with xi(t) = |x-y| e^{-Kt} / S,
/// S = int_0^T e^{-2Ks} ds.  Once |X-Y| falls below eps the pair is merged.
/// girsanov accumulates exp(-int u.dW - 1/2 int |u|^2 ds) up to the coupling
/// time; its ensemble mean is 1 in exact arithmetic.
struct CouplingStats {
  std::size_t n_pairs = 0;
  double eps = 0.0;
  std::vector<double> tau;  // +infinity when the pair never coupled
  std::vector<double> girsanov_log_density;
  double success_fraction = 0.0;
  McEstimate girsanov_mean;
  std::size_t drift_condition_violations = 0;  // one-sided Lipschitz monitor
  bool drift_condition_warning = false;
};

inline CouplingStats simulate_coupled_pair(const SdeProblem& problem,
                                           const Vec& x, const Vec& y,
                                           double one_sided_lipschitz,
                                           double horizon, std::size_t n_pairs,
                                           double dt, std::uint64_t seed,
                                           double eps_factor = 1e-4) {
  problem.validate();
  if (problem.driver != Driver::brownian || problem.diffusion)
    throw ArgumentError("coupling requires the additive Brownian driver");
  if (x.size() != problem.dim || y.size() != problem.dim)
    throw ArgumentError("coupling endpoints have wrong dimension");
  if (!(horizon > 0.0) || !(dt > 0.0))
    throw ArgumentError("coupling needs positive horizon and step");
  if (n_pairs == 0) throw ArgumentError("need at least one pair");

  const int d = problem.dim;
  const double K = one_sided_lipschitz;
  const double dist0 = (x - y).norm();
  const double sqrt_dt = std::sqrt(dt);

  CouplingStats st;
  st.n_pairs = n_pairs;
  st.eps = eps_factor * dist0;
  st.tau.resize(n_pairs);
  st.girsanov_log_density.resize(n_pairs);

  // S = int_0^T e^{-2Ks} ds, with the K -> 0 limit T.
  double S = std::abs(K) < 1e-14 ? horizon : -std::expm1(-2.0 * K * horizon) / (2.0 * K);

  RunningStats girsanov;
  std::size_t coupled = 0, monitor_hits = 0;
  auto nsteps = static_cast<std::size_t>(std::llround(horizon / dt));
  if (std::abs(static_cast<double>(nsteps) * dt - horizon) > 1e-9)
    throw ArgumentError("dt must divide the coupling horizon");

  Vec xs(d), ys(d), z(d), u(d);
  for (std::size_t p = 0; p < n_pairs; ++p) {
    RngStream rng(seed, p);
    xs = x;
    ys = y;
    double log_density = 0.0;
    double tau = std::numeric_limits<double>::infinity();
    bool merged = dist0 <= st.eps;
    if (merged) tau = 0.0;
    double t = 0.0;
    for (std::size_t k = 0; k < nsteps; ++k) {
      for (int i = 0; i < d; ++i) z[i] = rng.normal();
      Vec bx = problem.drift.vec_at(t, xs);
      if (!merged) {
        Vec by = problem.drift.vec_at(t, ys);
        Vec diff = xs - ys;
        double dist = diff.norm();
        // One-sided Lipschitz monitor for the supplied constant K.
        if (diff.dot(bx - by) > K * dist * dist + 1e-12 * (1.0 + dist * dist))
          ++monitor_hits;
        double xi = dist0 * std::exp(-K * t) / S;
        u = (xi / dist) * diff;
        log_density -= u.dot(sqrt_dt * z) + 0.5 * u.squaredNorm() * dt;
        ys += dt * (by + u) + sqrt_dt * z;
      }
      xs += dt * bx + sqrt_dt * z;
      t += dt;
      if (!merged && (xs - ys).norm() <= st.eps) {
        merged = true;
        tau = t;
      }
    }
    st.tau[p] = tau;
    st.girsanov_log_density[p] = log_density;
    girsanov.add(std::exp(log_density));
    if (merged) ++coupled;
  }

  st.success_fraction = static_cast<double>(coupled) / static_cast<double>(n_pairs);
  st.girsanov_mean = girsanov.estimate();
  st.drift_condition_violations = monitor_hits;
  st.drift_condition_warning = monitor_hits > 0;
  return st;
}

}  // namespace hlab
