#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hlab/errors.hpp"
#include "hlab/fields.hpp"
#include "hlab/grid.hpp"
#include "hlab/pde.hpp"
#include "hlab/sde.hpp"
#include "hlab/stats.hpp"

namespace hlab {

/// Space-time diffeomorphism of the form x + u(t,x) with u sampled on a
/// grid.  Outside the grid box the displacement is evaluated at the clamped
/// point (constant extension), which keeps the map globally defined and
/// continuous; jacobian() likewise reports the table value at the clamped
/// point.
class TransformMap {
 public:
  TransformMap(std::shared_ptr<const GridFunction> displacement,
               double grad_bound)
      : u_(std::move(displacement)), grad_bound_(grad_bound) {
    if (!u_) throw ArgumentError("transform needs a displacement field");
    if (u_->ncomp() != u_->grid().dim)
      throw ArgumentError("displacement must have one component per axis");
    if (!u_->finalized())
      throw PreconditionError("displacement field must be finalized");
  }

  int dim() const { return u_->grid().dim; }
  double grad_bound() const { return grad_bound_; }
  const GridFunction& displacement() const { return *u_; }

  Vec forward(double t, const Vec& x) const {
    Vec y = x + u_->value(t, x);
    if (!all_finite(y)) throw EvaluationError("transform produced non-finite point");
    return y;
  }

  /// Identity plus the interpolated displacement Jacobian.
  Mat jacobian(double t, const Vec& x) const {
    const int d = dim();
    Mat j = u_->jacobian(t, x);
    for (int k = 0; k < d; ++k) j(k, k) += 1.0;
    return j;
  }

  /// Damped Newton inversion of y = x + u(t,x).
  Vec inverse(double t, const Vec& y, double tol = 1e-10,
              int max_iterations = 50) const {
    Vec z = y;
    double scale = std::max(1.0, y.norm());
    Vec r = forward(t, z) - y;
    for (int it = 0; it < max_iterations; ++it) {
      if (r.norm() <= tol * scale) return z;
      Mat j = jacobian(t, z);
      Vec step = j.fullPivLu().solve(r);
      if (!all_finite(step))
        throw InversionError("Newton step is not finite");
      double damp = 1.0;
      for (int cut = 0; cut < 8; ++cut) {
        Vec cand = z - damp * step;
        Vec rc = forward(t, cand) - y;
        if (rc.norm() < r.norm()) {
          z = cand;
          r = rc;
          break;
        }
        damp *= 0.5;
        if (cut == 7) {
          z = cand;
          r = rc;
        }
      }
    }
    if (r.norm() <= tol * scale) return z;
    throw InversionError("map inversion did not converge");
  }

 private:
  std::shared_ptr<const GridFunction> u_;
  double grad_bound_;
};

inline Vec invert_map(const TransformMap& map, double t, const Vec& y,
                      double tol = 1e-10, int max_iterations = 50) {
  return map.inverse(t, y, tol, max_iterations);
}

// ---------------------------------------------------------------------------
// Probe certificates

/// Distortion ratios |Phi(x)-Phi(y)| / |x-y| over probe pairs; the sandwich
/// [1/2, 3/2] is the bi-Lipschitz band guaranteed when the displacement
/// gradient stays below 1/2.
struct BiLipschitzCertificate {
  std::size_t pairs = 0;
  std::size_t violations = 0;
  double min_ratio = 0.0;
  double max_ratio = 0.0;
  bool all_within = false;
};

inline BiLipschitzCertificate check_bi_lipschitz(
    const TransformMap& map, const std::vector<PairProbe>& probes) {
  if (probes.empty()) throw ArgumentError("bi-Lipschitz check needs probes");
  BiLipschitzCertificate cert;
  cert.pairs = probes.size();
  cert.min_ratio = std::numeric_limits<double>::infinity();
  for (const auto& pr : probes) {
    double base = (pr.x - pr.y).norm();
    if (base <= 0.0) throw ArgumentError("probe pairs must have x != y");
    double ratio = (map.forward(pr.t, pr.x) - map.forward(pr.t, pr.y)).norm() / base;
    cert.min_ratio = std::min(cert.min_ratio, ratio);
    cert.max_ratio = std::max(cert.max_ratio, ratio);
    if (ratio < 0.5 || ratio > 1.5) ++cert.violations;
  }
  cert.all_within = cert.violations == 0;
  return cert;
}

// ---------------------------------------------------------------------------
// Drift-removing map (terminal-value system)

struct ZvonkinOptions {
  int max_halvings = 8;
  double grad_target = 0.5;
};

struct ZvonkinTransform {
  TransformMap map;          // Phi_r(x) = x + u(r,x)
  PdeReport pde_report;
  double horizon = 0.0;      // final T0 after halving
  int halvings = 0;

  /// Diffusion of the transformed process:
  /// Sigma(r,y) = (grad Phi_r * sigma(r,.)) at Phi_r^{-1}(y).
  CoefficientField transformed_diffusion(const CoefficientField& sigma) const {
    TransformMap m = map;
    CoefficientField s = sigma;
    return CoefficientField::diffusion(
        sigma.dim(),
        [m, s](double t, const Vec& y) -> Mat {
          Vec z = m.inverse(t, y);
          return m.jacobian(t, z) * s.mat_at(t, z);
        },
        Regularity::bounded_measurable());
  }
};

/// Builds the drift-removing map by solving the terminal-value system on
/// [t0, t0+T0] and halving T0 (up to max_halvings times) until the
/// displacement gradient certificate sup ||grad u|| <= 1/2 holds.
inline ZvonkinTransform build_zvonkin(const CoefficientField& sigma,
                                      const CoefficientField& b,
                                      const SpaceTimeGrid& grid,
                                      const ZvonkinOptions& opts = {}) {
  if (sigma.kind() != FieldKind::matrix_field)
    throw ArgumentError("diffusion must be a matrix field");
  auto a = CoefficientField::diffusion(
      sigma.dim(),
      [sigma](double t, const Vec& x) -> Mat { return sigma.a_at(t, x); },
      sigma.regularity());

  SpaceTimeGrid g = grid;
  double t0 = grid.t0;
  double horizon = grid.t1 - grid.t0;
  double best_grad = std::numeric_limits<double>::infinity();
  for (int halving = 0; halving <= opts.max_halvings; ++halving) {
    g.t1 = t0 + horizon;
    PdeSolution sol = solve_backward_system(a, b, g, true);
    best_grad = std::min(best_grad, sol.report.sup_grad);
    if (sol.report.sup_grad <= opts.grad_target) {
      auto u = std::make_shared<GridFunction>(std::move(sol.u));
      ZvonkinTransform z{TransformMap(u, sol.report.sup_grad), sol.report,
                         horizon, halving};
      return z;
    }
    horizon *= 0.5;
  }
  std::ostringstream os;
  os << "drift-removing map not certified: displacement gradient stayed above "
     << opts.grad_target << " (best " << best_grad << ") after "
     << opts.max_halvings << " horizon halvings";
  throw TransformError(os.str());
}

// ---------------------------------------------------------------------------
// Resolvent-based map and its derived constants

/// Constants certified for the conjugated process, with the grid-measured
/// norms they were assembled from.
struct HarnackConstants {
  double K1 = 0.0;
  double kappa1 = 0.0;
  double delta1 = 0.0;
  double lambda = 0.0;
  // provenance: grid-measured sup norms entering the formulas
  double sup_hess_psi = 0.0;
  double sup_grad_Psi = 0.0;
  double sup_sigma = 0.0;
  double sup_grad_sigma = 0.0;
  double sup_inv_a = 0.0;
  int dim = 0;

  nlohmann::json to_json() const {
    return {{"K1", K1},
            {"kappa1", kappa1},
            {"delta1", delta1},
            {"lambda", lambda},
            {"provenance",
             {{"norm_scope", "grid"},
              {"sup_hess_psi", sup_hess_psi},
              {"sup_grad_Psi", sup_grad_Psi},
              {"sup_sigma", sup_sigma},
              {"sup_grad_sigma", sup_grad_sigma},
              {"sup_inv_a", sup_inv_a},
              {"dim", dim}}}};
  }
};

struct ItoTanakaOptions {
  std::vector<double> lambda_schedule;  // default: powers of 4 up to 4^8
  double grad_target = 0.5;
  double fd_step = 1e-5;  // for the grad-sigma sup norm

  std::vector<double> schedule() const {
    if (!lambda_schedule.empty()) return lambda_schedule;
    std::vector<double> s;
    double l = 1.0;
    for (int k = 0; k <= 8; ++k, l *= 4.0) s.push_back(l);
    return s;
  }
};

struct ItoTanakaTransform {
  TransformMap map;     // Psi_t(x) = x + psi(t,x)
  double lambda = 0.0;
  PdeReport pde_report;
  HarnackConstants constants;
  CoefficientField sigma_hat;
  CoefficientField b_hat;
  std::vector<std::pair<double, double>> schedule_trace;  // (lambda, sup grad)
};

namespace detail {

inline double sup_sigma_on_grid(const CoefficientField& sigma,
                                const SpaceTimeGrid& grid) {
  double s = 0.0;
  for (int j = 0; j < grid.slice_count(); ++j)
    for (std::size_t n = 0; n < grid.node_count(); ++n)
      s = std::max(s, hs_norm(sigma.mat_at(grid.slice_time(j), grid.node_point(n))));
  return s;
}

inline double sup_grad_sigma_on_grid(const CoefficientField& sigma,
                                     const SpaceTimeGrid& grid, double h) {
  double s = 0.0;
  const int d = grid.dim;
  for (int j = 0; j < grid.slice_count(); ++j) {
    double t = grid.slice_time(j);
    for (std::size_t n = 0; n < grid.node_count(); ++n) {
      Vec x = grid.node_point(n);
      double q = 0.0;
      for (int k = 0; k < d; ++k) {
        Vec xp = x, xm = x;
        xp[k] += h;
        xm[k] -= h;
        Mat diff = sigma.mat_at(t, xp) - sigma.mat_at(t, xm);
        q += diff.squaredNorm() / (4.0 * h * h);
      }
      s = std::max(s, std::sqrt(q));
    }
  }
  return s;
}

inline double sup_inv_a_on_grid(const CoefficientField& sigma,
                                const SpaceTimeGrid& grid) {
  double s = 0.0;
  for (int j = 0; j < grid.slice_count(); ++j) {
    double t = grid.slice_time(j);
    for (std::size_t n = 0; n < grid.node_count(); ++n) {
      Vec x = grid.node_point(n);
      Mat a = sigma.a_at(t, x);
      Eigen::FullPivLU<Mat> lu(a);
      if (!lu.isInvertible()) {
        std::ostringstream os;
        os << "diffusion is singular at t=" << t << " while assembling constants";
        throw SingularityError(os.str());
      }
      s = std::max(s, hs_norm(Mat(lu.inverse())));
    }
  }
  return s;
}

}  // namespace detail

/// Builds the resolvent-based map Psi_t(x) = x + psi(t,x), where psi solves
/// d_t psi + L_t psi - lambda psi = -b, bounded via frozen coefficients past
/// t1.  lambda runs through the schedule until the gradient certificate
/// sup ||grad psi|| <= 1/2 holds; the certified constants for the conjugated
/// process are assembled from grid-measured sup norms:
///   K1     = 4 (||grad^2 psi|| ||sigma|| + ||grad Psi|| ||grad sigma||)^2 + 2 lambda
///   kappa1 = (4 sqrt(d) ||a^{-1}||)^{-1/2}
///   delta1 = (2d+1) ||sigma||.
inline ItoTanakaTransform build_ito_tanaka(const CoefficientField& sigma,
                                           const CoefficientField& b,
                                           const SpaceTimeGrid& grid,
                                           const ItoTanakaOptions& opts = {}) {
  if (sigma.kind() != FieldKind::matrix_field)
    throw ArgumentError("diffusion must be a matrix field");
  const int d = sigma.dim();
  auto a = CoefficientField::diffusion(
      d, [sigma](double t, const Vec& x) -> Mat { return sigma.a_at(t, x); },
      sigma.regularity());
  auto minus_b = CoefficientField::drift(
      d, [b](double t, const Vec& x) -> Vec { return -b.vec_at(t, x); },
      b.regularity());

  std::vector<std::pair<double, double>> trace;
  for (double lambda : opts.schedule()) {
    PdeSolution sol = solve_resolvent_system(a, b, minus_b, lambda, grid);
    trace.emplace_back(lambda, sol.report.sup_grad);
    if (sol.report.sup_grad > opts.grad_target) continue;

    auto psi = std::make_shared<GridFunction>(std::move(sol.u));
    TransformMap map(psi, sol.report.sup_grad);

    HarnackConstants c;
    c.lambda = lambda;
    c.dim = d;
    c.sup_hess_psi = sol.report.sup_hessian;
    c.sup_sigma = detail::sup_sigma_on_grid(sigma, grid);
    c.sup_grad_sigma = detail::sup_grad_sigma_on_grid(sigma, grid, opts.fd_step);
    c.sup_inv_a = detail::sup_inv_a_on_grid(sigma, grid);
    // sup ||I + grad psi||, from the nodal tables.
    {
      double s = 0.0;
      const auto& g = psi->grid();
      for (int j = 0; j < g.slice_count(); ++j)
        for (std::size_t n = 0; n < g.node_count(); ++n) {
          Mat jm = psi->jacobian(g.slice_time(j), g.node_point(n));
          for (int k = 0; k < d; ++k) jm(k, k) += 1.0;
          s = std::max(s, hs_norm(jm));
        }
      c.sup_grad_Psi = s;
    }
    double mix = c.sup_hess_psi * c.sup_sigma + c.sup_grad_Psi * c.sup_grad_sigma;
    c.K1 = 4.0 * mix * mix + 2.0 * lambda;
    c.kappa1 = 1.0 / std::sqrt(4.0 * std::sqrt(static_cast<double>(d)) * c.sup_inv_a);
    c.delta1 = (2.0 * d + 1.0) * c.sup_sigma;

    CoefficientField sigma_hat = CoefficientField::diffusion(
        d,
        [map, sigma](double t, const Vec& y) -> Mat {
          Vec z = map.inverse(t, y);
          return map.jacobian(t, z) * sigma.mat_at(t, z);
        },
        Regularity::bounded_measurable());
    TransformMap map_copy = map;
    auto psi_field = psi;
    CoefficientField b_hat = CoefficientField::drift(
        d,
        [map_copy, psi_field, lambda](double t, const Vec& y) -> Vec {
          Vec z = map_copy.inverse(t, y);
          return lambda * psi_field->value(t, z);
        },
        Regularity::bounded_measurable());

    return ItoTanakaTransform{std::move(map), lambda,   sol.report, c,
                              std::move(sigma_hat),     std::move(b_hat),
                              std::move(trace)};
  }

  double best = std::numeric_limits<double>::infinity();
  for (auto& [l, g] : trace) best = std::min(best, g);
  std::ostringstream os;
  os << "resolvent map not certified: displacement gradient stayed above "
     << opts.grad_target << " for every lambda in the schedule (best " << best
     << ")";
  throw TransformError(os.str());
}

// ---------------------------------------------------------------------------
// Empirical (A1)-(A3) certificates for the conjugated coefficients

/// Probe-measured ellipticity, one-sided Lipschitz and drift-bound constants
/// of the conjugated coefficients.
struct EmpiricalConditionConstants {
  double K0 = 0.0;      // from <b(x)-b(y),x-y> + 1/2 ||s(x)-s(y)||^2 <= K |x-y|^2
  double kappa0 = 0.0;  // min over probes of sqrt(lambda_min(a))
  double delta0 = 0.0;  // sup |b_hat|
  std::size_t point_probes = 0;
  std::size_t pair_probes = 0;
};

/// Measures the three constants on probes and checks them against the
/// formula-derived ones within 5% slack (measured upper bounds must not
/// exceed the certified bounds; the measured ellipticity must not fall below
/// the certified floor).
inline EmpiricalConditionConstants verify_A1_A2_A3(
    const CoefficientField& sigma_hat, const CoefficientField& b_hat,
    const std::vector<PointProbe>& point_probes,
    const std::vector<PairProbe>& pair_probes,
    const HarnackConstants& certified) {
  if (point_probes.empty() || pair_probes.empty())
    throw ArgumentError("condition check needs point and pair probes");
  EmpiricalConditionConstants e;
  e.point_probes = point_probes.size();
  e.pair_probes = pair_probes.size();

  double min_eig = std::numeric_limits<double>::infinity();
  double sup_b = 0.0;
  for (const auto& pr : point_probes) {
    min_eig = std::min(min_eig, min_eigenvalue_sym(sigma_hat.a_at(pr.t, pr.x)));
    sup_b = std::max(sup_b, b_hat.vec_at(pr.t, pr.x).norm());
  }
  if (min_eig <= 0.0)
    throw DegenerateError("conjugated diffusion lost ellipticity on a probe");
  e.kappa0 = std::sqrt(min_eig);
  e.delta0 = sup_b;

  double k0 = 0.0;
  for (const auto& pr : pair_probes) {
    double d2 = (pr.x - pr.y).squaredNorm();
    if (d2 <= 0.0) throw ArgumentError("pair probes must have x != y");
    double lhs = (b_hat.vec_at(pr.t, pr.x) - b_hat.vec_at(pr.t, pr.y))
                     .dot(pr.x - pr.y) +
                 0.5 * (sigma_hat.mat_at(pr.t, pr.x) - sigma_hat.mat_at(pr.t, pr.y))
                           .squaredNorm();
    k0 = std::max(k0, lhs / d2);
  }
  e.K0 = std::max(0.0, k0);

  const double slack = 1.05;
  std::ostringstream os;
  if (e.K0 > slack * certified.K1) {
    os << "measured one-sided Lipschitz constant " << e.K0
       << " exceeds certified " << certified.K1;
    throw ConsistencyError(os.str());
  }
  if (e.delta0 > slack * certified.delta1) {
    os << "measured drift bound " << e.delta0 << " exceeds certified "
       << certified.delta1;
    throw ConsistencyError(os.str());
  }
  if (e.kappa0 < certified.kappa1 / slack) {
    os << "measured ellipticity " << e.kappa0 << " fell below certified "
       << certified.kappa1;
    throw ConsistencyError(os.str());
  }
  return e;
}

// ---------------------------------------------------------------------------
// Push-forward consistency

/// Two-sample KS comparison, coordinate by coordinate, between Psi_t(X_t)
/// (original process mapped forward) and the conjugated process started at
/// Psi_0(x0), both sampled with independent seeds.
struct PushforwardReport {
  std::vector<double> ks;
  double worst = 0.0;
  double critical = 0.0;  // 1% two-sample critical value
  std::size_t n = 0;
  bool within = false;
};

inline PushforwardReport pushforward_consistency(
    const SdeProblem& original, const ItoTanakaTransform& transform, const Vec& x0,
    double t, std::size_t n_paths, double dt, std::uint64_t seed) {
  original.validate();
  const int d = original.dim;

  PathEnsemble direct =
      simulate_paths(original, x0, n_paths, dt, {t}, derive_seed(seed, 1));

  SdeProblem conjugated{d, transform.b_hat, transform.sigma_hat,
                        Driver::brownian, 2.0, original.horizon};
  Vec y0 = transform.map.forward(0.0, x0);
  PathEnsemble conj =
      simulate_paths(conjugated, y0, n_paths, dt, {t}, derive_seed(seed, 2));

  PushforwardReport rep;
  rep.n = n_paths;
  rep.ks.resize(d);
  std::vector<double> mapped(n_paths), direct_coord(n_paths);
  for (int k = 0; k < d; ++k) {
    for (std::size_t p = 0; p < n_paths; ++p) {
      Vec xp = direct.state(0, p);
      mapped[p] = transform.map.forward(t, xp)[k];
      direct_coord[p] = conj.states[0][p * static_cast<std::size_t>(d) + k];
    }
    std::sort(mapped.begin(), mapped.end());
    std::sort(direct_coord.begin(), direct_coord.end());
    rep.ks[k] = ks_distance_sorted(mapped, direct_coord);
    rep.worst = std::max(rep.worst, rep.ks[k]);
  }
  rep.critical = ks_critical_value(n_paths, n_paths, 0.01);
  rep.within = rep.worst < rep.critical;
  return rep;
}

}  // namespace hlab
