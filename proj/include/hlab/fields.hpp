#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hlab/errors.hpp"
#include "hlab/linalg.hpp"
#include "hlab/quadrature.hpp"
#include "hlab/rng.hpp"

namespace hlab {

enum class FieldKind { vector_field, matrix_field };

/// Declared regularity class of a coefficient field.  The library never
/// infers regularity; checks below estimate seminorms on probe sets.
struct Regularity {
  enum class Tag { smooth, hoelder, lps, bounded_measurable };

  Tag tag = Tag::smooth;
  double theta = 0.0;  // Hoelder exponent, in (0,1]
  double p = 0.0;      // space integrability
  double q = 0.0;      // time integrability

  static Regularity smooth() { return {}; }

  static Regularity hoelder(double theta) {
    if (!(theta > 0.0 && theta <= 1.0))
      throw ArgumentError("Hoelder exponent must lie in (0,1]");
    Regularity r;
    r.tag = Tag::hoelder;
    r.theta = theta;
    return r;
  }

  static Regularity lps(double p, double q) {
    if (!(p > 0.0 && q > 0.0))
      throw ArgumentError("integrability orders must be positive");
    Regularity r;
    r.tag = Tag::lps;
    r.p = p;
    r.q = q;
    return r;
  }

  static Regularity bounded_measurable() {
    Regularity r;
    r.tag = Tag::bounded_measurable;
    return r;
  }
};

/// Subcritical integrability condition d/p + 2/q < 1 for a drift declared in
/// a space-time Lebesgue class.
inline bool lps_subcritical(int dim, const Regularity& reg) {
  if (reg.tag != Regularity::Tag::lps) return false;
  return static_cast<double>(dim) / reg.p + 2.0 / reg.q < 1.0;
}

/// Time-dependent coefficient field on [0,T] x R^d: either a drift
/// (vector-valued) or a diffusion matrix.  Evaluation is finiteness-checked.
class CoefficientField {
 public:
  using VecFn = std::function<Vec(double, const Vec&)>;
  using MatFn = std::function<Mat(double, const Vec&)>;

  static CoefficientField drift(int dim, VecFn f, Regularity reg = {},
                                std::optional<double> sup_norm = {},
                                std::optional<double> seminorm = {}) {
    CoefficientField c;
    c.dim_ = check_dim(dim);
    c.kind_ = FieldKind::vector_field;
    c.vec_fn_ = std::move(f);
    c.reg_ = reg;
    c.sup_norm_ = sup_norm;
    c.seminorm_ = seminorm;
    return c;
  }

  static CoefficientField diffusion(int dim, MatFn f, Regularity reg = {},
                                    std::optional<double> sup_norm = {},
                                    std::optional<double> seminorm = {}) {
    CoefficientField c;
    c.dim_ = check_dim(dim);
    c.kind_ = FieldKind::matrix_field;
    c.mat_fn_ = std::move(f);
    c.reg_ = reg;
    c.sup_norm_ = sup_norm;
    c.seminorm_ = seminorm;
    return c;
  }

  int dim() const { return dim_; }
  FieldKind kind() const { return kind_; }
  const Regularity& regularity() const { return reg_; }
  std::optional<double> declared_sup_norm() const { return sup_norm_; }
  std::optional<double> declared_seminorm() const { return seminorm_; }

  Vec vec_at(double t, const Vec& x) const {
    require_kind(FieldKind::vector_field, "vector");
    if (!vec_fn_) throw PreconditionError("field has no evaluator");
    Vec v = vec_fn_(t, x);
    if (v.size() != dim_ || !all_finite(v))
      throw EvaluationError(bad_value_message(t, x));
    return v;
  }

  Mat mat_at(double t, const Vec& x) const {
    require_kind(FieldKind::matrix_field, "matrix");
    if (!mat_fn_) throw PreconditionError("field has no evaluator");
    Mat m = mat_fn_(t, x);
    if (m.rows() != dim_ || m.cols() != dim_ || !all_finite(m))
      throw EvaluationError(bad_value_message(t, x));
    return m;
  }

  /// sigma sigma^T at (t,x); only for matrix fields.
  Mat a_at(double t, const Vec& x) const {
    Mat s = mat_at(t, x);
    return s * s.transpose();
  }

 private:
  static int check_dim(int dim) {
    if (dim < 1 || dim > max_dim)
      throw ArgumentError("field dimension must be 1, 2 or 3");
    return dim;
  }

  void require_kind(FieldKind k, const char* what) const {
    if (kind_ != k)
      throw ArgumentError(std::string("field is not ") + what + "-valued");
  }

  std::string bad_value_message(double t, const Vec& x) const {
    std::ostringstream os;
    os << "field returned a non-finite or mis-sized value at t=" << t << ", x=(";
    for (int i = 0; i < dim_; ++i) os << (i ? "," : "") << x[i];
    os << ")";
    return os.str();
  }

  int dim_ = 1;
  FieldKind kind_ = FieldKind::vector_field;
  VecFn vec_fn_;
  MatFn mat_fn_;
  Regularity reg_;
  std::optional<double> sup_norm_;
  std::optional<double> seminorm_;
};

// ---------------------------------------------------------------------------
// Probes

/// (t, x, direction): directions are unit vectors for ellipticity checks.
struct DirectionProbe {
  double t;
  Vec x;
  Vec direction;
};

/// (t, x, y): spatial point pair at a common time.
struct PairProbe {
  double t;
  Vec x;
  Vec y;
};

/// (t, x).
struct PointProbe {
  double t;
  Vec x;
};

/// Directions on the unit circle with angular spacing <= resolution (d = 2).
/// Basis directions are always included so the componentwise surrogate bound
/// below is certified on the same probe set.
inline std::vector<DirectionProbe> circle_direction_probes(
    double resolution, double t = 0.0, const Vec& x = Vec::Zero(2)) {
  if (!(resolution > 0.0))
    throw ArgumentError("angular resolution must be positive");
  const double two_pi = 6.283185307179586;
  int count = static_cast<int>(std::ceil(two_pi / resolution));
  std::vector<DirectionProbe> probes;
  probes.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    double a = two_pi * static_cast<double>(k) / static_cast<double>(count);
    Vec dir(2);
    dir[0] = std::cos(a);
    dir[1] = std::sin(a);
    probes.push_back({t, x, dir});
  }
  return probes;
}

/// Random unit directions at random points in [-box,box]^d.  Basis directions
/// at the origin are prepended.
inline std::vector<DirectionProbe> random_direction_probes(
    int dim, std::size_t count, std::uint64_t seed, double box = 1.0,
    double t_max = 0.0) {
  std::vector<DirectionProbe> probes;
  probes.reserve(count + static_cast<std::size_t>(dim));
  for (int i = 0; i < dim; ++i) {
    Vec e = Vec::Zero(dim);
    e[i] = 1.0;
    probes.push_back({0.0, Vec::Zero(dim), e});
  }
  RngStream rng(seed, 0);
  for (std::size_t k = 0; k < count; ++k) {
    Vec x(dim), dir(dim);
    double norm2 = 0.0;
    do {
      for (int i = 0; i < dim; ++i) dir[i] = rng.normal();
      norm2 = dir.squaredNorm();
    } while (norm2 < 1e-12);
    dir /= std::sqrt(norm2);
    for (int i = 0; i < dim; ++i) x[i] = box * (2.0 * rng.uniform01() - 1.0);
    double t = t_max > 0.0 ? t_max * rng.uniform01() : 0.0;
    probes.push_back({t, x, dir});
  }
  return probes;
}

inline std::vector<PairProbe> random_pair_probes(int dim, std::size_t count,
                                                 double box,
                                                 std::uint64_t seed,
                                                 double t_max = 0.0) {
  std::vector<PairProbe> probes;
  probes.reserve(count);
  RngStream rng(seed, 0);
  while (probes.size() < count) {
    Vec x(dim), y(dim);
    for (int i = 0; i < dim; ++i) x[i] = box * (2.0 * rng.uniform01() - 1.0);
    for (int i = 0; i < dim; ++i) y[i] = box * (2.0 * rng.uniform01() - 1.0);
    if ((x - y).norm() < 1e-12) continue;
    double t = t_max > 0.0 ? t_max * rng.uniform01() : 0.0;
    probes.push_back({t, x, y});
  }
  return probes;
}

// ---------------------------------------------------------------------------
// Non-degeneracy

/// Result of probing the quadratic form y |-> |sigma(t,x)^T y|^2.
///
/// delta / kappa_upper bound the true quadratic form from below / above over
/// the probe set.  surrogate_delta / surrogate_kappa do the same for the
/// componentwise surrogate sum_i y_i^2 |row_i(sigma)|^2, which dominates the
/// true form probe-by-probe whenever basis directions are present, so a
/// certified delta always certifies surrogate_delta too (not conversely).
struct EllipticityWitness {
  double delta = 0.0;
  double kappa_upper = 0.0;
  double surrogate_delta = 0.0;
  double surrogate_kappa = 0.0;
  bool violated = false;
  std::size_t probe_count = 0;
  double worst_t = 0.0;
  Vec worst_x;
  Vec worst_direction;
};

inline EllipticityWitness check_nondegeneracy(
    const CoefficientField& sigma, const std::vector<DirectionProbe>& probes) {
  if (probes.empty()) throw ArgumentError("non-degeneracy check needs probes");
  const int d = sigma.dim();
  EllipticityWitness w;
  w.probe_count = probes.size();
  bool first = true;
  for (const auto& pr : probes) {
    if (pr.x.size() != d || pr.direction.size() != d)
      throw ArgumentError("probe dimension mismatch");
    if (std::abs(pr.direction.norm() - 1.0) > 1e-9)
      throw ArgumentError("probe directions must be unit vectors");
    Mat s = sigma.mat_at(pr.t, pr.x);
    double q = (s.transpose() * pr.direction).squaredNorm();
    double sur = 0.0;
    for (int i = 0; i < d; ++i)
      sur += pr.direction[i] * pr.direction[i] * s.row(i).squaredNorm();
    if (first || q < w.delta) {
      w.delta = q;
      w.worst_t = pr.t;
      w.worst_x = pr.x;
      w.worst_direction = pr.direction;
    }
    w.kappa_upper = first ? q : std::max(w.kappa_upper, q);
    w.surrogate_delta = first ? sur : std::min(w.surrogate_delta, sur);
    w.surrogate_kappa = first ? sur : std::max(w.surrogate_kappa, sur);
    first = false;
  }
  // Polish the directional minimum at the worst probe point: the grid
  // localizes the pinch, the exact smallest eigenvalue of sigma sigma^T
  // certifies it.  Without this, a null direction falling between grid
  // angles shows up as a spurious spacing-squared positive minimum.
  {
    Mat a = sigma.a_at(w.worst_t, w.worst_x);
    Eigen::SelfAdjointEigenSolver<Mat> es(a);
    double lam = es.eigenvalues()[0];
    if (lam < w.delta) {
      w.delta = std::max(lam, 0.0);
      w.worst_direction = es.eigenvectors().col(0);
    }
  }
  // A lower bound indistinguishable from zero (relative to the upper bound)
  // means the form degenerates along some direction.
  w.violated = w.delta <= 1e-9 * std::max(1.0, w.kappa_upper);
  return w;
}

// ---------------------------------------------------------------------------
// Seminorm and inverse-diffusion probes

/// sup over probe pairs of |f(t,x)-f(t,y)| / |x-y|^theta.
inline double check_hoelder_seminorm(const CoefficientField& field,
                                     double theta,
                                     const std::vector<PairProbe>& probes) {
  if (probes.empty()) throw ArgumentError("seminorm check needs probes");
  if (!(theta > 0.0 && theta <= 1.0))
    throw ArgumentError("Hoelder exponent must lie in (0,1]");
  double worst = 0.0;
  for (const auto& pr : probes) {
    double dist = (pr.x - pr.y).norm();
    if (dist <= 0.0)
      throw ArgumentError("seminorm probe pairs must have x != y");
    double diff;
    if (field.kind() == FieldKind::vector_field)
      diff = (field.vec_at(pr.t, pr.x) - field.vec_at(pr.t, pr.y)).norm();
    else
      diff = hs_norm(field.mat_at(pr.t, pr.x) - field.mat_at(pr.t, pr.y));
    worst = std::max(worst, diff / std::pow(dist, theta));
  }
  return worst;
}

/// sup over probes of ||(sigma sigma^T)^{-1}(t,x)|| in Hilbert-Schmidt norm.
inline double check_inverse_diffusion_bound(
    const CoefficientField& sigma, const std::vector<PointProbe>& probes) {
  if (probes.empty()) throw ArgumentError("inverse bound check needs probes");
  double worst = 0.0;
  for (const auto& pr : probes) {
    Mat a = sigma.a_at(pr.t, pr.x);
    Eigen::FullPivLU<Mat> lu(a);
    if (!lu.isInvertible()) {
      std::ostringstream os;
      os << "diffusion matrix is singular at t=" << pr.t << ", x=(";
      for (int i = 0; i < sigma.dim(); ++i) os << (i ? "," : "") << pr.x[i];
      os << ")";
      throw SingularityError(os.str());
    }
    Mat inv = lu.inverse();
    if (!all_finite(inv)) throw SingularityError("inverse overflowed");
    worst = std::max(worst, hs_norm(inv));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Mollification

namespace detail {

// Bump profile exp(-1/(1-|z|^2)) on the open unit ball, 0 outside.
inline double bump_profile(double r2) {
  if (r2 >= 1.0) return 0.0;
  return std::exp(-1.0 / (1.0 - r2));
}

}  // namespace detail

/// Spatial mollification at scale 1/n: convolution with the normalized bump
/// supported in the ball of radius 1/n, evaluated by tensor Gauss-Legendre
/// quadrature.  The kernel mass is accumulated under the exact same rule in
/// the same pass, so constant fields are reproduced to round-off.
inline CoefficientField mollify(const CoefficientField& field, int n) {
  if (n < 1) throw ArgumentError("mollification index must be >= 1");
  const int d = field.dim();
  const double radius = 1.0 / static_cast<double>(n);
  Regularity reg = Regularity::smooth();
  if (field.kind() == FieldKind::vector_field) {
    auto base = field;
    return CoefficientField::drift(
        d,
        [base, d, radius](double t, const Vec& x) -> Vec {
          Vec acc = Vec::Zero(d);
          double mass = 0.0;
          foreach_gl16_node(
              [&](const Vec& u, double w) {
                double b = detail::bump_profile(u.squaredNorm());
                if (b <= 0.0) return;
                acc += (w * b) * base.vec_at(t, x - radius * u);
                mass += w * b;
              },
              d, 1.0);
          return acc / mass;
        },
        reg, field.declared_sup_norm());
  }
  auto base = field;
  return CoefficientField::diffusion(
      d,
      [base, d, radius](double t, const Vec& x) -> Mat {
        Mat acc = Mat::Zero(d, d);
        double mass = 0.0;
        foreach_gl16_node(
            [&](const Vec& u, double w) {
              double b = detail::bump_profile(u.squaredNorm());
              if (b <= 0.0) return;
              acc += (w * b) * base.mat_at(t, x - radius * u);
              mass += w * b;
            },
            d, 1.0);
        return acc / mass;
      },
      reg, field.declared_sup_norm());
}

// ---------------------------------------------------------------------------
// Carre du champ

/// Gamma(t)(f,g)(x) = (1/2) <sigma^T grad f, sigma^T grad g> with gradients
/// by central differences.
template <class F, class G>
double carre_du_champ(const CoefficientField& sigma, F&& f, G&& g, double t,
                      const Vec& x, double fd_step = 1e-5) {
  if (!(fd_step > 0.0)) throw ArgumentError("finite-difference step must be positive");
  const int d = sigma.dim();
  Vec gf(d), gg(d);
  Vec xp = x, xm = x;
  for (int i = 0; i < d; ++i) {
    xp[i] = x[i] + fd_step;
    xm[i] = x[i] - fd_step;
    gf[i] = (f(xp) - f(xm)) / (2.0 * fd_step);
    gg[i] = (g(xp) - g(xm)) / (2.0 * fd_step);
    xp[i] = x[i];
    xm[i] = x[i];
  }
  if (!all_finite(gf) || !all_finite(gg))
    throw EvaluationError("non-finite gradient in carre du champ");
  Mat s = sigma.mat_at(t, x);
  return 0.5 * (s.transpose() * gf).dot(s.transpose() * gg);
}

}  // namespace hlab
