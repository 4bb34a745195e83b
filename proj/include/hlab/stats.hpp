#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "hlab/errors.hpp"

namespace hlab {

// Two-sided 99% normal quantile; every confidence interval in this library
// uses it unless a caller overrides the width.
inline constexpr double z99 = 2.576;

/// Monte Carlo estimate with a symmetric normal confidence interval.
struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
  double z = z99;

  double half_width() const { return z * std_error; }
  double lower() const { return mean - half_width(); }
  double upper() const { return mean + half_width(); }
};

/// Welford running mean/variance accumulator.
class RunningStats {
 public:
  void add(double x) {
    ++n_;
    double d = x - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (x - mean_);
  }

  std::size_t count() const { return n_; }
  double mean() const { return mean_; }

  double variance() const {
    return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0;
  }

  double std_error() const {
    return n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
  }

  McEstimate estimate(double z = z99) const {
    return {mean(), std_error(), n_, z};
  }

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

inline McEstimate mc_estimate(std::span<const double> xs, double z = z99) {
  RunningStats acc;
  for (double x : xs) acc.add(x);
  return acc.estimate(z);
}

/// Empirical quantile (linear interpolation) of an already sorted sample.
inline double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw ArgumentError("quantile of empty sample");
  if (p <= 0.0) return sorted.front();
  if (p >= 1.0) return sorted.back();
  double pos = p * static_cast<double>(sorted.size() - 1);
  std::size_t lo = static_cast<std::size_t>(pos);
  double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

/// Two-sample Kolmogorov-Smirnov distance.  Both inputs must be sorted.
inline double ks_distance_sorted(std::span<const double> a,
                                 std::span<const double> b) {
  if (a.empty() || b.empty())
    throw ArgumentError("KS distance of empty sample");
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    if (a[i] <= b[j])
      ++i;
    else
      ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na -
                             static_cast<double>(j) / nb));
  }
  return d;
}

/// Asymptotic two-sample KS critical value at significance alpha,
/// c(alpha) * sqrt((n+m)/(n m)) with c(alpha) = sqrt(-ln(alpha/2)/2).
inline double ks_critical_value(std::size_t n, std::size_t m,
                                double alpha = 0.01) {
  if (n == 0 || m == 0 || alpha <= 0.0 || alpha >= 1.0)
    throw ArgumentError("KS critical value needs n,m > 0 and alpha in (0,1)");
  double c = std::sqrt(-0.5 * std::log(alpha / 2.0));
  double nn = static_cast<double>(n), mm = static_cast<double>(m);
  return c * std::sqrt((nn + mm) / (nn * mm));
}

/// One-sample KS distance against a continuous CDF.  Input must be sorted.
template <class Cdf>
double ks_distance_cdf_sorted(std::span<const double> xs, Cdf&& cdf) {
  if (xs.empty()) throw ArgumentError("KS distance of empty sample");
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double f = cdf(xs[i]);
    d = std::max(d, std::abs(f - static_cast<double>(i) / n));
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
  }
  return d;
}

/// Silverman bandwidth with the robust spread min(sd, IQR/1.34); the robust
/// variant keeps heavy-tailed samples (stable drivers) from oversmoothing.
inline double silverman_bandwidth(std::span<const double> sorted) {
  if (sorted.size() < 2) throw ArgumentError("bandwidth needs >= 2 samples");
  RunningStats acc;
  for (double x : sorted) acc.add(x);
  double sd = std::sqrt(acc.variance());
  double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
  double spread = sd;
  if (iqr > 0.0) spread = std::min(spread, iqr / 1.34);
  if (spread <= 0.0)
    throw DegenerateError("sample spread is zero; cannot pick a bandwidth");
  return 0.9 * spread * std::pow(static_cast<double>(sorted.size()), -0.2);
}

/// Gaussian kernel density estimate on one-dimensional samples.
class Kde1d {
 public:
  Kde1d(std::vector<double> samples, double bandwidth)
      : samples_(std::move(samples)), h_(bandwidth) {
    if (samples_.empty()) throw ArgumentError("KDE needs samples");
    if (!(h_ > 0.0)) throw ArgumentError("KDE bandwidth must be positive");
    std::sort(samples_.begin(), samples_.end());
  }

  static Kde1d fit(std::vector<double> samples) {
    std::sort(samples.begin(), samples.end());
    double h = silverman_bandwidth(samples);
    return Kde1d(std::move(samples), h);
  }

  double bandwidth() const { return h_; }
  std::size_t size() const { return samples_.size(); }
  const std::vector<double>& sorted_samples() const { return samples_; }

  double operator()(double x) const {
    // Kernel support is effectively 8 bandwidths; skip the rest.
    const double cut = 8.0 * h_;
    auto lo = std::lower_bound(samples_.begin(), samples_.end(), x - cut);
    auto hi = std::upper_bound(samples_.begin(), samples_.end(), x + cut);
    double s = 0.0;
    for (auto it = lo; it != hi; ++it) {
      double u = (x - *it) / h_;
      s += std::exp(-0.5 * u * u);
    }
    constexpr double inv_sqrt_2pi = 0.3989422804014327;
    return s * inv_sqrt_2pi / (h_ * static_cast<double>(samples_.size()));
  }

  /// Density values below this level are dominated by estimation noise for
  /// the given sample size; ratio checks should drop such probes.
  double noise_floor() const {
    constexpr double inv_sqrt_2pi = 0.3989422804014327;
    return 10.0 * inv_sqrt_2pi / (h_ * static_cast<double>(samples_.size()));
  }

 private:
  std::vector<double> samples_;
  double h_;
};

}  // namespace hlab
