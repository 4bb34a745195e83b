#pragma once

#include <array>
#include <cstddef>

#include "hlab/linalg.hpp"

namespace hlab {

/// 16-point Gauss-Legendre rule on [-1,1].
struct GaussLegendre16 {
  static constexpr std::size_t n = 16;

  static constexpr std::array<double, n> nodes = {
      -0.9894009349916499325961542, -0.9445750230732325760779884,
      -0.8656312023878317438804679, -0.7554044083550030338951012,
      -0.6178762444026437484466718, -0.4580167776572273863424194,
      -0.2816035507792589132304605, -0.0950125098376374401853193,
      0.0950125098376374401853193,  0.2816035507792589132304605,
      0.4580167776572273863424194,  0.6178762444026437484466718,
      0.7554044083550030338951012,  0.8656312023878317438804679,
      0.9445750230732325760779884,  0.9894009349916499325961542};

  static constexpr std::array<double, n> weights = {
      0.0271524594117540948517806, 0.0622535239386478928628438,
      0.0951585116824927848099251, 0.1246289712555338720524763,
      0.1495959888165767320815017, 0.1691565193950025381893121,
      0.1826034150449235888667637, 0.1894506104550684962853967,
      0.1894506104550684962853967, 0.1826034150449235888667637,
      0.1691565193950025381893121, 0.1495959888165767320815017,
      0.1246289712555338720524763, 0.0951585116824927848099251,
      0.0622535239386478928628438, 0.0271524594117540948517806};
};

/// Integrate f over [a,b] with the 16-point rule.
template <class F>
double integrate_gl16(F&& f, double a, double b) {
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  double s = 0.0;
  for (std::size_t i = 0; i < GaussLegendre16::n; ++i)
    s += GaussLegendre16::weights[i] * f(mid + half * GaussLegendre16::nodes[i]);
  return s * half;
}

/// Visits every node of the tensor-product 16^d rule over the cube [-r,r]^d,
/// d <= 3, passing the node and its combined weight (half-width scaling
/// included), so callers can accumulate vector- or matrix-valued integrals
/// against the exact same rule in a single pass.
template <class F>
void foreach_gl16_node(F&& f, int dim, double r) {
  const double half = r;  // interval [-r,r]: midpoint 0, half-width r
  Vec z(dim);
  const auto& xs = GaussLegendre16::nodes;
  const auto& ws = GaussLegendre16::weights;
  if (dim == 1) {
    for (std::size_t i = 0; i < 16; ++i) {
      z[0] = half * xs[i];
      f(z, ws[i] * half);
    }
    return;
  }
  if (dim == 2) {
    for (std::size_t i = 0; i < 16; ++i) {
      z[0] = half * xs[i];
      for (std::size_t j = 0; j < 16; ++j) {
        z[1] = half * xs[j];
        f(z, ws[i] * ws[j] * half * half);
      }
    }
    return;
  }
  for (std::size_t i = 0; i < 16; ++i) {
    z[0] = half * xs[i];
    for (std::size_t j = 0; j < 16; ++j) {
      z[1] = half * xs[j];
      for (std::size_t k = 0; k < 16; ++k) {
        z[2] = half * xs[k];
        f(z, ws[i] * ws[j] * ws[k] * half * half * half);
      }
    }
  }
}

/// Tensor-product 16^d rule over the cube [-r,r]^d, d <= 3.
/// f takes a Vec of dimension d.
template <class F>
double integrate_gl16_cube(F&& f, int dim, double r) {
  double total = 0.0;
  foreach_gl16_node([&](const Vec& z, double w) { total += w * f(z); }, dim,
                    r);
  return total;
}

}  // namespace hlab
