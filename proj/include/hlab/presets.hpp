#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "hlab/errors.hpp"
#include "hlab/fields.hpp"
#include "hlab/semigroup.hpp"

namespace hlab {

using PresetParams = std::map<std::string, double>;

struct PresetParamInfo {
  std::string name;
  double default_value;
  std::string doc;
};

struct PresetInfo {
  std::string name;
  std::string kind;  // "drift", "diffusion", "test-function"
  std::string doc;
  std::vector<PresetParamInfo> params;
};

inline const std::vector<PresetInfo>& preset_catalog() {
  static const std::vector<PresetInfo> catalog = {
      {"zero", "drift", "b = 0", {}},
      {"constant",
       "drift",
       "b = value on every coordinate",
       {{"value", 1.0, "drift level"}}},
      {"ou-drift",
       "drift",
       "b = -rate * x",
       {{"rate", 1.0, "mean-reversion rate"}}},
      {"holder-sign",
       "drift",
       "b1 = amp * sign(x1) * min(|x1|, cap)^theta, other components 0",
       {{"amp", 1.0, "amplitude"},
        {"theta", 0.5, "Hoelder exponent"},
        {"cap", 1.0, "saturation level"}}},
      {"holder-bump",
       "drift",
       "b1 = amp * exp(1 - 1/(1 - (x1/width)^2)) inside |x1| < width",
       {{"amp", 1.0, "peak value"}, {"width", 1.0, "support half-width"}}},
      {"identity", "diffusion", "sigma = I", {}},
      {"scaled-identity",
       "diffusion",
       "sigma = scale * I",
       {{"scale", 1.0, "scale factor"}}},
      {"diag",
       "diffusion",
       "sigma = diag(d1, d2, d3) truncated to the dimension",
       {{"d1", 1.0, "first diagonal entry"},
        {"d2", 2.0, "second diagonal entry"},
        {"d3", 1.0, "third diagonal entry"}}},
      {"footnote-matrix",
       "diffusion",
       "sigma = [[1,-1],[-1,1]] (d = 2): singular along (1,1)/sqrt(2)",
       {}},
      {"sign-step",
       "diffusion",
       "sigma = (1 + amp * sign(x1)) * I, |amp| < 1",
       {{"amp", 0.5, "jump amplitude"}}},
      {"one", "test-function", "f = 1", {}},
      {"trunc-exp",
       "test-function",
       "f = 1 + scale * min(exp(rate * x1), cap)",
       {{"scale", 1.0, "amplitude"},
        {"rate", 1.0, "exponential rate"},
        {"cap", 1e6, "truncation level"}}},
      {"smooth-bump",
       "test-function",
       "f = base + amp * S(|x|), S a smoothstep from 1 inside r0 to 0 beyond r1",
       {{"base", 1.0, "value at infinity"},
        {"amp", 1.0, "bump height"},
        {"r0", 0.5, "inner radius"},
        {"r1", 1.5, "outer radius"}}},
      {"coord-monomial",
       "test-function",
       "f = clip(x1^k, +-cap)",
       {{"k", 2.0, "integer exponent"}, {"cap", 1e6, "clip level"}}},
  };
  return catalog;
}

namespace detail {

inline const PresetInfo& find_preset(const std::string& name,
                                     const std::string& kind) {
  for (const auto& p : preset_catalog())
    if (p.name == name && p.kind == kind) return p;
  throw ConfigurationError("unknown " + kind + " preset: " + name);
}

inline double preset_param(const PresetInfo& info, const PresetParams& params,
                           const std::string& key) {
  for (const auto& p : info.params)
    if (p.name == key) {
      auto it = params.find(key);
      return it == params.end() ? p.default_value : it->second;
    }
  throw ConfigurationError("preset " + info.name + " has no parameter " + key);
}

inline void reject_unknown_params(const PresetInfo& info,
                                  const PresetParams& params) {
  for (const auto& [key, _] : params) {
    bool known = false;
    for (const auto& p : info.params) known = known || p.name == key;
    if (!known)
      throw ConfigurationError("preset " + info.name +
                               " has no parameter " + key);
  }
}

}  // namespace detail

inline CoefficientField make_drift_preset(const std::string& name, int dim,
                                          const PresetParams& params = {}) {
  const PresetInfo& info = detail::find_preset(name, "drift");
  detail::reject_unknown_params(info, params);
  auto param = [&](const std::string& key) {
    return detail::preset_param(info, params, key);
  };
  if (name == "zero")
    return CoefficientField::drift(
        dim, [dim](double, const Vec&) -> Vec { return Vec::Zero(dim); },
        Regularity::smooth(), 0.0);
  if (name == "constant") {
    double value = param("value");
    return CoefficientField::drift(
        dim,
        [dim, value](double, const Vec&) -> Vec {
          return Vec::Constant(dim, value);
        },
        Regularity::smooth(), std::abs(value) * std::sqrt(double(dim)));
  }
  if (name == "ou-drift") {
    double rate = param("rate");
    return CoefficientField::drift(
        dim, [rate](double, const Vec& x) -> Vec { return -rate * x; },
        Regularity::smooth());
  }
  if (name == "holder-sign") {
    double amp = param("amp"), theta = param("theta"), cap = param("cap");
    if (!(theta > 0.0 && theta <= 1.0))
      throw ConfigurationError("holder-sign needs theta in (0,1]");
    return CoefficientField::drift(
        dim,
        [dim, amp, theta, cap](double, const Vec& x) -> Vec {
          Vec b = Vec::Zero(dim);
          double u = std::min(std::abs(x[0]), cap);
          double s = x[0] > 0.0 ? 1.0 : (x[0] < 0.0 ? -1.0 : 0.0);
          b[0] = amp * s * std::pow(u, theta);
          return b;
        },
        Regularity::hoelder(theta), std::abs(amp) * std::pow(cap, theta));
  }
  // holder-bump
  double amp = param("amp"), width = param("width");
  if (!(width > 0.0)) throw ConfigurationError("holder-bump needs width > 0");
  return CoefficientField::drift(
      dim,
      [dim, amp, width](double, const Vec& x) -> Vec {
        Vec b = Vec::Zero(dim);
        double u = x[0] / width;
        double u2 = u * u;
        if (u2 < 1.0) b[0] = amp * std::exp(1.0 - 1.0 / (1.0 - u2));
        return b;
      },
      Regularity::smooth(), std::abs(amp));
}

inline CoefficientField make_diffusion_preset(const std::string& name, int dim,
                                              const PresetParams& params = {}) {
  const PresetInfo& info = detail::find_preset(name, "diffusion");
  detail::reject_unknown_params(info, params);
  auto param = [&](const std::string& key) {
    return detail::preset_param(info, params, key);
  };
  if (name == "identity")
    return CoefficientField::diffusion(
        dim,
        [dim](double, const Vec&) -> Mat { return Mat::Identity(dim, dim); },
        Regularity::smooth(), std::sqrt(double(dim)));
  if (name == "scaled-identity") {
    double scale = param("scale");
    return CoefficientField::diffusion(
        dim,
        [dim, scale](double, const Vec&) -> Mat {
          return scale * Mat::Identity(dim, dim);
        },
        Regularity::smooth());
  }
  if (name == "diag") {
    double d1 = param("d1"), d2 = param("d2"), d3 = param("d3");
    return CoefficientField::diffusion(
        dim,
        [dim, d1, d2, d3](double, const Vec&) -> Mat {
          Mat m = Mat::Zero(dim, dim);
          m(0, 0) = d1;
          if (dim > 1) m(1, 1) = d2;
          if (dim > 2) m(2, 2) = d3;
          return m;
        },
        Regularity::smooth());
  }
  if (name == "footnote-matrix") {
    if (dim != 2)
      throw ConfigurationError("footnote-matrix is two-dimensional");
    return CoefficientField::diffusion(
        2,
        [](double, const Vec&) -> Mat {
          Mat m(2, 2);
          m(0, 0) = 1.0;
          m(0, 1) = -1.0;
          m(1, 0) = -1.0;
          m(1, 1) = 1.0;
          return m;
        },
        Regularity::smooth(), 2.0);
  }
  // sign-step
  double amp = param("amp");
  if (!(std::abs(amp) < 1.0))
    throw ConfigurationError("sign-step needs |amp| < 1 to stay elliptic");
  return CoefficientField::diffusion(
      dim,
      [dim, amp](double, const Vec& x) -> Mat {
        double s = x[0] >= 0.0 ? 1.0 : -1.0;
        return (1.0 + amp * s) * Mat::Identity(dim, dim);
      },
      Regularity::bounded_measurable());
}

inline TestFunction make_test_function_preset(const std::string& name, int dim,
                                              const PresetParams& params = {}) {
  const PresetInfo& info = detail::find_preset(name, "test-function");
  detail::reject_unknown_params(info, params);
  auto param = [&](const std::string& key) {
    return detail::preset_param(info, params, key);
  };
  (void)dim;
  TestFunction f;
  f.name = name;
  if (name == "one") {
    f.eval = [](const Vec&) { return 1.0; };
    f.gradient = [dim](const Vec&) -> Vec { return Vec::Zero(dim); };
    f.lower_bounded_by_one = true;
    f.nonnegative = true;
    return f;
  }
  if (name == "trunc-exp") {
    double scale = param("scale"), rate = param("rate"), cap = param("cap");
    if (!(scale >= 0.0))
      throw ConfigurationError("trunc-exp needs scale >= 0");
    f.eval = [scale, rate, cap](const Vec& x) {
      return 1.0 + scale * std::min(std::exp(rate * x[0]), cap);
    };
    f.gradient = [dim, scale, rate, cap](const Vec& x) -> Vec {
      Vec g = Vec::Zero(dim);
      double e = std::exp(rate * x[0]);
      g[0] = e < cap ? scale * rate * e : 0.0;
      return g;
    };
    f.lower_bounded_by_one = true;
    f.nonnegative = true;
    return f;
  }
  if (name == "smooth-bump") {
    double base = param("base"), amp = param("amp");
    double r0 = param("r0"), r1 = param("r1");
    if (!(0.0 < r0 && r0 < r1))
      throw ConfigurationError("smooth-bump needs 0 < r0 < r1");
    f.eval = [base, amp, r0, r1](const Vec& x) {
      double r = x.norm();
      double u = std::clamp((r1 - r) / (r1 - r0), 0.0, 1.0);
      return base + amp * u * u * (3.0 - 2.0 * u);
    };
    f.gradient = [dim, amp, r0, r1](const Vec& x) -> Vec {
      double r = x.norm();
      if (r <= r0 || r >= r1 || r == 0.0) return Vec::Zero(dim);
      double u = (r1 - r) / (r1 - r0);
      double ds = amp * 6.0 * u * (1.0 - u) * (-1.0 / (r1 - r0));
      return Vec((ds / r) * x);
    };
    f.lower_bounded_by_one = base >= 1.0 && amp >= 0.0;
    f.nonnegative = base >= 0.0 && base + amp >= 0.0 && amp >= -base;
    return f;
  }
  // coord-monomial
  double kf = param("k"), cap = param("cap");
  int k = static_cast<int>(kf);
  if (k < 1 || static_cast<double>(k) != kf)
    throw ConfigurationError("coord-monomial needs a positive integer k");
  f.eval = [k, cap](const Vec& x) {
    return std::clamp(std::pow(x[0], k), -cap, cap);
  };
  f.gradient = [dim, k, cap](const Vec& x) -> Vec {
    Vec g = Vec::Zero(dim);
    double v = std::pow(x[0], k);
    g[0] = std::abs(v) < cap ? k * std::pow(x[0], k - 1) : 0.0;
    return g;
  };
  f.nonnegative = k % 2 == 0;
  f.lower_bounded_by_one = false;
  return f;
}

/// Closed-form inner semigroup for the truncated exponential family under
/// the additive Brownian driver with zero drift:
///   T_{r,t}(1 + scale e^{rate z1}) = 1 + scale e^{rate z1 + rate^2 (t-r)/2},
/// valid as long as the truncation never engages on the sampled range.
struct HeatInnerOracle {
  double scale = 1.0;
  double rate = 1.0;
  double t_end = 1.0;

  double value(double r, const Vec& z) const {
    return 1.0 + scale * std::exp(rate * z[0] + 0.5 * rate * rate * (t_end - r));
  }

  Vec gradient(double r, const Vec& z) const {
    Vec g = Vec::Zero(z.size());
    g[0] = scale * rate *
           std::exp(rate * z[0] + 0.5 * rate * rate * (t_end - r));
    return g;
  }
};

}  // namespace hlab
