#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hlab/config.hpp"
#include "hlab/errors.hpp"
#include "hlab/presets.hpp"
#include "hlab/sde.hpp"

namespace hlab {

/// One entry of the top-level [[scenario]] array.
struct ScenarioSpec {
  std::string name;
  std::string kind;
  ConfigValue body;  // the scenario table
};

inline std::vector<ScenarioSpec> load_scenarios(const ConfigValue& root) {
  const ConfigValue* arr = root.find("scenario");
  if (!arr || !arr->is_array() || arr->as_array().empty())
    throw ConfigurationError("config contains no [[scenario]] entries");
  std::vector<ScenarioSpec> out;
  std::set<std::string> names;
  for (const auto& sc : arr->as_array()) {
    ScenarioSpec spec;
    spec.name = sc.at("name").as_string();
    spec.kind = sc.at("kind").as_string();
    if (spec.name.empty() ||
        spec.name.find_first_of("/\\ \t") != std::string::npos)
      throw ConfigurationError("scenario name must be a plain file-safe token: " +
                               spec.name);
    if (!names.insert(spec.name).second)
      throw ConfigurationError("duplicate scenario name: " + spec.name);
    spec.body = sc;
    out.push_back(std::move(spec));
  }
  return out;
}

inline PresetParams preset_params_from_config(const ConfigValue* table) {
  PresetParams params;
  if (!table) return params;
  for (const auto& [key, value] : table->entries())
    params[key] = value.as_number();
  return params;
}

inline Vec vec_from_config(const ConfigValue& v, int dim) {
  if (v.is_number()) {
    if (dim != 1)
      throw ConfigurationError("scalar given where a point of dimension " +
                               std::to_string(dim) + " is needed");
    Vec x(1);
    x[0] = v.as_number();
    return x;
  }
  auto nums = v.as_number_array();
  if (static_cast<int>(nums.size()) != dim)
    throw ConfigurationError("point has wrong dimension");
  Vec x(dim);
  for (int i = 0; i < dim; ++i) x[i] = nums[i];
  return x;
}

/// Builds the SDE from the [scenario.problem] table.
inline SdeProblem problem_from_config(const ConfigValue& scenario) {
  const ConfigValue& p = scenario.at("problem");
  int dim = static_cast<int>(p.at("dim").as_integer());
  std::string drift_name = p.string_or("drift", "zero");
  std::string diffusion_name = p.string_or("diffusion", "identity");
  std::string driver_name = p.string_or("driver", "brownian");

  CoefficientField drift = make_drift_preset(
      drift_name, dim, preset_params_from_config(p.find("drift-params")));

  Driver driver;
  if (driver_name == "brownian")
    driver = Driver::brownian;
  else if (driver_name == "stable")
    driver = Driver::stable;
  else
    throw ConfigurationError("unknown driver: " + driver_name);

  std::optional<CoefficientField> diffusion;
  if (driver == Driver::stable) {
    if (p.find("diffusion") && diffusion_name != "identity")
      throw ConfigurationError("stable driver requires identity diffusion");
  } else if (diffusion_name != "identity" || p.find("diffusion-params")) {
    diffusion = make_diffusion_preset(
        diffusion_name, dim,
        preset_params_from_config(p.find("diffusion-params")));
  }

  SdeProblem problem{dim, std::move(drift), std::move(diffusion), driver,
                     p.number_or("alpha", 2.0), p.number_or("horizon", 1.0)};
  problem.validate();
  return problem;
}

/// Builds the observable from the [scenario.f] table ("preset" plus numeric
/// parameters).
inline TestFunction test_function_from_config(const ConfigValue& scenario,
                                              int dim) {
  const ConfigValue* f = scenario.find("f");
  if (!f) throw ConfigurationError("scenario needs an [<scenario>.f] table");
  std::string preset = f->at("preset").as_string();
  PresetParams params;
  for (const auto& [key, value] : f->entries())
    if (key != "preset") params[key] = value.as_number();
  return make_test_function_preset(preset, dim, params);
}

/// Builds the diffusion field named by the problem table (identity included),
/// for scenario kinds that need the matrix field itself.
inline CoefficientField diffusion_field_from_config(const ConfigValue& scenario) {
  const ConfigValue& p = scenario.at("problem");
  int dim = static_cast<int>(p.at("dim").as_integer());
  return make_diffusion_preset(
      p.string_or("diffusion", "identity"), dim,
      preset_params_from_config(p.find("diffusion-params")));
}

inline CoefficientField drift_field_from_config(const ConfigValue& scenario) {
  const ConfigValue& p = scenario.at("problem");
  int dim = static_cast<int>(p.at("dim").as_integer());
  return make_drift_preset(p.string_or("drift", "zero"), dim,
                           preset_params_from_config(p.find("drift-params")));
}

}  // namespace hlab
