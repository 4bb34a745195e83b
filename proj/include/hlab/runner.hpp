#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "hlab/config.hpp"
#include "hlab/errors.hpp"
#include "hlab/fields.hpp"
#include "hlab/grid.hpp"
#include "hlab/harnack.hpp"
#include "hlab/interpolation.hpp"
#include "hlab/kernel_bounds.hpp"
#include "hlab/rng.hpp"
#include "hlab/scenario.hpp"
#include "hlab/semigroup.hpp"
#include "hlab/stats.hpp"
#include "hlab/transforms.hpp"
#include "hlab/version.hpp"

namespace hlab {

struct RunOptions {
  std::optional<std::uint64_t> seed;  // overrides the config-level seed
  int jobs = 1;                       // worker threads handed to simulations
  std::string out_dir;                // empty: config "out-dir", else "out"
  bool json_stdout = false;           // echo each summary to stdout as JSON
};

struct ScenarioOutcome {
  std::string name;
  std::string kind;
  bool ok = false;            // ran to completion
  bool violated = false;      // produced at least one VIOLATED verdict
  std::string error;          // populated when ok is false
  nlohmann::json summary;
  std::vector<std::string> files_written;
};

struct RunResult {
  std::vector<ScenarioOutcome> outcomes;
  int exit_code = 0;  // 0 clean, 1 runtime failure or violation, 2 bad config
};

namespace detail {

inline void write_file_atomic(const std::string& path,
                              const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + tmp);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw IoError("short write: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw IoError("cannot rename " + tmp + " to " + path);
}

inline void ensure_directory(const std::string& path) {
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (ec)
    throw IoError("cannot create directory " + path + ": " + ec.message());
}

inline std::uint64_t scenario_seed(const ConfigValue& root,
                                   const ScenarioSpec& spec,
                                   const RunOptions& options) {
  if (const ConfigValue* s = spec.body.find("seed"))
    return static_cast<std::uint64_t>(s->as_integer());
  std::uint64_t base = options.seed
                           ? *options.seed
                           : static_cast<std::uint64_t>(
                                 root.number_or("seed", 20260823.0));
  // Stable per-scenario stream: hash the name into the base seed.
  std::uint64_t h = base;
  for (char c : spec.name) h = mix64(h ^ static_cast<std::uint64_t>(c));
  return h;
}

inline nlohmann::json json_point(const Vec& x) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < x.size(); ++i) a.push_back(x[i]);
  return a;
}

inline nlohmann::json json_estimate(const McEstimate& e) {
  return {{"mean", e.mean}, {"std-error", e.std_error}, {"n", e.n}};
}

inline SpaceTimeGrid grid_from_config(const ConfigValue& sc, double horizon) {
  const ConfigValue* g = sc.find("grid");
  if (!g) throw ConfigurationError("scenario needs a [<scenario>.grid] table");
  SpaceTimeGrid grid;
  grid.dim = static_cast<int>(sc.at("problem").at("dim").as_integer());
  grid.half_width = g->at("half-width").as_number();
  grid.nodes_per_axis = static_cast<int>(g->at("nodes").as_integer());
  grid.time_steps = static_cast<int>(g->at("time-steps").as_integer());
  grid.t0 = 0.0;
  grid.t1 = g->number_or("horizon", horizon);
  grid.validate();
  return grid;
}

/// Expands explicit [[<scenario>.instance]] tables and/or the compact
/// [<scenario>.sweep] generator into the list of (x, y, s, t) probes.
inline std::vector<SweepInstance> instances_from_config(const ConfigValue& sc,
                                                        int dim) {
  std::vector<SweepInstance> out;
  if (const ConfigValue* list = sc.find("instance")) {
    for (const auto& inst : list->as_array()) {
      SweepInstance si;
      si.x = vec_from_config(inst.at("x"), dim);
      si.y = vec_from_config(inst.at("y"), dim);
      si.s = inst.number_or("s", 0.0);
      si.t = inst.at("t").as_number();
      out.push_back(std::move(si));
    }
  }
  if (const ConfigValue* sweep = sc.find("sweep")) {
    Vec base = Vec::Zero(dim);
    if (const ConfigValue* b = sweep->find("x-base"))
      base = vec_from_config(*b, dim);
    auto times = sweep->at("t-values").as_number_array();
    auto gaps = sweep->at("gaps").as_number_array();
    int axis = static_cast<int>(sweep->number_or("axis", 0.0));
    if (axis < 0 || axis >= dim)
      throw ConfigurationError("sweep axis out of range");
    for (double t : times)
      for (double gap : gaps) {
        SweepInstance si;
        si.x = base;
        si.y = base;
        si.y[axis] += gap;
        si.s = sweep->number_or("s", 0.0);
        si.t = t;
        out.push_back(std::move(si));
      }
  }
  if (out.empty())
    throw ConfigurationError(
        "scenario needs [[<scenario>.instance]] entries or a sweep table");
  return out;
}

inline StatementConstants constants_from_config(const ConfigValue& sc) {
  const ConfigValue* c = sc.find("constants");
  if (!c)
    throw ConfigurationError("scenario needs a [<scenario>.constants] table");
  StatementConstants out;
  out.K = c->number_or("K", 0.0);
  out.kappa = c->number_or("kappa", 0.0);
  out.delta = c->number_or("delta", 0.0);
  out.C = c->number_or("C", 0.0);
  out.provenance = c->string_or("provenance", "config");
  return out;
}

inline std::string gnuplot_verify_script(const std::string& name) {
  std::ostringstream os;
  os << "set datafile separator ','\n"
     << "set terminal pngcairo size 960,600\n"
     << "set output '" << name << ".png'\n"
     << "set key left top\n"
     << "set xlabel 'instance'\n"
     << "set ylabel 'bound sides (" << name << ")'\n"
     << "plot '" << name << ".csv' every ::1 using 0:9:10 with yerrorbars "
     << "title 'left side', \\\n"
     << "     '" << name << ".csv' every ::1 using 0:11:12 with yerrorbars "
     << "title 'right side'\n";
  return os.str();
}

inline std::vector<PointProbe> random_point_probes(int dim, std::size_t count,
                                                   double box,
                                                   std::uint64_t seed,
                                                   double t_max) {
  std::vector<PointProbe> probes;
  RngStream rng(seed, 0);
  for (std::size_t i = 0; i < count; ++i) {
    PointProbe p;
    p.t = t_max > 0.0 ? t_max * rng.uniform01() : 0.0;
    p.x = Vec(dim);
    for (int k = 0; k < dim; ++k) p.x[k] = box * (2.0 * rng.uniform01() - 1.0);
    probes.push_back(std::move(p));
  }
  return probes;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Scenario handlers.  Each receives the scenario table, the derived seed and
// the outcome object whose `summary` it fills in.  Text artifacts are
// returned through `files` as (filename, content); binary artifacts are
// written directly under `out_dir`.
// ---------------------------------------------------------------------------

namespace handlers {

using FileList = std::vector<std::pair<std::string, std::string>>;

inline void condition_check(const ConfigValue& sc, std::uint64_t seed,
                            const std::string& out_dir,
                            ScenarioOutcome& outcome, FileList& files) {
  (void)out_dir;
  (void)files;
  SdeProblem problem = problem_from_config(sc);
  CoefficientField sigma = diffusion_field_from_config(sc);
  const ConfigValue& params = sc.at("params");

  double t = params.number_or("t", 0.0);
  double box = params.number_or("probe-box", 1.0);

  std::vector<DirectionProbe> probes = random_direction_probes(
      problem.dim, static_cast<std::size_t>(params.number_or("probes", 128.0)),
      derive_seed(seed, 1), box, t);
  if (const ConfigValue* at = params.find("at")) {
    Vec x0 = vec_from_config(*at, problem.dim);
    if (problem.dim == 2 && params.find("angular-resolution")) {
      for (auto& p : circle_direction_probes(
               params.at("angular-resolution").as_number(), t, x0))
        probes.push_back(std::move(p));
    } else {
      for (int k = 0; k < problem.dim; ++k) {
        DirectionProbe p;
        p.t = t;
        p.x = x0;
        p.direction = Vec::Zero(problem.dim);
        p.direction[k] = 1.0;
        probes.push_back(std::move(p));
      }
    }
  }

  EllipticityWitness witness = check_nondegeneracy(sigma, probes);
  nlohmann::json j;
  j["kind"] = "condition-check";
  j["ellipticity"] = {{"delta", witness.delta},
                      {"kappa-upper", witness.kappa_upper},
                      {"surrogate-delta", witness.surrogate_delta},
                      {"surrogate-kappa", witness.surrogate_kappa},
                      {"violated", witness.violated},
                      {"probes", witness.probe_count}};
  if (witness.violated) {
    j["ellipticity"]["worst-t"] = witness.worst_t;
    j["ellipticity"]["worst-point"] = detail::json_point(witness.worst_x);
    j["ellipticity"]["worst-direction"] =
        detail::json_point(witness.worst_direction);
  }

  if (const ConfigValue* h = params.find("hoelder")) {
    double theta = h->at("theta").as_number();
    auto pair_probes = random_pair_probes(
        problem.dim, static_cast<std::size_t>(h->number_or("pairs", 64.0)),
        box, derive_seed(seed, 2), t);
    double semi = check_hoelder_seminorm(problem.drift, theta, pair_probes);
    j["hoelder"] = {{"theta", theta},
                    {"seminorm", semi},
                    {"pairs", pair_probes.size()}};
  }

  if (params.bool_or("inverse-bound", false)) {
    auto pps = detail::random_point_probes(
        problem.dim, static_cast<std::size_t>(params.number_or("points", 32.0)),
        box, derive_seed(seed, 3), t);
    j["inverse-diffusion-sup"] = check_inverse_diffusion_bound(sigma, pps);
  }
  outcome.summary = j;
}

inline void transform_build(const ConfigValue& sc, std::uint64_t seed,
                            const std::string& out_dir,
                            ScenarioOutcome& outcome, FileList& files) {
  (void)files;
  SdeProblem problem = problem_from_config(sc);
  CoefficientField sigma = diffusion_field_from_config(sc);
  CoefficientField drift = drift_field_from_config(sc);
  const ConfigValue& params = sc.at("params");
  SpaceTimeGrid grid = detail::grid_from_config(sc, problem.horizon);
  std::string map_kind = params.string_or("map", "ito-tanaka");

  nlohmann::json j;
  j["kind"] = "transform-build";
  j["map"] = map_kind;

  const GridFunction* displacement = nullptr;
  std::optional<ZvonkinTransform> zt;
  std::optional<ItoTanakaTransform> it;

  if (map_kind == "zvonkin") {
    ZvonkinOptions opts;
    opts.max_halvings = static_cast<int>(params.number_or("max-halvings", 8.0));
    opts.grad_target = params.number_or("grad-target", 0.5);
    zt = build_zvonkin(sigma, drift, grid, opts);
    j["horizon"] = zt->horizon;
    j["halvings"] = zt->halvings;
    j["sup-grad-u"] = zt->pde_report.sup_grad;
    j["residual"] = zt->pde_report.residual;
    displacement = &zt->map.displacement();
    if (params.number_or("bi-lipschitz-pairs", 0.0) > 0) {
      auto probes = random_pair_probes(
          problem.dim,
          static_cast<std::size_t>(params.at("bi-lipschitz-pairs").as_number()),
          grid.half_width, derive_seed(seed, 0xB1Bu), grid.t1);
      BiLipschitzCertificate cert = check_bi_lipschitz(zt->map, probes);
      j["bi-lipschitz"] = {{"min-ratio", cert.min_ratio},
                           {"max-ratio", cert.max_ratio},
                           {"pairs", cert.pairs},
                           {"violations", cert.violations},
                           {"all-within", cert.all_within}};
      if (!cert.all_within) outcome.violated = true;
    }
  } else if (map_kind == "ito-tanaka") {
    ItoTanakaOptions opts;
    if (const ConfigValue* ls = params.find("lambda-schedule"))
      opts.lambda_schedule = ls->as_number_array();
    opts.grad_target = params.number_or("grad-target", 0.5);
    it = build_ito_tanaka(sigma, drift, grid, opts);
    j["lambda"] = it->lambda;
    j["sup-grad-psi"] = it->pde_report.sup_grad;
    j["residual"] = it->pde_report.residual;
    j["constants"] = it->constants.to_json();
    {
      nlohmann::json trace = nlohmann::json::array();
      for (const auto& [lambda, grad] : it->schedule_trace)
        trace.push_back({{"lambda", lambda}, {"sup-grad", grad}});
      j["schedule-trace"] = trace;
    }
    displacement = &it->map.displacement();
    if (params.bool_or("verify-conditions", false)) {
      std::size_t count =
          static_cast<std::size_t>(params.number_or("condition-probes", 64.0));
      auto point_probes = detail::random_point_probes(
          problem.dim, count, grid.half_width, derive_seed(seed, 0xA123u),
          grid.t1);
      auto pair_probes =
          random_pair_probes(problem.dim, count, grid.half_width,
                             derive_seed(seed, 0xA124u), grid.t1);
      EmpiricalConditionConstants cc = verify_A1_A2_A3(
          it->sigma_hat, it->b_hat, point_probes, pair_probes, it->constants);
      j["conditions"] = {{"kappa0", cc.kappa0},
                         {"delta0", cc.delta0},
                         {"K0", cc.K0},
                         {"point-probes", cc.point_probes},
                         {"pair-probes", cc.pair_probes}};
    }
    if (const ConfigValue* push = params.find("pushforward")) {
      Vec x0 = push->find("x") ? vec_from_config(push->at("x"), problem.dim)
                               : Vec(Vec::Zero(problem.dim));
      PushforwardReport pr = pushforward_consistency(
          problem, *it, x0, push->at("t").as_number(),
          static_cast<std::size_t>(push->at("n").as_integer()),
          push->at("dt").as_number(), derive_seed(seed, 0xF00Du));
      j["pushforward"] = {{"ks", pr.ks},
                          {"worst", pr.worst},
                          {"critical", pr.critical},
                          {"within", pr.within},
                          {"n", pr.n}};
      if (!pr.within) outcome.violated = true;
    }
  } else {
    throw ConfigurationError("unknown map kind: " + map_kind);
  }

  if (displacement && params.bool_or("save-map", true)) {
    const std::string path = out_dir + "/" + outcome.name + "-map.bin";
    displacement->save_binary(path);
    outcome.files_written.push_back(path);
    j["map-file"] = outcome.name + "-map.bin";
  }
  outcome.summary = j;
}

inline void harnack_verify(const ConfigValue& sc, std::uint64_t seed,
                           const std::string& out_dir,
                           ScenarioOutcome& outcome, FileList& files) {
  (void)out_dir;
  SdeProblem problem = problem_from_config(sc);
  const ConfigValue& params = sc.at("params");
  Statement statement = parse_statement(params.at("statement").as_string());
  TestFunction f = test_function_from_config(sc, problem.dim);
  auto instances = detail::instances_from_config(sc, problem.dim);
  std::size_t n = static_cast<std::size_t>(params.at("n").as_integer());
  double dt = params.at("dt").as_number();
  StatementConstants constants = detail::constants_from_config(sc);

  std::vector<double> p_values;
  if (is_power_statement(statement)) {
    if (const ConfigValue* pv = params.find("p-values"))
      p_values = pv->as_number_array();
    else
      p_values = {params.at("p").as_number()};
  } else {
    p_values = {0.0};
  }

  std::ostringstream csv;
  csv << HarnackReport::csv_header() << '\n';
  nlohmann::json rows = nlohmann::json::array();
  int holds = 0, violated = 0, inconclusive = 0;
  std::size_t idx = 0;
  for (const auto& inst : instances) {
    for (double p : p_values) {
      std::uint64_t inst_seed = derive_seed(seed, idx++);
      HarnackReport report;
      if (statement == Statement::stable_harnack) {
        report = verify_stable_harnack(problem, constants, inst.x, inst.y,
                                       inst.t, f, n, dt, inst_seed);
      } else if (is_log_statement(statement)) {
        report = verify_log_harnack(statement, problem, constants, inst.x,
                                    inst.y, inst.s, inst.t, f, n, dt,
                                    inst_seed);
      } else {
        report = verify_power_harnack(statement, problem, constants, p,
                                      inst.x, inst.y, inst.s, inst.t, f, n,
                                      dt, inst_seed);
      }
      csv << report.csv_row() << '\n';
      rows.push_back(report.to_json());
      switch (report.verdict) {
        case Verdict::holds: ++holds; break;
        case Verdict::violated: ++violated; break;
        case Verdict::inconclusive: ++inconclusive; break;
      }
    }
  }
  if (violated > 0) outcome.violated = true;

  nlohmann::json j;
  j["kind"] = "harnack-verify";
  j["statement"] = statement_id(statement);
  j["constants"] = constants.to_json();
  j["instances"] = rows;
  j["tally"] = {{"holds", holds},
                {"violated", violated},
                {"inconclusive", inconclusive},
                {"total", holds + violated + inconclusive}};
  outcome.summary = j;
  files.emplace_back(outcome.name + ".csv", csv.str());
  files.emplace_back(outcome.name + ".gp",
                     detail::gnuplot_verify_script(outcome.name));
}

inline void fit_constant(const ConfigValue& sc, std::uint64_t seed,
                         const std::string& out_dir, ScenarioOutcome& outcome,
                         FileList& files) {
  (void)out_dir;
  SdeProblem problem = problem_from_config(sc);
  const ConfigValue& params = sc.at("params");
  Statement statement = parse_statement(params.at("statement").as_string());
  TestFunction f = test_function_from_config(sc, problem.dim);
  auto instances = detail::instances_from_config(sc, problem.dim);
  std::size_t n = static_cast<std::size_t>(params.at("n").as_integer());
  double dt = params.at("dt").as_number();

  nlohmann::json j;
  double fitted = 0.0;
  if (statement == Statement::stable_harnack) {
    fitted = fit_stable_constant(problem, instances, f, n, dt, seed);
    j["statement"] = statement_id(statement);
    j["C"] = fitted;
    j["instances"] = instances.size();
    j["n"] = n;
  } else {
    double delta = params.at("delta").as_number();
    EmpiricalConstant fit = fit_empirical_constant(
        statement, problem, instances, f, delta, n, dt, seed);
    fitted = fit.value;
    j = fit.to_json();

    std::ostringstream csv;
    csv << "instance,x,y,s,t,constant\n";
    for (std::size_t i = 0; i < fit.per_instance.size(); ++i) {
      const auto& inst = instances[i];
      csv << i << ',';
      for (Eigen::Index k = 0; k < inst.x.size(); ++k)
        csv << (k ? ";" : "") << inst.x[k];
      csv << ',';
      for (Eigen::Index k = 0; k < inst.y.size(); ++k)
        csv << (k ? ";" : "") << inst.y[k];
      csv << ',' << inst.s << ',' << inst.t << ',' << fit.per_instance[i]
          << '\n';
    }
    files.emplace_back(outcome.name + ".csv", csv.str());
  }
  j["kind"] = "fit-constant";
  if (const ConfigValue* range = params.find("expected-range")) {
    auto r = range->as_number_array();
    if (r.size() != 2)
      throw ConfigurationError("expected-range needs [low, high]");
    j["expected-range"] = {r[0], r[1]};
    j["in-expected-range"] = (fitted >= r[0] && fitted <= r[1]);
  }
  outcome.summary = j;
}

inline void coupling(const ConfigValue& sc, std::uint64_t seed,
                     const std::string& out_dir, ScenarioOutcome& outcome,
                     FileList& files) {
  (void)out_dir;
  (void)files;
  SdeProblem problem = problem_from_config(sc);
  const ConfigValue& params = sc.at("params");
  Vec x = vec_from_config(params.at("x"), problem.dim);
  Vec y = vec_from_config(params.at("y"), problem.dim);
  double K = params.number_or("K", 0.0);
  double horizon = params.number_or("T", problem.horizon);
  std::size_t n = static_cast<std::size_t>(params.at("n").as_integer());
  double dt = params.at("dt").as_number();

  CouplingStats stats =
      simulate_coupled_pair(problem, x, y, K, horizon, n, dt, seed);
  std::vector<double> taus;
  for (double tau : stats.tau)
    if (std::isfinite(tau)) taus.push_back(tau);
  std::sort(taus.begin(), taus.end());

  nlohmann::json j;
  j["kind"] = "coupling";
  j["n-pairs"] = stats.n_pairs;
  j["eps"] = stats.eps;
  j["success-fraction"] = stats.success_fraction;
  j["girsanov-mean"] = detail::json_estimate(stats.girsanov_mean);
  j["drift-condition-violations"] = stats.drift_condition_violations;
  j["drift-condition-warning"] = stats.drift_condition_warning;
  if (!taus.empty()) {
    j["tau"] = {{"median", quantile_sorted(taus, 0.5)},
                {"q90", quantile_sorted(taus, 0.9)},
                {"max", taus.back()}};
  }
  if (stats.success_fraction < params.number_or("min-success", 0.0))
    outcome.violated = true;
  outcome.summary = j;
}

inline void kernel_bounds(const ConfigValue& sc, std::uint64_t seed,
                          const std::string& out_dir, ScenarioOutcome& outcome,
                          FileList& files) {
  (void)out_dir;
  (void)files;
  SdeProblem problem = problem_from_config(sc);
  const ConfigValue& params = sc.at("params");
  double t = params.at("t").as_number();
  std::size_t n = static_cast<std::size_t>(params.at("n").as_integer());
  double dt = params.at("dt").as_number();

  std::vector<double> starts = params.at("starts").as_number_array();
  std::vector<double> offsets;
  if (const ConfigValue* o = params.find("offsets"))
    offsets = o->as_number_array();
  else {
    double span = 8.0 * std::pow(t, 1.0 / problem.alpha);
    int count = static_cast<int>(params.number_or("offset-count", 33.0));
    if (count < 2) throw ConfigurationError("offset-count must be >= 2");
    for (int i = 0; i < count; ++i)
      offsets.push_back(-span + 2.0 * span * i / (count - 1));
  }
  std::vector<double> z_probes;
  if (const ConfigValue* z = params.find("z-probes"))
    z_probes = z->as_number_array();
  else
    z_probes = offsets;

  KernelBoundsReport report =
      verify_kernel_bounds(problem, t, starts, offsets, z_probes, n, dt, seed);
  nlohmann::json j;
  j["kind"] = "kernel-bounds";
  j["t"] = report.t;
  j["alpha"] = report.alpha;
  j["c-fit"] = report.c_fit;
  j["density-over-envelope"] = report.sup_density_over_envelope;
  j["envelope-over-density"] = report.sup_envelope_over_density;
  j["envelope"] = {{"used", report.den1_used}, {"dropped", report.den1_dropped}};
  j["comparison"] = {{"all-hold", report.den2_all_hold},
                     {"min-margin", report.den2_min_margin},
                     {"checked", report.den2_checked},
                     {"dropped", report.den2_dropped}};
  if (!report.den2_all_hold) outcome.violated = true;
  outcome.summary = j;
}

inline void gradient_estimate(const ConfigValue& sc, std::uint64_t seed,
                              const std::string& out_dir,
                              ScenarioOutcome& outcome, FileList& files) {
  (void)out_dir;
  (void)files;
  SdeProblem problem = problem_from_config(sc);
  const ConfigValue& params = sc.at("params");
  TestFunction f = test_function_from_config(sc, problem.dim);
  double t = params.at("t").as_number();
  std::size_t n = static_cast<std::size_t>(params.at("n").as_integer());
  double dt = params.at("dt").as_number();
  Vec x = vec_from_config(params.at("x"), problem.dim);

  GradientRatioReport report =
      estimate_gradient_ratio(problem, f, t, x, n, dt, seed);
  nlohmann::json j;
  j["kind"] = "gradient-estimate";
  j["x"] = detail::json_point(x);
  j["t"] = t;
  j["grad-norm-sq"] = report.grad_norm_sq;
  j["grad-norm-sq-std-error"] = report.grad_norm_sq_se;
  j["rhs"] = detail::json_estimate(report.rhs);
  j["ratio"] = report.ratio;
  j["ratio-std-error"] = report.ratio_se;
  j["fd-step"] = report.fd_step;
  double bound = params.number_or("ratio-bound", 0.0);
  if (bound > 0) {
    j["ratio-bound"] = bound;
    bool within = report.ratio <= bound + z99 * report.ratio_se;
    j["within-bound"] = within;
    if (!within) outcome.violated = true;
  }
  outcome.summary = j;
}

inline void mollification(const ConfigValue& sc, std::uint64_t seed,
                          const std::string& out_dir, ScenarioOutcome& outcome,
                          FileList& files) {
  (void)out_dir;
  SdeProblem problem = problem_from_config(sc);
  CoefficientField sigma = diffusion_field_from_config(sc);
  const ConfigValue& params = sc.at("params");
  double t = params.at("t").as_number();
  std::size_t n = static_cast<std::size_t>(params.at("n").as_integer());
  double dt = params.at("dt").as_number();
  Vec x = vec_from_config(params.at("x"), problem.dim);
  std::vector<int> schedule;
  for (double v : params.at("schedule").as_number_array())
    schedule.push_back(static_cast<int>(v));

  MollificationReport report =
      mollification_convergence(sigma, x, t, schedule, n, dt, seed);
  nlohmann::json j;
  j["kind"] = "mollification";
  j["schedule"] = report.schedule;
  j["reference-n"] = report.reference_n;
  {
    nlohmann::json d = nlohmann::json::array();
    for (const auto& e : report.distance) d.push_back(detail::json_estimate(e));
    j["distances"] = d;
  }
  j["nonincreasing-within-error"] = report.nonincreasing_within_error;
  outcome.summary = j;

  std::ostringstream csv;
  csv << "level,distance,std_error\n";
  for (std::size_t i = 0; i < report.schedule.size(); ++i)
    csv << report.schedule[i] << ',' << report.distance[i].mean << ','
        << report.distance[i].std_error << '\n';
  files.emplace_back(outcome.name + ".csv", csv.str());
}

inline void interpolation_identity(const ConfigValue& sc, std::uint64_t seed,
                                   const std::string& out_dir,
                                   ScenarioOutcome& outcome, FileList& files) {
  (void)out_dir;
  (void)files;
  SdeProblem problem = problem_from_config(sc);
  const ConfigValue& params = sc.at("params");
  TestFunction f = test_function_from_config(sc, problem.dim);
  double s = params.number_or("s", 0.0);
  double t = params.at("t").as_number();
  Vec x = vec_from_config(params.at("x"), problem.dim);

  InterpolationOptions opts;
  opts.nodes = static_cast<int>(params.number_or("nodes", 5.0));
  opts.n_outer = static_cast<std::size_t>(params.number_or("n-outer", 20000.0));
  opts.n_inner = static_cast<std::size_t>(params.number_or("n-inner", 800.0));
  opts.dt = params.number_or("dt", 1e-2);

  std::string inner = params.string_or("inner", "nested");
  if (inner == "heat-exact") {
    // Closed-form inner semigroup, available only for the drift-free Brownian
    // problem with the truncated-exponential observable.
    const ConfigValue& p = sc.at("problem");
    if (p.string_or("drift", "zero") != "zero" ||
        p.string_or("driver", "brownian") != "brownian" ||
        p.string_or("diffusion", "identity") != "identity" ||
        sc.at("f").at("preset").as_string() != "trunc-exp")
      throw ConfigurationError(
          "inner = \"heat-exact\" needs zero drift, identity diffusion, "
          "brownian driver and the trunc-exp observable");
    HeatInnerOracle oracle{sc.at("f").number_or("scale", 1.0),
                           sc.at("f").number_or("rate", 1.0), t};
    opts.inner_value = [oracle](double r, const Vec& z) {
      return oracle.value(r, z);
    };
    opts.inner_gradient = [oracle](double r, const Vec& z) {
      return oracle.gradient(r, z);
    };
  } else if (inner != "nested") {
    throw ConfigurationError("unknown inner evaluator: " + inner);
  }

  InterpolationReport report =
      verify_interpolation_identity(problem, f, s, t, x, opts, seed);
  nlohmann::json j;
  j["kind"] = "interpolation-identity";
  j["x"] = detail::json_point(x);
  j["s"] = s;
  j["t"] = t;
  j["nodes"] = report.nodes;
  j["node-means"] = report.node_means;
  j["mean-log"] = report.mean_log;
  j["log-mean"] = report.log_mean;
  j["integral"] = report.integral;
  j["residual"] = report.residual;
  j["residual-std-error"] = report.residual_se;
  j["inner-evaluations"] = report.inner_evaluations;
  j["inner-warnings"] = report.inner_warnings;
  j["verdict"] = to_string(report.verdict);
  if (report.verdict == Verdict::violated) outcome.violated = true;
  outcome.summary = j;
}

}  // namespace handlers

// ---------------------------------------------------------------------------
// Orchestration.
// ---------------------------------------------------------------------------

inline ScenarioOutcome run_scenario(const ConfigValue& root,
                                    const ScenarioSpec& spec,
                                    const RunOptions& options) {
  ScenarioOutcome outcome;
  outcome.name = spec.name;
  outcome.kind = spec.kind;
  std::uint64_t seed = detail::scenario_seed(root, spec, options);
  detail::ensure_directory(options.out_dir);
  handlers::FileList files;
  try {
    if (spec.kind == "condition-check")
      handlers::condition_check(spec.body, seed, options.out_dir, outcome,
                                files);
    else if (spec.kind == "transform-build")
      handlers::transform_build(spec.body, seed, options.out_dir, outcome,
                                files);
    else if (spec.kind == "harnack-verify")
      handlers::harnack_verify(spec.body, seed, options.out_dir, outcome,
                               files);
    else if (spec.kind == "fit-constant")
      handlers::fit_constant(spec.body, seed, options.out_dir, outcome, files);
    else if (spec.kind == "coupling")
      handlers::coupling(spec.body, seed, options.out_dir, outcome, files);
    else if (spec.kind == "kernel-bounds")
      handlers::kernel_bounds(spec.body, seed, options.out_dir, outcome,
                              files);
    else if (spec.kind == "gradient-estimate")
      handlers::gradient_estimate(spec.body, seed, options.out_dir, outcome,
                                  files);
    else if (spec.kind == "mollification")
      handlers::mollification(spec.body, seed, options.out_dir, outcome,
                              files);
    else if (spec.kind == "interpolation-identity")
      handlers::interpolation_identity(spec.body, seed, options.out_dir,
                                       outcome, files);
    else
      throw ConfigurationError("unknown scenario kind: " + spec.kind);
    outcome.ok = true;
  } catch (const ConfigurationError&) {
    throw;  // config problems abort the whole run with exit code 2
  } catch (const std::exception& e) {
    outcome.ok = false;
    outcome.error = e.what();
  }

  outcome.summary["name"] = spec.name;
  outcome.summary["seed"] = seed;
  outcome.summary["tool-version"] = version_string;
  if (!outcome.ok) outcome.summary["error"] = outcome.error;

  const std::string json_path = options.out_dir + "/" + spec.name + ".json";
  detail::write_file_atomic(json_path, outcome.summary.dump(2) + "\n");
  outcome.files_written.push_back(json_path);
  for (const auto& [fname, content] : files) {
    const std::string path = options.out_dir + "/" + fname;
    detail::write_file_atomic(path, content);
    outcome.files_written.push_back(path);
  }
  return outcome;
}

inline RunResult run_config(const ConfigValue& root,
                            const RunOptions& options) {
  RunResult result;
  auto scenarios = load_scenarios(root);
  RunOptions effective = options;
  if (effective.out_dir.empty())
    effective.out_dir = root.string_or("out-dir", "out");
  for (const auto& spec : scenarios) {
    ScenarioOutcome outcome = run_scenario(root, spec, effective);
    if (!outcome.ok || outcome.violated) result.exit_code = 1;
    result.outcomes.push_back(std::move(outcome));
  }
  return result;
}

inline RunResult run_config_file(const std::string& path,
                                 const RunOptions& options) {
  ConfigValue root = parse_config_file(path);
  return run_config(root, options);
}

}  // namespace hlab
