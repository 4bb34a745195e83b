// Command-line front end: runs scenario files, lists presets, fits constants.
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hlab/presets.hpp"
#include "hlab/runner.hpp"
#include "hlab/version.hpp"

namespace {

struct CliArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::string out_dir;
  bool json_stdout = false;
};

int effective_jobs(const std::optional<int>& flag) {
  if (flag) return std::max(1, *flag);
  if (const char* env = std::getenv("HARNACK_LAB_JOBS")) {
    try {
      return std::max(1, std::stoi(env));
    } catch (...) {
      std::cerr << "warning: ignoring malformed HARNACK_LAB_JOBS value '"
                << env << "'\n";
    }
  }
  return 1;
}

void print_outcome_line(const hlab::ScenarioOutcome& outcome) {
  const char* status = !outcome.ok ? "error"
                       : outcome.violated ? "VIOLATED"
                                          : "ok";
  std::cout << "[" << status << "] " << outcome.name << " (" << outcome.kind
            << ")";
  if (!outcome.ok) std::cout << ": " << outcome.error;
  std::cout << "\n";
  for (const auto& f : outcome.files_written)
    std::cout << "    wrote " << f << "\n";
}

int finish_run(const hlab::RunResult& result, bool json_stdout) {
  if (json_stdout) {
    nlohmann::json all = nlohmann::json::array();
    for (const auto& outcome : result.outcomes) all.push_back(outcome.summary);
    std::cout << all.dump(2) << "\n";
  } else {
    for (const auto& outcome : result.outcomes) print_outcome_line(outcome);
    int bad = 0;
    for (const auto& outcome : result.outcomes)
      if (!outcome.ok || outcome.violated) ++bad;
    std::cout << result.outcomes.size() << " scenario(s), " << bad
              << " problem(s)\n";
  }
  return result.exit_code;
}

int run_command(const CliArgs& args, const std::string& only_kind) {
  hlab::RunOptions options;
  options.seed = args.seed;
  options.jobs = effective_jobs(args.jobs);
  options.out_dir = args.out_dir;
  options.json_stdout = args.json_stdout;

  hlab::ConfigValue root = hlab::parse_config_file(args.config);
  if (!only_kind.empty()) {
    // Keep only scenarios of the requested kind.
    hlab::ConfigValue filtered = root;
    if (hlab::ConfigValue* arr = filtered.find_mutable("scenario")) {
      std::vector<hlab::ConfigValue> kept;
      for (auto& sc : arr->as_array_mutable())
        if (sc.at("kind").as_string() == only_kind) kept.push_back(sc);
      if (kept.empty()) {
        std::cerr << "error: config has no scenarios of kind '" << only_kind
                  << "'\n";
        return 2;
      }
      arr->as_array_mutable() = std::move(kept);
    }
    return finish_run(hlab::run_config(filtered, options), args.json_stdout);
  }
  return finish_run(hlab::run_config(root, options), args.json_stdout);
}

void print_presets(bool as_json) {
  auto catalog = hlab::preset_catalog();
  if (as_json) {
    nlohmann::json all = nlohmann::json::array();
    for (const auto& info : catalog) {
      nlohmann::json params = nlohmann::json::array();
      for (const auto& p : info.params)
        params.push_back({{"name", p.name},
                          {"default", p.default_value},
                          {"doc", p.doc}});
      all.push_back({{"name", info.name},
                     {"kind", info.kind},
                     {"doc", info.doc},
                     {"params", params}});
    }
    std::cout << all.dump(2) << "\n";
    return;
  }
  std::string kind;
  for (const auto& info : catalog) {
    if (info.kind != kind) {
      kind = info.kind;
      std::cout << "\n" << kind << ":\n";
    }
    std::cout << "  " << info.name << " - " << info.doc << "\n";
    for (const auto& p : info.params)
      std::cout << "      " << p.name << " (default " << p.default_value
                << "): " << p.doc << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Drift-regularizing transformations and Harnack-type bound "
               "verification for SDE semigroups"};
  app.require_subcommand(1);

  CliArgs args;

  auto add_common = [&args](CLI::App* cmd) {
    cmd->add_option("-c,--config", args.config, "scenario file (TOML)")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("-s,--seed", args.seed,
                    "override the config-level base seed");
    cmd->add_option("-j,--jobs", args.jobs,
                    "worker threads (default: HARNACK_LAB_JOBS or 1)");
    cmd->add_option("-o,--out-dir", args.out_dir,
                    "output directory (default: config out-dir or ./out)");
    cmd->add_flag("--json", args.json_stdout,
                  "print scenario summaries as JSON on stdout");
  };

  CLI::App* run = app.add_subcommand("run", "run every scenario in a config");
  add_common(run);

  CLI::App* fit = app.add_subcommand(
      "fit-constant", "run only the fit-constant scenarios in a config");
  add_common(fit);

  bool presets_json = false;
  CLI::App* presets =
      app.add_subcommand("list-presets", "list coefficient and observable presets");
  presets->add_flag("--json", presets_json, "print the catalog as JSON");

  CLI::App* version = app.add_subcommand("version", "print the tool version");

  CLI11_PARSE(app, argc, argv);

  try {
    if (version->parsed()) {
      std::cout << "harnack-lab " << hlab::version_string << "\n";
      return 0;
    }
    if (presets->parsed()) {
      print_presets(presets_json);
      return 0;
    }
    if (run->parsed()) return run_command(args, "");
    if (fit->parsed()) return run_command(args, "fit-constant");
  } catch (const hlab::ConfigurationError& e) {
    std::cerr << "config error";
    if (e.line > 0) {
      std::cerr << " at line " << e.line;
      if (e.column > 0) std::cerr << ", column " << e.column;
    }
    std::cerr << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
