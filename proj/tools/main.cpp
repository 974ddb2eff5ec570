// transport-cli run <experiment> [--config PATH] [--check] [--jobs N] [--seed S] [--out DIR] [--key value ...]
// transport-cli compare DIR_A DIR_B
//
// Exit codes: 0 success, 1 failed check or differing runs, 2 invalid
// configuration, 3 numerical failure.

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "transport/cli.hpp"

using namespace transport::cli;

namespace {

void set_log_level() {
  const char* env = std::getenv("SOLVER_LOG_LEVEL");
  const std::string v = env ? env : "info";
  if (v == "error")
    spdlog::set_level(spdlog::level::err);
  else if (v == "info")
    spdlog::set_level(spdlog::level::info);
  else if (v == "debug")
    spdlog::set_level(spdlog::level::debug);
  else
    throw ConfigError("SOLVER_LOG_LEVEL must be error, info or debug, got '" + v + "'");
}

// Splits --key value and --key=value pairs for keys CLI11 does not know out
// of the argument list, so that their values never land in a positional.
std::map<std::string, std::string> split_overrides(std::vector<std::string>& args) {
  static const std::set<std::string> known{"config", "check", "jobs", "seed", "out", "help", "threshold"};
  std::map<std::string, std::string> out;
  std::vector<std::string> kept;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    std::string key = a.size() > 2 && a.starts_with("--") ? a.substr(2) : std::string();
    const auto eq = key.find('=');
    if (key.empty() || known.count(key.substr(0, eq))) {
      kept.push_back(a);
      continue;
    }
    std::string value;
    if (eq != std::string::npos) {
      value = key.substr(eq + 1);
      key.erase(eq);
    } else {
      if (i + 1 >= args.size()) throw ConfigError("missing value for --" + key);
      value = args[++i];
    }
    std::replace(key.begin(), key.end(), '-', '_');
    out[key] = value;
  }
  args = kept;
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive Petrov-Galerkin transport, reduced basis and sparse discrete ordinates experiments"};
  app.require_subcommand(1);

  auto* run_cmd = app.add_subcommand("run", "Run an experiment and write its artifacts");
  std::string experiment, config_path, out_dir;
  bool check = false;
  int jobs = 0;
  std::uint64_t seed = 0;
  run_cmd->add_option("experiment", experiment, "Experiment name (or 'experiment' in the config file)");
  run_cmd->add_option("--config", config_path, "Key-value configuration file")->check(CLI::ExistingFile);
  run_cmd->add_flag("--check", check, "Exit 1 when an acceptance check fails");
  auto* jobs_opt = run_cmd->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  auto* seed_opt = run_cmd->add_option("--seed", seed, "Random seed");
  auto* out_opt = run_cmd->add_option("--out", out_dir, "Output directory");

  auto* cmp_cmd = app.add_subcommand("compare", "Compare the CSVs of two run directories");
  std::string dir_a, dir_b;
  double threshold = 1e-12;
  cmp_cmd->add_option("a", dir_a)->required();
  cmp_cmd->add_option("b", dir_b)->required();
  cmp_cmd->add_option("--threshold", threshold, "Flag relative differences above this")->capture_default_str();

  std::vector<std::string> args(argv + 1, argv + argc);
  std::map<std::string, std::string> overrides;
  try {
    overrides = split_overrides(args);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    set_log_level();
    if (*cmp_cmd) {
      if (!overrides.empty()) throw ConfigError("compare takes no experiment keys");
      const CompareReport r = compare_runs(dir_a, dir_b, threshold);
      print_report(std::cout, r);
      return r.differs ? 1 : 0;
    }

    std::map<std::string, std::string> file;
    if (!config_path.empty()) {
      std::ifstream is(config_path);
      file = parse_config(is, config_path);
    }
    if (!experiment.empty()) overrides["experiment"] = experiment;
    if (*jobs_opt) overrides["jobs"] = std::to_string(jobs);
    if (*seed_opt) overrides["seed"] = std::to_string(seed);
    if (*out_opt) overrides["out"] = out_dir;
    const ExperimentConfig cfg = resolve_config(file, overrides);

    spdlog::info("running {} into {}", cfg.experiment, cfg.out.string());
    const RunReport rep = run(cfg);
    std::cout << rep.summary;
    for (const auto& f : rep.files) spdlog::info("wrote {}", (cfg.out / f).string());
    if (check) {
      for (const auto& v : rep.violations) std::cout << "CHECK FAILED: " << v << '\n';
      if (!rep.violations.empty()) return 1;
      std::cout << "all checks passed\n";
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
