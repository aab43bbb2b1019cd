#include <cstdint>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "couplab/config.hpp"
#include "couplab/errors.hpp"
#include "couplab/runner.hpp"

namespace {

constexpr int error_status = 1;

int report(const couplab::RunResult& result) {
  std::cout << result.report.summary();
  std::cout << "output: " << result.output_dir.string() << '\n';
  for (const std::string& f : result.files) std::cout << "  " << f << '\n';
  return result.exit_code();
}

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const couplab::ConfigError*>(&e)) return "config error";
  if (dynamic_cast<const couplab::ResourceError*>(&e)) return "resource error";
  if (dynamic_cast<const couplab::ModelError*>(&e)) return "model error";
  if (dynamic_cast<const couplab::IntegrationError*>(&e)) return "integration error";
  if (dynamic_cast<const couplab::SimulationError*>(&e)) return "simulation error";
  if (dynamic_cast<const couplab::SolverError*>(&e)) return "solver error";
  if (dynamic_cast<const couplab::InputError*>(&e)) return "input error";
  return "error";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"couplab: coupling diagnostics for Markov chains and delay equations"};
  app.set_version_flag("--version", std::string(couplab::library_version()));
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;

  CLI::App* run = app.add_subcommand("run", "Run the experiment described by a config file");
  run->add_option("--config", config_path, "Config file (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "Output directory (overrides output_dir)");
  run->add_option("--seed", seed, "Seed (replaces the config's seed list)");
  run->add_option("--threads", threads, "Worker threads (0 = all cores)");

  app.add_subcommand("list", "List built-in instances and experiment kinds");

  std::string example_id;
  std::vector<std::string> example_params;
  CLI::App* example = app.add_subcommand("example", "Run the self-checking assertions of a catalog instance");
  example->add_option("id", example_id, "Instance id, e.g. 5.2 or aperiodic-3")->required();
  example->add_option("--param", example_params, "Instance parameter key=value (repeatable)");
  example->add_option("--out", out_dir, "Output directory");
  example->add_option("--seed", seed, "Seed");

  CLI::App* validate = app.add_subcommand("validate-config", "Parse and validate a config file");
  validate->add_option("--config", config_path, "Config file (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int status = app.exit(e);
    return status == 0 ? 0 : error_status;
  }

  try {
    if (app.got_subcommand("list")) {
      std::cout << couplab::list_experiments();
      return 0;
    }
    if (app.got_subcommand("validate-config")) {
      const couplab::ExperimentConfig config = couplab::load_config(config_path);
      couplab::validate_config(config);
      std::cout << "valid: kind " << config.kind << ", hash " << couplab::config_hash(config) << '\n';
      return 0;
    }
    if (app.got_subcommand("example")) {
      couplab::ExperimentConfig config =
          couplab::example_config(example_id, out_dir.value_or("couplab-out/example-" + example_id), seed.value_or(1));
      for (const std::string& kv : example_params) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw couplab::ConfigError("--param expects key=value, got '" + kv + "'");
        try {
          config.params[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
        } catch (const std::logic_error&) {
          throw couplab::ConfigError("--param " + kv + ": value is not a number");
        }
      }
      return report(couplab::run_experiment(config));
    }
    const std::filesystem::path path(config_path);
    couplab::RunOverrides overrides;
    overrides.seed = seed;
    overrides.threads = threads;
    overrides.output_dir = out_dir;
    overrides.base_dir = path.parent_path();
    return report(couplab::run_experiment(couplab::load_config(path), overrides));
  } catch (const std::exception& e) {
    std::cerr << "couplab: " << error_kind(e) << ": " << e.what() << '\n';
    return error_status;
  }
}
