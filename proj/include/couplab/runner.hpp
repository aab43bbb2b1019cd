#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "couplab/config.hpp"
#include "couplab/report.hpp"

namespace couplab {

std::string_view library_version();

struct RunOverrides {
  std::optional<std::uint64_t> seed;   // replaces the seed list
  std::optional<std::size_t> threads;
  std::optional<std::string> output_dir;
  std::filesystem::path base_dir;      // a relative chain_file resolves here
};

ExperimentConfig apply_overrides(ExperimentConfig config, const RunOverrides& overrides);

// Named text artifact written next to the main table.
struct Artifact {
  std::string name;
  std::string content;
};

struct ExperimentOutcome {
  ConvergenceReport report;
  std::vector<Artifact> extra;  // additional tables in a fixed order
};

// Runs the experiment without touching the file system (chain files are
// read). Throws ConfigError for knobs the kind does not use.
ExperimentOutcome evaluate_experiment(const ExperimentConfig& config, const std::filesystem::path& base_dir = {});

struct RunResult {
  ConvergenceReport report;
  std::filesystem::path output_dir;
  std::vector<std::string> files;  // relative to output_dir, in write order
  int exit_code() const { return couplab::exit_code(report.verdict); }
};

// Validates, evaluates and writes <kind>.csv, the extra tables, one .dat per
// series, summary.txt, config.json (effective config) and manifest.json.
RunResult run_experiment(const ExperimentConfig& config, const RunOverrides& overrides = {});

// Stable text listing of every catalog instance and experiment kind.
std::string list_experiments();

// Config for the `example` subcommand.
ExperimentConfig example_config(std::string_view id, std::string output_dir, std::uint64_t seed = 1);

}  // namespace couplab
