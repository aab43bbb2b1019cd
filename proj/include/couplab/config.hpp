#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "couplab/chain.hpp"

namespace couplab {

inline constexpr int config_version = 1;

// Experiment kinds accepted by the runner, in catalog order.
const std::vector<std::string>& experiment_kinds();
std::string_view kind_description(std::string_view kind);

struct ExperimentGrid {
  std::vector<std::size_t> horizons;  // n (or lags for mixing)
  std::vector<double> epsilons;
  std::vector<double> lambdas;
  std::vector<double> dts;
  std::vector<double> radii;
  friend bool operator==(const ExperimentGrid&, const ExperimentGrid&) = default;
};

struct ModelRef {
  std::string name;                      // built-in delay model
  std::map<std::string, double> params;
  friend bool operator==(const ModelRef&, const ModelRef&) = default;
};

// JSON document, version 1. Keys outside the schema are rejected; see
// docs/config-schema.md.
struct ExperimentConfig {
  int version = config_version;
  std::string kind;
  std::string instance;                   // catalog id; empty when chain_file is set or kind is sdde
  std::map<std::string, double> params;   // instance parameters
  std::string chain_file;                 // optional chain definition file
  ExperimentGrid grid;
  std::size_t reps = 200;
  std::vector<std::uint64_t> seeds;       // explicit; the first drives every stream
  std::string output_dir;
  std::size_t threads = 1;
  std::map<std::string, double> tolerances;  // verdict thresholds by name
  std::map<std::string, double> options;     // kind-specific knobs (x0, t_final, ...)
  ModelRef model;                            // sdde only
  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// Throws ConfigError; syntax errors carry "line L, column C", schema errors
// the offending key path.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

// Canonical form: sorted keys, two-space indent, shortest round-trip doubles.
std::string serialize_config(const ExperimentConfig& config);

// Semantic checks: known kind, grids required by the kind nonempty and in
// range, explicit seeds, resource caps. Throws ConfigError.
void validate_config(const ExperimentConfig& config);

// 64-bit FNV-1a of the canonical serialization, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

// Chain definition file: {"format": "couplab-chain", "version": 1,
// "points": [[...], ...], "matrix": [[...], ...], "labels": [...], "metric": name}.
struct ChainDefinition {
  FiniteChain chain;
  std::string metric = "euclidean";
};

ChainDefinition parse_chain_definition(std::string_view text);
ChainDefinition load_chain_definition(const std::filesystem::path& path);
std::string serialize_chain_definition(const ChainDefinition& def);

}  // namespace couplab
