#pragma once

#include <string>
#include <vector>

#include "sc3/actor.hpp"
#include "sc3/channel.hpp"
#include "sc3/critic.hpp"

namespace sc3 {

struct ExperimentConfig {
  std::vector<std::string> schemes;
  std::string sweep_axis = "B_max";  // B_max | f_max | sensing_rate
  std::vector<double> sweep_values;
  int realizations = 20;
  std::uint64_t master_seed = 1;
  double omega = 0.3;
  double delta = 15.0;
  long long enum_cap = 200000;
  int eval_candidates = 16;
};

struct ScenarioConfig {
  TopologyConfig topology;
  EnvParams env;
  ResourceBudget budgets;
  LoopBudget loop;
  SolveOptions solver;
  TrainConfig train;
  ExperimentConfig experiment;

  std::string path;
  std::string file_hash;                   // 64-bit FNV-1a of the raw bytes, hex
  std::vector<std::string> defaults_used;  // fields resolved from defaults
};

// Parses and validates a scenario file (JSON). Unknown keys are rejected by
// name; N0 is required; defaulted fields are echoed in defaults_used.
ScenarioConfig load_scenario(const std::string& path);

// Same validation applied to in-memory text (tests, tooling).
ScenarioConfig parse_scenario(const std::string& text, const std::string& path = "<memory>");

// One-line provenance summary: path, hash, and applied defaults.
std::string scenario_provenance(const ScenarioConfig& cfg);

}  // namespace sc3
