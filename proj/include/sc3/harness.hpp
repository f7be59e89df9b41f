#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sc3/baselines.hpp"
#include "sc3/scenario.hpp"

namespace sc3 {

struct ResultRecord {
  std::string scheme;
  double sweep_value = 0.0;
  int realization = 0;
  std::uint64_t seed = 0;          // realization stream id
  std::vector<double> d_sc3;       // per loop
  std::vector<double> loop_cost;   // per loop
  double total_cost = kInfeasibleCost;
  double solve_seconds = 0.0;      // excluded from deterministic outputs
  bool feasible = false;
  std::string error;               // nonempty when the scheme failed
};

struct AggregateRow {
  std::string scheme;
  double sweep_value = 0.0;
  int count = 0;
  int feasible = 0;
  double mean_cost = 0.0;    // over feasible records
  double stderr_cost = 0.0;  // standard error over feasible records
};

struct SweepResult {
  std::vector<ResultRecord> records;
  std::vector<AggregateRow> aggregates;
};

// Runs every (sweep value x realization x scheme) cell; cells execute on
// `jobs` threads with disjoint RNG streams and are collected in a fixed
// order, so outputs are independent of the thread count.
SweepResult run_sweep(const ScenarioConfig& cfg, int jobs = 1,
                      const PairingPolicy* policy = nullptr);

struct TrainOutput {
  std::vector<EpochRecord> records;  // only the epochs run by this call
  LoacState state;
  Topology topology;
};

// Trains from scratch, or resumes when checkpoint_text is nonempty.
TrainOutput train_command(const ScenarioConfig& cfg,
                          const std::string& checkpoint_text = "",
                          int until_epoch = -1);

// Rebuilds the scenario topology (deterministic in the master seed).
Topology scenario_topology(const ScenarioConfig& cfg);

// CSV writers; doubles print with round-trip precision.
void write_records_csv(const std::string& path, const std::vector<ResultRecord>& records);
void write_aggregate_csv(const std::string& path, const std::vector<AggregateRow>& rows);
void write_timing_csv(const std::string& path, const std::vector<ResultRecord>& records);
void write_training_csv(const std::string& path, const std::vector<EpochRecord>& records);

// Static SVG line charts from the CSVs above.
void plot_sweep_csv(const std::string& aggregate_csv, const std::string& svg_path);
void plot_training_csv(const std::string& training_csv, const std::string& svg_path);

// Self-check suites (assignment, allocation oracle, sampler); appends one
// line per suite to `report` and returns overall success.
bool verify_command(std::uint64_t seed, std::string& report);

}  // namespace sc3
