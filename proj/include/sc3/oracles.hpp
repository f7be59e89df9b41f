#pragma once

#include <functional>
#include <vector>

#include "sc3/baselines.hpp"
#include "sc3/critic.hpp"

namespace sc3 {

struct GridSpec {
  int points = 15;            // grid points per axis, >= 3
  int refine_rounds = 3;      // refinements around the incumbent
  double refine_factor = 10.0;
};

struct GridResult {
  Allocation alloc;
  double objective = kInfeasibleCost;
  double bracket = 0.0;  // largest neighbor-objective excursion at the optimum
  bool feasible = false;
};

// Brute-force allocation reference for K <= 2: scans budget split fractions
// with iterative refinement, evaluating loops in closed form at tight rates.
GridResult grid_search_allocation(const Pairing& pairing, const Topology& topo,
                                  const ChannelRealization& ch, const LoopBudget& tb,
                                  const ResourceBudget& rb, const GridSpec& spec = {},
                                  bool use_sensing_cap = false);

struct FiniteDiffReport {
  Eigen::VectorXd numeric;
  Eigen::VectorXd analytic;
  double max_rel_error = 0.0;
};

// Central-difference gradient against supplied analytic values.
FiniteDiffReport finite_diff_check(const std::function<double(const Eigen::VectorXd&)>& fn,
                                   const Eigen::VectorXd& point, double step,
                                   const Eigen::VectorXd& analytic);

double finite_diff_second(const std::function<double(double)>& fn, double x, double step);

}  // namespace sc3
