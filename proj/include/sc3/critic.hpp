#pragma once

#include <limits>
#include <vector>

#include "sc3/channel.hpp"
#include "sc3/model.hpp"

namespace sc3 {

// Sensor index paired with each actuator (size K, entries into the sensor list).
using Pairing = std::vector<int>;

// Per-cycle time budgets, shared by all loops.
struct LoopBudget {
  double t_u = 4e-3;  // s
  double t_d = 1e-3;  // s
  double t_c = 4e-3;  // s
};

struct ResourceBudget {
  double B_max = 1e6;     // Hz
  double p_d_max = 4.0;   // W, total DL power
  double f_max = 1e9;     // Hz, total CPU
  double N0 = 3.98e-21;   // W/Hz
};

struct SolveOptions {
  double gap_tol = 1e-6;     // relative objective gap
  double feas_tol = 1e-8;    // relative constraint tolerance
  double newton_tol = 1e-9;
  int max_outer = 50;
  int max_inner = 200;
  bool sensing_cap = false;  // enable D_u <= D^s
};

// Everything the continuous solver needs about one loop.
struct LoopModel {
  double snr_num_ul = 0.0;  // p_u_max |h_u|^2 / N0, Hz
  double snr_num_dl = 0.0;  // |h_d|^2 / N0, Hz/W
  double gamma = 0.0;
  double rho = 0.0;
  double sensing_cap = std::numeric_limits<double>::infinity();  // bits/cycle
  double p_u = 0.0;  // transmit power actually used (= sensor max)
  LoopCostParams cost;
};

struct LoopAllocation {
  double B = 0.0;
  double f = 0.0;
  double p_d = 0.0;
  double p_u = 0.0;
  double D_u = 0.0;
  double D_d = 0.0;
  double D_sc3 = 0.0;
  double cost = 0.0;
};

struct Allocation {
  std::vector<LoopAllocation> loops;
  double total_cost = 0.0;
  int iterations = 0;
  double max_violation = 0.0;   // relative, <= feas_tol on success
  double stationarity = 0.0;    // final Newton decrement
  bool feasible = false;
};

inline constexpr double kInfeasibleCost = std::numeric_limits<double>::infinity();

// UL cycle rate at bandwidth B (bits/cycle), with the removable B -> 0
// singularity extended by 0.
double rate_ul(const LoopModel& lm, const LoopBudget& tb, double B);
// DL cycle rate at bandwidth B and DL power p (bits/cycle).
double rate_dl(const LoopModel& lm, const LoopBudget& tb, double B, double p);

struct LoopEval {
  double D_u = 0.0;
  double D_d = 0.0;
  double D_sc3 = 0.0;
  double cost = kInfeasibleCost;
  bool stable = false;
};

// Closed-form per-loop evaluation at a concrete (B, f, p) point, with all
// cycle-rate variables tight at their caps. Shared with the grid oracle.
LoopEval evaluate_loop(const LoopModel& lm, const LoopBudget& tb, double B, double f,
                       double p, bool unbounded_f = false);

// Builds loop models for a pairing from the topology and channel realization.
std::vector<LoopModel> make_loop_models(const Pairing& pairing, const Topology& topo,
                                        const ChannelRealization& ch,
                                        const ResourceBudget& rb, bool use_sensing_cap);

// Optimal UL powers: paired sensors transmit at maximum power.
std::vector<double> optimal_ul_power(const Pairing& pairing,
                                     const std::vector<SensorTraits>& sensors);

// Convex allocation for a fixed pairing, minimizing the total LQR bound.
// Throws InfeasibleError when some loop cannot reach stability even with
// every budget to itself, or when the loops are jointly unstabilizable.
Allocation solve_p3(const Pairing& pairing, const Topology& topo,
                    const ChannelRealization& ch, const LoopBudget& tb,
                    const ResourceBudget& rb, const SolveOptions& opts = {});

// Total cost of the solve_p3 optimum; +inf sentinel on infeasibility.
double evaluate_pairing(const Pairing& pairing, const Topology& topo,
                        const ChannelRealization& ch, const LoopBudget& tb,
                        const ResourceBudget& rb, const SolveOptions& opts = {});

enum class RateVariant { MaxSum, MaxMin, MaxMinMargin };

// Rate-objective baselines under the (P3) resource constraints plus the
// per-loop stability margin D_sc3 >= e + margin. Reports LQR costs of the
// resulting allocation. Throws InfeasibleError naming the binding loop when
// a margin cannot be met.
Allocation solve_rate_objective(RateVariant variant, const std::vector<double>& margins,
                                const Pairing& pairing, const Topology& topo,
                                const ChannelRealization& ch, const LoopBudget& tb,
                                const ResourceBudget& rb, const SolveOptions& opts = {});

// Decoupled allocation: communication resources optimized with computing
// assumed unbounded, then CPU shared proportionally to demand and the true
// rates re-imposed.
Allocation solve_decoupled_cca_da(const Pairing& pairing, const Topology& topo,
                                  const ChannelRealization& ch, const LoopBudget& tb,
                                  const ResourceBudget& rb,
                                  const SolveOptions& opts = {});

}  // namespace sc3
