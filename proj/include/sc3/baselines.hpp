#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sc3/actor.hpp"
#include "sc3/critic.hpp"

namespace sc3 {

enum class UtilityScheme { CommFirst, CompFirst, Cca };

struct UtilityMatrix {
  Eigen::MatrixXd U;  // S x K, zero outside the effective sets
  UtilityScheme scheme = UtilityScheme::CommFirst;
  double omega = 1.0;
};

// Pairing scores: actuator priority is the normalized intrinsic entropy,
// sensor scores are per-column normalized channel gain (communication-first),
// inverse computational intensity (computing-first), or their omega blend.
UtilityMatrix build_utility(UtilityScheme scheme, double omega,
                            const std::vector<double>& ul_gain_sq,
                            const std::vector<double>& gammas,
                            const std::vector<double>& entropies,
                            const std::vector<std::vector<int>>& effective_sets);

// Maximum-utility one-to-one assignment of actuators to sensors (K <= S).
// Zero entries are treated as forbidden; ties resolve to the assignment that
// is lexicographically smallest in actuator order.
Pairing hungarian_match(const UtilityMatrix& um);

// All valid injective assignments; throws DomainError past the cap.
std::vector<Pairing> enumerate_pairings(const std::vector<std::vector<int>>& effective_sets,
                                        long long cap = 200000);

// Global minimizer of the allocation cost over every valid pairing. When no
// pairing is feasible, returns the first pairing with a sentinel allocation.
std::pair<Pairing, Allocation> exhaustive_search(const Topology& topo,
                                                 const ChannelRealization& ch,
                                                 const LoopBudget& tb,
                                                 const ResourceBudget& rb,
                                                 const SolveOptions& opts = {},
                                                 long long cap = 200000);

// Entropy-proportional fixed split of every budget for a given pairing;
// sentinel costs where the split leaves a loop unstable.
Allocation qos_allocation(const Pairing& pairing, const Topology& topo,
                          const ChannelRealization& ch, const LoopBudget& tb,
                          const ResourceBudget& rb);

struct BaselineParams {
  double omega = 0.3;             // CCA blend weight
  double delta = 15.0;            // rate-scheme stability margin, bits/cycle
  long long enum_cap = 200000;    // exhaustive enumeration cap
  int eval_candidates = 16;       // sampled pairings at LOAC inference
  const PairingPolicy* policy = nullptr;  // required for scheme "loac"
  std::uint64_t eval_seed = 0;    // LOAC inference stream seed
};

struct BaselineResult {
  std::string scheme;
  Pairing pairing;
  Allocation alloc;
  double total_cost = kInfeasibleCost;
  bool feasible = false;
};

// Scheme ids: comm_first, comp_first, cca, exhaustive, qos, cca_da,
// max_sum_rate, max_min_rate, max_min_margin_rate, loac.
BaselineResult run_baseline(const std::string& scheme, const Topology& topo,
                            const ChannelRealization& ch, const LoopBudget& tb,
                            const ResourceBudget& rb, const BaselineParams& params = {},
                            const SolveOptions& opts = {});

}  // namespace sc3
