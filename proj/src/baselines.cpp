#include "sc3/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>

namespace sc3 {

namespace {
constexpr double kForbiddenCost = 1e9;
}

UtilityMatrix build_utility(UtilityScheme scheme, double omega,
                            const std::vector<double>& ul_gain_sq,
                            const std::vector<double>& gammas,
                            const std::vector<double>& entropies,
                            const std::vector<std::vector<int>>& effective_sets) {
  const int S = static_cast<int>(ul_gain_sq.size());
  const int K = static_cast<int>(entropies.size());
  if (static_cast<int>(effective_sets.size()) != K || gammas.size() != ul_gain_sq.size())
    throw DomainError("build_utility: dimension mismatch");
  if (scheme == UtilityScheme::Cca && (omega < 0.0 || omega > 1.0))
    throw DomainError("build_utility: omega must lie in [0, 1]");

  double e_sum = 0.0;
  for (double e : entropies) e_sum += e;
  if (e_sum <= 0.0) throw DomainError("build_utility: nonpositive entropy total");

  UtilityMatrix um;
  um.scheme = scheme;
  um.omega = scheme == UtilityScheme::CommFirst ? 1.0
             : scheme == UtilityScheme::CompFirst ? 0.0
                                                  : omega;
  um.U = Eigen::MatrixXd::Zero(S, K);
  for (int k = 0; k < K; ++k) {
    const double u_act = entropies[k] / e_sum;
    double h_sum = 0.0, g_sum = 0.0;
    for (int s : effective_sets[k]) {
      h_sum += ul_gain_sq[s];
      g_sum += 1.0 / gammas[s];
    }
    bool any = false;
    for (int s : effective_sets[k]) {
      const double comm = ul_gain_sq[s] / h_sum;
      const double comp = (1.0 / gammas[s]) / g_sum;
      const double u = (um.omega * comm + (1.0 - um.omega) * comp) * u_act;
      um.U(s, k) = u;
      any = any || u > 0.0;
    }
    if (!any) {
      std::ostringstream msg;
      msg << "build_utility: all-zero utility column for actuator " << k;
      throw InfeasibleError(msg.str());
    }
  }
  return um;
}

namespace {

// Minimum-cost assignment of n rows to m >= n columns (potentials method).
// Returns per-row column indices.
std::vector<int> assign_min_cost(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  const int m = static_cast<int>(cost.cols());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = -1;
      double delta = inf;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> match(n, -1);
  for (int j = 1; j <= m; ++j)
    if (p[j] != 0) match[p[j] - 1] = j - 1;
  return match;
}

// Optimal total utility over actuators in `rows` and sensors not in `taken`.
// Forbidden (zero-utility) edges carry a large penalty; a penalized optimum
// means no valid completion exists.
double best_completion(const Eigen::MatrixXd& U, const std::vector<int>& rows,
                       const std::vector<char>& taken) {
  if (rows.empty()) return 0.0;
  std::vector<int> cols;
  for (int s = 0; s < U.rows(); ++s)
    if (!taken[s]) cols.push_back(s);
  if (cols.size() < rows.size()) return -kForbiddenCost;
  Eigen::MatrixXd cost(rows.size(), cols.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) {
      const double u = U(cols[j], rows[i]);
      cost(i, j) = u > 0.0 ? -u : kForbiddenCost;
    }
  const std::vector<int> match = assign_min_cost(cost);
  double total = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double u = U(cols[match[i]], rows[i]);
    if (u <= 0.0) return -kForbiddenCost;
    total += u;
  }
  return total;
}

}  // namespace

Pairing hungarian_match(const UtilityMatrix& um) {
  const int S = static_cast<int>(um.U.rows());
  const int K = static_cast<int>(um.U.cols());
  if (K > S) throw DomainError("hungarian_match: more actuators than sensors");
  std::vector<int> all_rows(K);
  std::iota(all_rows.begin(), all_rows.end(), 0);
  std::vector<char> taken(S, 0);
  const double opt = best_completion(um.U, all_rows, taken);
  if (opt <= -kForbiddenCost / 2)
    throw InfeasibleError("hungarian_match: no valid one-to-one assignment");

  // Lexicographic refinement: fix actuators in order to the smallest sensor
  // index that preserves optimality.
  const double tol = 1e-12 * std::max(1.0, std::abs(opt));
  Pairing pairing(K, -1);
  double fixed_value = 0.0;
  for (int k = 0; k < K; ++k) {
    std::vector<int> rest(all_rows.begin() + k + 1, all_rows.end());
    bool placed = false;
    for (int s = 0; s < S && !placed; ++s) {
      if (taken[s] || um.U(s, k) <= 0.0) continue;
      taken[s] = 1;
      const double sub = best_completion(um.U, rest, taken);
      if (fixed_value + um.U(s, k) + sub >= opt - tol) {
        pairing[k] = s;
        fixed_value += um.U(s, k);
        placed = true;
      } else {
        taken[s] = 0;
      }
    }
    if (!placed) throw InfeasibleError("hungarian_match: refinement dead end");
  }
  return pairing;
}

std::vector<Pairing> enumerate_pairings(const std::vector<std::vector<int>>& effective_sets,
                                        long long cap) {
  const int K = static_cast<int>(effective_sets.size());
  int S = 0;
  for (const auto& set : effective_sets)
    for (int s : set) S = std::max(S, s + 1);
  std::vector<Pairing> out;
  Pairing cur(K, -1);
  std::vector<char> taken(S, 0);
  const std::function<void(int)> dfs = [&](int k) {
    if (k == K) {
      out.push_back(cur);
      if (static_cast<long long>(out.size()) > cap) {
        std::ostringstream msg;
        msg << "enumerate_pairings: more than " << cap << " valid pairings";
        throw DomainError(msg.str());
      }
      return;
    }
    for (int s : effective_sets[k]) {
      if (taken[s]) continue;
      taken[s] = 1;
      cur[k] = s;
      dfs(k + 1);
      taken[s] = 0;
    }
  };
  dfs(0);
  return out;
}

std::pair<Pairing, Allocation> exhaustive_search(const Topology& topo,
                                                 const ChannelRealization& ch,
                                                 const LoopBudget& tb,
                                                 const ResourceBudget& rb,
                                                 const SolveOptions& opts,
                                                 long long cap) {
  const std::vector<Pairing> all = enumerate_pairings(topo.effective_sets, cap);
  if (all.empty()) throw InfeasibleError("exhaustive_search: no valid pairing");
  Pairing best = all.front();
  Allocation best_alloc;
  best_alloc.total_cost = kInfeasibleCost;
  double best_cost = kInfeasibleCost;
  for (const Pairing& pairing : all) {
    Allocation alloc;
    try {
      alloc = solve_p3(pairing, topo, ch, tb, rb, opts);
    } catch (const Error&) {
      continue;
    }
    if (alloc.feasible && alloc.total_cost < best_cost) {
      best_cost = alloc.total_cost;
      best = pairing;
      best_alloc = alloc;
    }
  }
  return {best, best_alloc};
}

Allocation qos_allocation(const Pairing& pairing, const Topology& topo,
                          const ChannelRealization& ch, const LoopBudget& tb,
                          const ResourceBudget& rb) {
  const int K = static_cast<int>(pairing.size());
  double e_sum = 0.0;
  for (const auto& a : topo.actuators) e_sum += a.control.e;
  if (e_sum <= 0.0) throw DomainError("qos_allocation: nonpositive entropy total");

  const std::vector<LoopModel> models = make_loop_models(pairing, topo, ch, rb, true);
  Allocation alloc;
  alloc.loops.resize(K);
  alloc.total_cost = 0.0;
  alloc.feasible = true;
  for (int k = 0; k < K; ++k) {
    const double r = topo.actuators[k].control.e / e_sum;
    const double B = r * rb.B_max, f = r * rb.f_max, p = r * rb.p_d_max;
    const LoopEval ev = evaluate_loop(models[k], tb, B, f, p);
    LoopAllocation& la = alloc.loops[k];
    la.B = B;
    la.f = f;
    la.p_d = p;
    la.p_u = models[k].p_u;
    la.D_u = ev.D_u;
    la.D_d = ev.D_d;
    la.D_sc3 = ev.D_sc3;
    la.cost = ev.cost;
    if (!ev.stable) alloc.feasible = false;
    alloc.total_cost += ev.cost;
  }
  return alloc;
}

namespace {

std::vector<double> sensor_gammas(const Topology& topo) {
  std::vector<double> g;
  for (const auto& s : topo.sensors) g.push_back(s.gamma);
  return g;
}

std::vector<double> actuator_entropies(const Topology& topo) {
  std::vector<double> e;
  for (const auto& a : topo.actuators) e.push_back(a.control.e);
  return e;
}

Pairing utility_pairing(UtilityScheme scheme, double omega, const Topology& topo,
                        const ChannelRealization& ch) {
  const UtilityMatrix um =
      build_utility(scheme, omega, ch.ul_gain_sq, sensor_gammas(topo),
                    actuator_entropies(topo), topo.effective_sets);
  return hungarian_match(um);
}

Allocation safe_solve_p3(const Pairing& pairing, const Topology& topo,
                         const ChannelRealization& ch, const LoopBudget& tb,
                         const ResourceBudget& rb, const SolveOptions& opts) {
  try {
    return solve_p3(pairing, topo, ch, tb, rb, opts);
  } catch (const Error&) {
    Allocation alloc;
    alloc.total_cost = kInfeasibleCost;
    alloc.feasible = false;
    return alloc;
  }
}

}  // namespace

BaselineResult run_baseline(const std::string& scheme, const Topology& topo,
                            const ChannelRealization& ch, const LoopBudget& tb,
                            const ResourceBudget& rb, const BaselineParams& params,
                            const SolveOptions& opts) {
  BaselineResult res;
  res.scheme = scheme;

  const auto finish = [&](Pairing pairing, Allocation alloc) {
    res.pairing = std::move(pairing);
    res.alloc = std::move(alloc);
    res.total_cost = res.alloc.total_cost;
    res.feasible = res.alloc.feasible;
    return res;
  };

  if (scheme == "comm_first" || scheme == "comp_first" || scheme == "cca") {
    const UtilityScheme us = scheme == "comm_first"  ? UtilityScheme::CommFirst
                             : scheme == "comp_first" ? UtilityScheme::CompFirst
                                                      : UtilityScheme::Cca;
    Pairing pairing = utility_pairing(us, params.omega, topo, ch);
    return finish(pairing, safe_solve_p3(pairing, topo, ch, tb, rb, opts));
  }
  if (scheme == "exhaustive") {
    auto [pairing, alloc] =
        exhaustive_search(topo, ch, tb, rb, opts, params.enum_cap);
    return finish(std::move(pairing), std::move(alloc));
  }
  if (scheme == "qos") {
    const std::vector<Pairing> all =
        enumerate_pairings(topo.effective_sets, params.enum_cap);
    Pairing best = all.front();
    Allocation best_alloc = qos_allocation(best, topo, ch, tb, rb);
    for (std::size_t i = 1; i < all.size(); ++i) {
      Allocation alloc = qos_allocation(all[i], topo, ch, tb, rb);
      if (alloc.total_cost < best_alloc.total_cost) {
        best = all[i];
        best_alloc = std::move(alloc);
      }
    }
    return finish(std::move(best), std::move(best_alloc));
  }
  if (scheme == "cca_da") {
    Pairing pairing = utility_pairing(UtilityScheme::Cca, params.omega, topo, ch);
    Allocation alloc;
    try {
      alloc = solve_decoupled_cca_da(pairing, topo, ch, tb, rb, opts);
    } catch (const Error&) {
      alloc.total_cost = kInfeasibleCost;
      alloc.feasible = false;
    }
    return finish(std::move(pairing), std::move(alloc));
  }
  if (scheme == "max_sum_rate" || scheme == "max_min_rate" ||
      scheme == "max_min_margin_rate") {
    const RateVariant variant = scheme == "max_sum_rate"  ? RateVariant::MaxSum
                                : scheme == "max_min_rate" ? RateVariant::MaxMin
                                                           : RateVariant::MaxMinMargin;
    Pairing pairing = utility_pairing(UtilityScheme::CommFirst, 1.0, topo, ch);
    const std::vector<double> margins(pairing.size(), params.delta);
    Allocation alloc;
    try {
      alloc = solve_rate_objective(variant, margins, pairing, topo, ch, tb, rb, opts);
    } catch (const Error&) {
      alloc.total_cost = kInfeasibleCost;
      alloc.feasible = false;
    }
    return finish(std::move(pairing), std::move(alloc));
  }
  if (scheme == "loac") {
    if (params.policy == nullptr)
      throw ConfigError("run_baseline: scheme loac needs a trained policy");
    const PairingPolicy& policy = *params.policy;
    TraitMatrices traits =
        normalize_traits(ch.ul_gain_sq, sensor_gammas(topo), ch.dl_gain_sq,
                         actuator_entropies(topo), policy.norm);
    const ForwardResult fw = forward(policy, traits, topo.effective_sets);
    Rng rng = Rng::stream(params.eval_seed, {streams::kEval});
    std::vector<Pairing> candidates;
    candidates.push_back(greedy_decode(fw.Y, topo.effective_sets, rng));
    if (params.eval_candidates > 0) {
      SampleResult sample = sample_pairings(fw.colsoft, topo.effective_sets,
                                            params.eval_candidates, 100, rng);
      for (Pairing& p : sample.pairings) candidates.push_back(std::move(p));
    }
    Pairing best = candidates.front();
    Allocation best_alloc = safe_solve_p3(best, topo, ch, tb, rb, opts);
    for (std::size_t i = 1; i < candidates.size(); ++i) {
      Allocation alloc = safe_solve_p3(candidates[i], topo, ch, tb, rb, opts);
      if (alloc.total_cost < best_alloc.total_cost) {
        best = candidates[i];
        best_alloc = std::move(alloc);
      }
    }
    return finish(std::move(best), std::move(best_alloc));
  }
  throw ConfigError("run_baseline: unknown scheme id '" + scheme + "'");
}

}  // namespace sc3
