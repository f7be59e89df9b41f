#include "sc3/oracles.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace sc3 {

namespace {

struct Axis {
  double lo = 0.0;
  double hi = 1.0;
};

// Total cost when loop 0 takes fractions x = (xB, xf, xp) of each budget and
// the other loop (if any) the remainder.
double split_cost(const std::vector<LoopModel>& models, const LoopBudget& tb,
                  const ResourceBudget& rb, const Eigen::Vector3d& x) {
  double total = 0.0;
  const int K = static_cast<int>(models.size());
  for (int k = 0; k < K; ++k) {
    const double share_b = k == 0 ? x(0) : 1.0 - x(0);
    const double share_f = k == 0 ? x(1) : 1.0 - x(1);
    const double share_p = k == 0 ? x(2) : 1.0 - x(2);
    const LoopEval ev = evaluate_loop(models[k], tb, share_b * rb.B_max,
                                      share_f * rb.f_max, share_p * rb.p_d_max);
    if (!ev.stable) return kInfeasibleCost;
    total += ev.cost;
  }
  return total;
}

}  // namespace

GridResult grid_search_allocation(const Pairing& pairing, const Topology& topo,
                                  const ChannelRealization& ch, const LoopBudget& tb,
                                  const ResourceBudget& rb, const GridSpec& spec,
                                  bool use_sensing_cap) {
  const int K = static_cast<int>(pairing.size());
  if (K < 1 || K > 2)
    throw DomainError("grid_search_allocation: only K <= 2 is supported");
  if (spec.points < 3) throw DomainError("grid_search_allocation: points < 3");
  const std::vector<LoopModel> models =
      make_loop_models(pairing, topo, ch, rb, use_sensing_cap);

  // For a single loop the shares sweep up to the full budget; for two loops
  // the interior split keeps both strictly resourced.
  const double eps = 1e-9;
  std::array<Axis, 3> axes;
  for (auto& a : axes) a = {eps, K == 1 ? 1.0 : 1.0 - eps};

  GridResult res;
  Eigen::Vector3d best(0.5, 0.5, 0.5);
  double best_cost = kInfeasibleCost;
  std::array<double, 3> step{0, 0, 0};

  for (int round = 0; round <= spec.refine_rounds; ++round) {
    std::array<std::vector<double>, 3> grids;
    for (int a = 0; a < 3; ++a) {
      step[a] = (axes[a].hi - axes[a].lo) / (spec.points - 1);
      for (int i = 0; i < spec.points; ++i)
        grids[a].push_back(axes[a].lo + i * step[a]);
    }
    for (double xb : grids[0])
      for (double xf : grids[1])
        for (double xp : grids[2]) {
          const Eigen::Vector3d x(xb, xf, xp);
          const double cost = split_cost(models, tb, rb, x);
          if (cost < best_cost) {
            best_cost = cost;
            best = x;
          }
        }
    if (!std::isfinite(best_cost)) break;
    if (round < spec.refine_rounds) {
      for (int a = 0; a < 3; ++a) {
        const double half = (axes[a].hi - axes[a].lo) / spec.refine_factor;
        axes[a].lo = std::max(eps, best(a) - half);
        axes[a].hi = std::min(K == 1 ? 1.0 : 1.0 - eps, best(a) + half);
      }
    }
  }

  if (!std::isfinite(best_cost)) {
    res.feasible = false;
    return res;
  }

  for (int a = 0; a < 3; ++a)
    for (double sgn : {-1.0, 1.0}) {
      Eigen::Vector3d x = best;
      x(a) = std::clamp(x(a) + sgn * step[a], eps, K == 1 ? 1.0 : 1.0 - eps);
      const double cost = split_cost(models, tb, rb, x);
      if (std::isfinite(cost))
        res.bracket = std::max(res.bracket, std::abs(cost - best_cost));
    }

  res.objective = best_cost;
  res.feasible = true;
  res.alloc.loops.resize(K);
  res.alloc.total_cost = best_cost;
  res.alloc.feasible = true;
  for (int k = 0; k < K; ++k) {
    const double sb = k == 0 ? best(0) : 1.0 - best(0);
    const double sf = k == 0 ? best(1) : 1.0 - best(1);
    const double sp = k == 0 ? best(2) : 1.0 - best(2);
    LoopAllocation& la = res.alloc.loops[k];
    la.B = sb * rb.B_max;
    la.f = sf * rb.f_max;
    la.p_d = sp * rb.p_d_max;
    la.p_u = models[k].p_u;
    const LoopEval ev = evaluate_loop(models[k], tb, la.B, la.f, la.p_d);
    la.D_u = ev.D_u;
    la.D_d = ev.D_d;
    la.D_sc3 = ev.D_sc3;
    la.cost = ev.cost;
  }
  return res;
}

FiniteDiffReport finite_diff_check(const std::function<double(const Eigen::VectorXd&)>& fn,
                                   const Eigen::VectorXd& point, double step,
                                   const Eigen::VectorXd& analytic) {
  if (step <= 0.0) throw DomainError("finite_diff_check: nonpositive step");
  FiniteDiffReport rep;
  rep.analytic = analytic;
  rep.numeric.resize(point.size());
  for (Eigen::Index i = 0; i < point.size(); ++i) {
    Eigen::VectorXd hi = point, lo = point;
    hi(i) += step;
    lo(i) -= step;
    rep.numeric(i) = (fn(hi) - fn(lo)) / (2.0 * step);
    const double scale = std::max({1.0, std::abs(rep.numeric(i)), std::abs(analytic(i))});
    rep.max_rel_error =
        std::max(rep.max_rel_error, std::abs(rep.numeric(i) - analytic(i)) / scale);
  }
  return rep;
}

double finite_diff_second(const std::function<double(double)>& fn, double x, double step) {
  if (step <= 0.0) throw DomainError("finite_diff_second: nonpositive step");
  return (fn(x + step) - 2.0 * fn(x) + fn(x - step)) / (step * step);
}

}  // namespace sc3
