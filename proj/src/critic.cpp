#include "sc3/critic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "sc3/ipm.hpp"

namespace sc3 {

namespace {

constexpr double kLn2 = std::numbers::ln2;
constexpr double kInf = std::numeric_limits<double>::infinity();

enum class ProgVariant { P3, MaxSum, MaxMin, MaxMinMargin, Phase1 };

bool has_tau(ProgVariant v) {
  return v == ProgVariant::MaxMin || v == ProgVariant::MaxMinMargin ||
         v == ProgVariant::Phase1;
}

// Epigraph form of the fixed-pairing allocation problem in scaled variables.
// Per loop k the block z[6k..6k+5] holds (b, f, p, du, dd, d3): bandwidth,
// CPU and DL-power as budget fractions, cycle rates divided by d_scale.
// Minimax variants append the epigraph variable tau.
class Sc3Program final : public SmoothProblem {
 public:
  Sc3Program(ProgVariant variant, std::vector<LoopModel> loops, LoopBudget tb,
             ResourceBudget rb, std::vector<double> stability_targets,
             double d_scale, bool include_compute)
      : variant_(variant),
        loops_(std::move(loops)),
        tb_(tb),
        rb_(rb),
        targets_(std::move(stability_targets)),
        dr_(d_scale),
        compute_(include_compute) {
    const int K = static_cast<int>(loops_.size());
    num_constraints_ = 3;  // budgets
    for (int k = 0; k < K; ++k) {
      num_constraints_ += 5;  // positivity of b, f, p, du, dd
      num_constraints_ += 3;  // UL rate, DL rate, rho*du - d3
      num_constraints_ += 1;  // dd - d3
      if (compute_) num_constraints_ += 1;
      if (std::isfinite(loops_[k].sensing_cap)) num_constraints_ += 1;
      switch (variant_) {
        case ProgVariant::P3:
        case ProgVariant::MaxSum:
        case ProgVariant::Phase1:
          num_constraints_ += 1;
          break;
        case ProgVariant::MaxMin:
        case ProgVariant::MaxMinMargin:
          num_constraints_ += 2;
          break;
      }
    }
  }

  int dim() const override {
    return 6 * static_cast<int>(loops_.size()) + (has_tau(variant_) ? 1 : 0);
  }
  int num_constraints() const override { return num_constraints_; }

  double objective(const Eigen::VectorXd& z, Eigen::VectorXd* grad,
                   Eigen::MatrixXd* hess) const override {
    const int K = static_cast<int>(loops_.size());
    switch (variant_) {
      case ProgVariant::P3: {
        double total = 0.0;
        for (int k = 0; k < K; ++k) {
          const int i = 6 * k + 5;
          const double d3 = z(i) * dr_;
          const LoopCostParams& p = loops_[k].cost;
          const double gap = d3 - p.e;
          if (gap <= 0.0) return kInf;
          const double denom = std::expm1(2.0 * kLn2 / p.n * gap);
          total += p.n * p.negentropy_scale * p.det_M_root / denom + p.trace_term;
          if (grad) (*grad)(i) += dr_ * lqr_lower_bound_d1(d3, p);
          if (hess) (*hess)(i, i) += dr_ * dr_ * lqr_lower_bound_d2(d3, p);
        }
        return total;
      }
      case ProgVariant::MaxSum: {
        double total = 0.0;
        for (int k = 0; k < K; ++k) {
          total -= z(6 * k + 5);
          if (grad) (*grad)(6 * k + 5) -= 1.0;
        }
        return total;
      }
      default: {
        if (grad) (*grad)(6 * K) -= 1.0;
        return -z(6 * K);
      }
    }
  }

  double min_slack(const Eigen::VectorXd& z) const override {
    double m = kInf;
    eval_constraints(z, nullptr, nullptr, nullptr, &m);
    return m;
  }

  double barrier(const Eigen::VectorXd& z, Eigen::VectorXd* grad,
                 Eigen::MatrixXd* hess) const override {
    double phi = 0.0;
    if (!eval_constraints(z, &phi, grad, hess, nullptr)) return kInf;
    return phi;
  }

 private:
  struct GradEntry {
    int i;
    double v;
  };

  // Scaled UL rate and derivatives in b.
  void ul_terms(int k, double b, double& val, double& d1, double& d2) const {
    const double a = loops_[k].snr_num_ul;
    const double B = b * rb_.B_max;
    if (a <= 0.0 || B <= 0.0) {
      val = d1 = d2 = 0.0;
      return;
    }
    const double u = a / B;
    const double l = std::log1p(u);
    val = tb_.t_u * B * l / kLn2 / dr_;
    d1 = rb_.B_max * tb_.t_u / kLn2 * (l - u / (1.0 + u)) / dr_;
    d2 = -rb_.B_max * rb_.B_max * tb_.t_u * a * a / (B * (a + B) * (a + B) * kLn2) / dr_;
  }

  // Scaled DL rate and derivatives in (b, p_frac).
  void dl_terms(int k, double b, double pf, double& val, double& db, double& dp,
                double& dbb, double& dbp, double& dpp) const {
    const double a = loops_[k].snr_num_dl;
    const double B = b * rb_.B_max;
    const double p = pf * rb_.p_d_max;
    if (a <= 0.0 || B <= 0.0 || p < 0.0) {
      val = db = dp = dbb = dbp = dpp = 0.0;
      return;
    }
    const double w = a * p / B;
    const double l = std::log1p(w);
    const double denom = a * p + B;
    val = tb_.t_d * B * l / kLn2 / dr_;
    db = rb_.B_max * tb_.t_d / kLn2 * (l - w / (1.0 + w)) / dr_;
    dp = rb_.p_d_max * tb_.t_d * a / (kLn2 * (1.0 + w)) / dr_;
    dbb = -rb_.B_max * rb_.B_max * tb_.t_d * a * a * p * p / (B * denom * denom * kLn2) / dr_;
    dpp = -rb_.p_d_max * rb_.p_d_max * tb_.t_d * a * a * B / (denom * denom * kLn2) / dr_;
    dbp = rb_.B_max * rb_.p_d_max * tb_.t_d * a * a * p / (denom * denom * kLn2) / dr_;
  }

  // Walks every constraint once. Returns false when some slack is <= 0.
  // When phi is non-null, accumulates -ln slack and its derivatives.
  bool eval_constraints(const Eigen::VectorXd& z, double* phi, Eigen::VectorXd* grad,
                        Eigen::MatrixXd* hess, double* min_out) const {
    const int K = static_cast<int>(loops_.size());
    const int itau = 6 * K;
    bool ok = true;

    auto add = [&](double c, std::initializer_list<GradEntry> g,
                   std::initializer_list<std::tuple<int, int, double>> h = {}) {
      if (min_out) *min_out = std::min(*min_out, c);
      if (c <= 0.0) {
        ok = false;
        return;
      }
      if (phi) *phi -= std::log(c);
      if (grad)
        for (const auto& e : g) (*grad)(e.i) -= e.v / c;
      if (hess) {
        const double inv2 = 1.0 / (c * c);
        for (const auto& e1 : g)
          for (const auto& e2 : g) (*hess)(e1.i, e2.i) += e1.v * e2.v * inv2;
        for (const auto& [i, j, v] : h) {
          (*hess)(i, j) -= v / c;
          if (i != j) (*hess)(j, i) -= v / c;
        }
      }
    };

    double sum_b = 0.0, sum_f = 0.0, sum_p = 0.0;
    for (int k = 0; k < K && (ok || min_out); ++k) {
      const int i0 = 6 * k;
      const double b = z(i0), f = z(i0 + 1), pf = z(i0 + 2);
      const double du = z(i0 + 3), dd = z(i0 + 4), d3 = z(i0 + 5);
      sum_b += b;
      sum_f += f;
      sum_p += pf;

      add(b, {{i0, 1.0}});
      add(f, {{i0 + 1, 1.0}});
      add(pf, {{i0 + 2, 1.0}});
      add(du, {{i0 + 3, 1.0}});
      add(dd, {{i0 + 4, 1.0}});
      if (b <= 0.0 || pf <= 0.0) {
        // Rate terms are undefined here; slacks already flagged infeasible.
        if (!min_out) return false;
        continue;
      }

      double ruv, ru1, ru2;
      ul_terms(k, b, ruv, ru1, ru2);
      add(ruv - du, {{i0, ru1}, {i0 + 3, -1.0}}, {{i0, i0, ru2}});

      if (compute_) {
        const double kappa = loops_[k].gamma * dr_ / (tb_.t_c * rb_.f_max);
        add(f - kappa * du, {{i0 + 1, 1.0}, {i0 + 3, -kappa}});
      }

      double rdv, rdb, rdp, rdbb, rdbp, rdpp;
      dl_terms(k, b, pf, rdv, rdb, rdp, rdbb, rdbp, rdpp);
      add(rdv - dd, {{i0, rdb}, {i0 + 2, rdp}, {i0 + 4, -1.0}},
          {{i0, i0, rdbb}, {i0, i0 + 2, rdbp}, {i0 + 2, i0 + 2, rdpp}});

      add(loops_[k].rho * du - d3, {{i0 + 3, loops_[k].rho}, {i0 + 5, -1.0}});
      add(dd - d3, {{i0 + 4, 1.0}, {i0 + 5, -1.0}});

      if (std::isfinite(loops_[k].sensing_cap))
        add(loops_[k].sensing_cap / dr_ - du, {{i0 + 3, -1.0}});

      const double tgt = targets_[k] / dr_;
      switch (variant_) {
        case ProgVariant::P3:
        case ProgVariant::MaxSum:
          add(d3 - tgt, {{i0 + 5, 1.0}});
          break;
        case ProgVariant::Phase1:
          add(d3 - tgt - z(itau), {{i0 + 5, 1.0}, {itau, -1.0}});
          break;
        case ProgVariant::MaxMin:
          add(d3 - tgt, {{i0 + 5, 1.0}});
          add(d3 - z(itau), {{i0 + 5, 1.0}, {itau, -1.0}});
          break;
        case ProgVariant::MaxMinMargin:
          add(d3 - tgt, {{i0 + 5, 1.0}});
          add(d3 - loops_[k].cost.e / dr_ - z(itau), {{i0 + 5, 1.0}, {itau, -1.0}});
          break;
      }
    }
    if (!ok && !min_out) return false;

    std::vector<GradEntry> gb, gf, gp;
    for (int k = 0; k < K; ++k) {
      gb.push_back({6 * k, -1.0});
      gf.push_back({6 * k + 1, -1.0});
      gp.push_back({6 * k + 2, -1.0});
    }
    auto add_budget = [&](double c, const std::vector<GradEntry>& g) {
      if (min_out) *min_out = std::min(*min_out, c);
      if (c <= 0.0) {
        ok = false;
        return;
      }
      if (phi) *phi -= std::log(c);
      if (grad)
        for (const auto& e : g) (*grad)(e.i) -= e.v / c;
      if (hess) {
        const double inv2 = 1.0 / (c * c);
        for (const auto& e1 : g)
          for (const auto& e2 : g) (*hess)(e1.i, e2.i) += e1.v * e2.v * inv2;
      }
    };
    add_budget(1.0 - sum_b, gb);
    add_budget(1.0 - sum_f, gf);
    add_budget(1.0 - sum_p, gp);
    return ok;
  }

  ProgVariant variant_;
  std::vector<LoopModel> loops_;
  LoopBudget tb_;
  ResourceBudget rb_;
  std::vector<double> targets_;  // absolute bits: e (+ margin where demanded)
  double dr_;
  bool compute_;
  int num_constraints_ = 0;
};

struct ProgramSetup {
  double d_scale = 1.0;
  std::vector<double> du_full;  // best per-loop UL rate with all budgets
  std::vector<double> d3_max;   // best per-loop CNER with all budgets
};

ProgramSetup analyze(const std::vector<LoopModel>& loops, const LoopBudget& tb,
                     const ResourceBudget& rb, bool include_compute) {
  ProgramSetup s;
  double dmax = 1.0;
  for (const auto& lm : loops) {
    double du = rate_ul(lm, tb, rb.B_max);
    if (include_compute) du = std::min(du, tb.t_c * rb.f_max / lm.gamma);
    du = std::min(du, lm.sensing_cap);
    const double dd = rate_dl(lm, tb, rb.B_max, rb.p_d_max);
    s.du_full.push_back(du);
    s.d3_max.push_back(std::min(lm.rho * du, dd));
    dmax = std::max({dmax, du, dd});
  }
  s.d_scale = dmax;
  return s;
}

// Strictly interior starting point built from an equal budget split.
Eigen::VectorXd initial_point(const std::vector<LoopModel>& loops, const LoopBudget& tb,
                              const ResourceBudget& rb, bool include_compute,
                              double d_scale, bool with_tau) {
  const int K = static_cast<int>(loops.size());
  Eigen::VectorXd z(6 * K + (with_tau ? 1 : 0));
  const double share = 0.9 / K;
  for (int k = 0; k < K; ++k) {
    const LoopModel& lm = loops[k];
    const double B0 = share * rb.B_max;
    const double f0 = share * rb.f_max;
    const double p0 = share * rb.p_d_max;
    double du = 0.9 * rate_ul(lm, tb, B0);
    if (include_compute) du = std::min(du, 0.9 * tb.t_c * f0 / lm.gamma);
    du = std::min(du, 0.9 * lm.sensing_cap);
    du = std::max(du, 1e-12 * d_scale);
    const double dd = std::max(0.9 * rate_dl(lm, tb, B0, p0), 1e-12 * d_scale);
    const double d3 = std::max(0.9 * std::min(lm.rho * du, dd), 1e-13 * d_scale);
    z(6 * k) = share;
    z(6 * k + 1) = share;
    z(6 * k + 2) = share;
    z(6 * k + 3) = du / d_scale;
    z(6 * k + 4) = dd / d_scale;
    z(6 * k + 5) = d3 / d_scale;
  }
  return z;
}

struct SolveOutput {
  Eigen::VectorXd z;
  IpmResult ipm;
};

// Runs phase 1 (if needed) and the requested variant.
SolveOutput run_program(ProgVariant variant, const std::vector<LoopModel>& loops,
                        const LoopBudget& tb, const ResourceBudget& rb,
                        const std::vector<double>& targets, double d_scale,
                        bool include_compute, const SolveOptions& opts) {
  const int K = static_cast<int>(loops.size());
  Eigen::VectorXd z0 =
      initial_point(loops, tb, rb, include_compute, d_scale, has_tau(variant));

  // Margin by which the direct start must clear every stability target to
  // skip phase 1.
  double worst = kInf;
  int worst_k = 0;
  for (int k = 0; k < K; ++k) {
    const double m = z0(6 * k + 5) * d_scale - targets[k];
    if (m < worst) {
      worst = m;
      worst_k = k;
    }
  }

  const bool need_phase1 =
      (variant != ProgVariant::Phase1) && worst <= 1e-6 * d_scale;
  Eigen::VectorXd z_feas = z0;
  if (need_phase1) {
    Sc3Program phase1(ProgVariant::Phase1, loops, tb, rb, targets, d_scale,
                      include_compute);
    Eigen::VectorXd zp =
        initial_point(loops, tb, rb, include_compute, d_scale, true);
    double m0 = kInf;
    for (int k = 0; k < K; ++k)
      m0 = std::min(m0, zp(6 * k + 5) - targets[k] / d_scale);
    zp(6 * K) = m0 - 0.1;
    IpmOptions popts;
    popts.gap_tol = 1e-4;
    popts.newton_tol = opts.newton_tol;
    popts.max_outer = opts.max_outer;
    popts.max_inner = opts.max_inner;
    const IpmResult pres = solve_barrier(phase1, zp, popts);
    const double tau_star = pres.z(6 * K);
    if (tau_star * d_scale <= 1e-7 * d_scale) {
      double wv = kInf;
      int wk = 0;
      for (int k = 0; k < K; ++k) {
        const double m = pres.z(6 * k + 5) * d_scale - targets[k];
        if (m < wv) {
          wv = m;
          wk = k;
        }
      }
      std::ostringstream msg;
      msg << "critic: loops jointly unstabilizable; binding loop " << wk
          << " (margin " << wv << " bits)";
      throw InfeasibleError(msg.str());
    }
    z_feas = pres.z.head(6 * K);
  }

  if (variant == ProgVariant::Phase1) {
    // Caller asked for phase 1 itself.
    Sc3Program prog(variant, loops, tb, rb, targets, d_scale, include_compute);
    double m0 = kInf;
    for (int k = 0; k < K; ++k)
      m0 = std::min(m0, z0(6 * k + 5) - targets[k] / d_scale);
    z0(6 * K) = m0 - 0.1;
    IpmOptions iopts{opts.gap_tol, opts.newton_tol, opts.max_outer, opts.max_inner};
    SolveOutput out;
    out.ipm = solve_barrier(prog, z0, iopts);
    out.z = out.ipm.z;
    return out;
  }

  Eigen::VectorXd z(6 * K + (has_tau(variant) ? 1 : 0));
  z.head(6 * K) = z_feas;
  if (has_tau(variant)) {
    double m0 = kInf;
    for (int k = 0; k < K; ++k) {
      const double d3 = z(6 * k + 5);
      const double expr = (variant == ProgVariant::MaxMin)
                              ? d3
                              : d3 - loops[k].cost.e / d_scale;
      m0 = std::min(m0, expr);
    }
    z(6 * K) = m0 - 0.05 * std::max(1.0, std::abs(m0));
  }

  Sc3Program prog(variant, loops, tb, rb, targets, d_scale, include_compute);
  IpmOptions iopts{opts.gap_tol, opts.newton_tol, opts.max_outer, opts.max_inner};
  SolveOutput out;
  out.ipm = solve_barrier(prog, z, iopts);
  out.z = out.ipm.z;
  if (!out.ipm.converged) {
    std::ostringstream msg;
    msg << "critic: barrier method did not converge (gap " << out.ipm.gap
        << ", outer " << out.ipm.outer << ", newton " << out.ipm.newton_iters << ")";
    throw IterationLimitError(msg.str(), out.ipm.gap);
  }
  return out;
}

void check_pairing(const Pairing& pairing, const Topology& topo) {
  const int K = static_cast<int>(topo.actuators.size());
  if (static_cast<int>(pairing.size()) != K)
    throw DomainError("pairing size does not match actuator count");
  std::vector<int> seen;
  for (int k = 0; k < K; ++k) {
    const int s = pairing[k];
    if (s < 0 || s >= static_cast<int>(topo.sensors.size()))
      throw DomainError("pairing references an unknown sensor");
    if (std::find(seen.begin(), seen.end(), s) != seen.end())
      throw InfeasibleError("pairing assigns one sensor to multiple actuators");
    seen.push_back(s);
    const auto& set = topo.effective_sets[k];
    if (std::find(set.begin(), set.end(), s) == set.end())
      throw InfeasibleError("pairing violates the sensing-range constraint");
  }
}

// Per-loop stability precheck: each loop must clear its target with every
// budget to itself.
void precheck(const std::vector<LoopModel>& loops, const ProgramSetup& setup,
              const std::vector<double>& targets) {
  for (std::size_t k = 0; k < loops.size(); ++k) {
    if (setup.d3_max[k] <= targets[k] + 10.0 * kStabilityGuardBits) {
      std::ostringstream msg;
      msg << "critic: loop " << k << " cannot reach stability (best CNER "
          << setup.d3_max[k] << " bits, target " << targets[k] << " bits)";
      throw InfeasibleError(msg.str());
    }
  }
}

Allocation finalize(const Eigen::VectorXd& z, const std::vector<LoopModel>& loops,
                    const LoopBudget& tb, const ResourceBudget& rb,
                    const IpmResult& ipm, const SolveOptions& opts,
                    bool unbounded_f) {
  const int K = static_cast<int>(loops.size());
  Allocation out;
  out.iterations = ipm.newton_iters;
  out.stationarity = ipm.decrement;
  double sum_b = 0.0, sum_f = 0.0, sum_p = 0.0;
  bool all_stable = true;
  for (int k = 0; k < K; ++k) {
    LoopAllocation la;
    la.B = z(6 * k) * rb.B_max;
    la.f = z(6 * k + 1) * rb.f_max;
    la.p_d = z(6 * k + 2) * rb.p_d_max;
    la.p_u = loops[k].p_u;
    const LoopEval ev = evaluate_loop(loops[k], tb, la.B, la.f, la.p_d, unbounded_f);
    la.D_u = ev.D_u;
    la.D_d = ev.D_d;
    la.D_sc3 = ev.D_sc3;
    la.cost = ev.cost;
    all_stable = all_stable && ev.stable;
    sum_b += la.B;
    sum_f += la.f;
    sum_p += la.p_d;
    out.loops.push_back(la);
  }
  out.max_violation = std::max({(sum_b - rb.B_max) / rb.B_max,
                                (sum_f - rb.f_max) / rb.f_max,
                                (sum_p - rb.p_d_max) / rb.p_d_max, 0.0});
  out.feasible = all_stable && out.max_violation <= opts.feas_tol;
  out.total_cost = 0.0;
  for (const auto& la : out.loops) out.total_cost += la.cost;
  return out;
}

}  // namespace

double rate_ul(const LoopModel& lm, const LoopBudget& tb, double B) {
  if (B <= 0.0 || lm.snr_num_ul <= 0.0) return 0.0;
  return tb.t_u * B * std::log1p(lm.snr_num_ul / B) / kLn2;
}

double rate_dl(const LoopModel& lm, const LoopBudget& tb, double B, double p) {
  if (B <= 0.0 || p <= 0.0 || lm.snr_num_dl <= 0.0) return 0.0;
  return tb.t_d * B * std::log1p(lm.snr_num_dl * p / B) / kLn2;
}

LoopEval evaluate_loop(const LoopModel& lm, const LoopBudget& tb, double B, double f,
                       double p, bool unbounded_f) {
  LoopEval ev;
  double du = rate_ul(lm, tb, B);
  if (!unbounded_f) du = std::min(du, lm.gamma > 0.0 ? tb.t_c * f / lm.gamma : du);
  du = std::min(du, lm.sensing_cap);
  ev.D_u = du;
  ev.D_d = rate_dl(lm, tb, B, p);
  ev.D_sc3 = std::min(lm.rho * du, ev.D_d);
  ev.stable = ev.D_sc3 > lm.cost.e + kStabilityGuardBits;
  ev.cost = ev.stable ? lqr_lower_bound(ev.D_sc3, lm.cost) : kInfeasibleCost;
  return ev;
}

std::vector<LoopModel> make_loop_models(const Pairing& pairing, const Topology& topo,
                                        const ChannelRealization& ch,
                                        const ResourceBudget& rb,
                                        bool use_sensing_cap) {
  check_pairing(pairing, topo);
  std::vector<LoopModel> loops;
  for (std::size_t k = 0; k < pairing.size(); ++k) {
    const SensorTraits& st = topo.sensors[pairing[k]];
    LoopModel lm;
    lm.snr_num_ul = st.p_u_max * ch.ul_gain_sq[pairing[k]] / rb.N0;
    lm.snr_num_dl = ch.dl_gain_sq[k] / rb.N0;
    lm.gamma = st.gamma;
    lm.rho = st.rho;
    lm.sensing_cap = use_sensing_cap ? st.sensing_rate : kInf;
    lm.p_u = st.p_u_max;
    lm.cost = topo.actuators[k].control;
    loops.push_back(lm);
  }
  return loops;
}

std::vector<double> optimal_ul_power(const Pairing& pairing,
                                     const std::vector<SensorTraits>& sensors) {
  std::vector<double> out;
  out.reserve(pairing.size());
  for (int s : pairing) out.push_back(sensors.at(s).p_u_max);
  return out;
}

Allocation solve_p3(const Pairing& pairing, const Topology& topo,
                    const ChannelRealization& ch, const LoopBudget& tb,
                    const ResourceBudget& rb, const SolveOptions& opts) {
  const auto loops = make_loop_models(pairing, topo, ch, rb, opts.sensing_cap);
  std::vector<double> targets;
  for (const auto& lm : loops) targets.push_back(lm.cost.e);
  const ProgramSetup setup = analyze(loops, tb, rb, true);
  precheck(loops, setup, targets);
  const SolveOutput sol = run_program(ProgVariant::P3, loops, tb, rb, targets,
                                      setup.d_scale, true, opts);
  return finalize(sol.z, loops, tb, rb, sol.ipm, opts, false);
}

double evaluate_pairing(const Pairing& pairing, const Topology& topo,
                        const ChannelRealization& ch, const LoopBudget& tb,
                        const ResourceBudget& rb, const SolveOptions& opts) {
  try {
    return solve_p3(pairing, topo, ch, tb, rb, opts).total_cost;
  } catch (const Error&) {
    return kInfeasibleCost;
  }
}

Allocation solve_rate_objective(RateVariant variant, const std::vector<double>& margins,
                                const Pairing& pairing, const Topology& topo,
                                const ChannelRealization& ch, const LoopBudget& tb,
                                const ResourceBudget& rb, const SolveOptions& opts) {
  const auto loops = make_loop_models(pairing, topo, ch, rb, opts.sensing_cap);
  const int K = static_cast<int>(loops.size());
  if (static_cast<int>(margins.size()) != K)
    throw DomainError("solve_rate_objective: one margin per loop required");
  std::vector<double> targets;
  for (int k = 0; k < K; ++k) targets.push_back(loops[k].cost.e + margins[k]);
  const ProgramSetup setup = analyze(loops, tb, rb, true);
  precheck(loops, setup, targets);
  const ProgVariant pv = variant == RateVariant::MaxSum    ? ProgVariant::MaxSum
                         : variant == RateVariant::MaxMin  ? ProgVariant::MaxMin
                                                           : ProgVariant::MaxMinMargin;
  const SolveOutput sol =
      run_program(pv, loops, tb, rb, targets, setup.d_scale, true, opts);
  return finalize(sol.z, loops, tb, rb, sol.ipm, opts, false);
}

Allocation solve_decoupled_cca_da(const Pairing& pairing, const Topology& topo,
                                  const ChannelRealization& ch, const LoopBudget& tb,
                                  const ResourceBudget& rb, const SolveOptions& opts) {
  const auto loops = make_loop_models(pairing, topo, ch, rb, opts.sensing_cap);
  const int K = static_cast<int>(loops.size());
  std::vector<double> targets;
  for (const auto& lm : loops) targets.push_back(lm.cost.e);
  const ProgramSetup setup = analyze(loops, tb, rb, false);
  precheck(loops, setup, targets);
  // Stage 1: communication-only optimum, computing assumed unbounded.
  const SolveOutput sol = run_program(ProgVariant::P3, loops, tb, rb, targets,
                                      setup.d_scale, false, opts);
  Allocation stage1 = finalize(sol.z, loops, tb, rb, sol.ipm, opts, true);

  // Stage 2: CPU shared proportionally to the demand implied by stage 1.
  std::vector<double> demand(K);
  double total_demand = 0.0;
  for (int k = 0; k < K; ++k) {
    demand[k] = loops[k].gamma * stage1.loops[k].D_u / tb.t_c;
    total_demand += demand[k];
  }
  const double scale = total_demand > rb.f_max ? rb.f_max / total_demand : 1.0;

  Allocation out;
  out.iterations = stage1.iterations;
  out.stationarity = stage1.stationarity;
  double sum_b = 0.0, sum_f = 0.0, sum_p = 0.0;
  bool all_stable = true;
  out.total_cost = 0.0;
  for (int k = 0; k < K; ++k) {
    LoopAllocation la = stage1.loops[k];
    la.f = demand[k] * scale;
    const LoopEval ev = evaluate_loop(loops[k], tb, la.B, la.f, la.p_d, false);
    la.D_u = ev.D_u;
    la.D_d = ev.D_d;
    la.D_sc3 = ev.D_sc3;
    la.cost = ev.cost;
    all_stable = all_stable && ev.stable;
    sum_b += la.B;
    sum_f += la.f;
    sum_p += la.p_d;
    out.loops.push_back(la);
    out.total_cost += la.cost;
  }
  out.max_violation = std::max({(sum_b - rb.B_max) / rb.B_max,
                                (sum_f - rb.f_max) / rb.f_max,
                                (sum_p - rb.p_d_max) / rb.p_d_max, 0.0});
  out.feasible = all_stable && out.max_violation <= opts.feas_tol;
  return out;
}

}  // namespace sc3
