#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "sc3/critic.hpp"
#include "sc3/rng.hpp"

using namespace sc3;

namespace {

// K colocated sensor/actuator loops near the EIH; one sensor per actuator.
Topology make_topo(const std::vector<double>& entropies, double gamma = 100.0) {
  Topology topo;
  topo.eih_position = {2000.0, 2000.0};
  topo.eih_height = 300.0;
  for (std::size_t k = 0; k < entropies.size(); ++k) {
    SensorTraits s;
    s.position = {600.0 + 300.0 * static_cast<double>(k), 600.0};
    s.range = 1000.0;
    s.p_u_max = 0.1;
    s.rho = 0.01;
    s.gamma = gamma;
    topo.sensors.push_back(s);
    ActuatorTraits a;
    a.position = {600.0 + 300.0 * static_cast<double>(k), 800.0};
    a.control = LoopCostParams{entropies[k], 100, 0.01, 1.0, 1.0};
    topo.actuators.push_back(a);
  }
  topo.effective_sets = effective_sensor_sets(topo);
  return topo;
}

ChannelRealization fixed_channels(std::size_t k, double ul = 1.5e-9, double dl = 1.5e-9) {
  ChannelRealization ch;
  ch.ul_gain_sq.assign(k, ul);
  ch.dl_gain_sq.assign(k, dl);
  return ch;
}

Pairing identity_pairing(std::size_t k) {
  Pairing p(k);
  for (std::size_t i = 0; i < k; ++i) p[i] = static_cast<int>(i);
  return p;
}

}  // namespace

TEST_CASE("optimal UL power picks the paired sensor's maximum") {
  std::vector<SensorTraits> sensors(3);
  sensors[0].p_u_max = 0.1;
  sensors[1].p_u_max = 0.2;
  sensors[2].p_u_max = 0.05;
  const std::vector<double> p = optimal_ul_power({2, 0}, sensors);
  REQUIRE(p.size() == 2);
  CHECK(p[0] == 0.05);
  CHECK(p[1] == 0.1);
}

TEST_CASE("rate functions are strictly concave (midpoint tests)") {
  LoopModel lm;
  lm.snr_num_ul = 3.8e10;
  lm.snr_num_dl = 3.9e11;
  lm.gamma = 100.0;
  lm.rho = 0.01;
  const LoopBudget tb;
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const double b1 = rng.uniform(1e4, 5e6);
    const double b2 = rng.uniform(1e4, 5e6);
    if (std::abs(b1 - b2) < 1.0) continue;
    const double mid = rate_ul(lm, tb, 0.5 * (b1 + b2));
    CHECK(mid > 0.5 * (rate_ul(lm, tb, b1) + rate_ul(lm, tb, b2)));
    const double p1 = rng.uniform(0.01, 4.0);
    const double p2 = rng.uniform(0.01, 4.0);
    const double dmid = rate_dl(lm, tb, 0.5 * (b1 + b2), 0.5 * (p1 + p2));
    CHECK(dmid >= 0.5 * (rate_dl(lm, tb, b1, p1) + rate_dl(lm, tb, b2, p2)) - 1e-9);
  }
  // Removable singularity at B = 0 and the B -> inf limit p * |h|^2 / (N0 ln 2).
  CHECK(rate_ul(lm, tb, 0.0) == 0.0);
  CHECK(rate_dl(lm, tb, 1e15, 1.0) ==
        doctest::Approx(tb.t_d * lm.snr_num_dl / std::log(2.0)).epsilon(1e-3));
}

TEST_CASE("solve_p3 rejects a zero bandwidth budget") {
  const Topology topo = make_topo({10.0, 60.0});
  const ChannelRealization ch = fixed_channels(2);
  ResourceBudget rb;
  rb.B_max = 0.0;
  CHECK_THROWS_AS(solve_p3(identity_pairing(2), topo, ch, LoopBudget{}, rb),
                  InfeasibleError);
}

TEST_CASE("solve_p3 splits resources symmetrically between identical loops") {
  const Topology topo = make_topo({40.0, 40.0});
  const ChannelRealization ch = fixed_channels(2);
  const Allocation al = solve_p3(identity_pairing(2), topo, ch, LoopBudget{}, ResourceBudget{});
  REQUIRE(al.feasible);
  REQUIRE(al.loops.size() == 2);
  CHECK(std::abs(al.loops[0].B - al.loops[1].B) / al.loops[0].B < 1e-4);
  CHECK(std::abs(al.loops[0].f - al.loops[1].f) / al.loops[0].f < 1e-4);
  CHECK(std::abs(al.loops[0].p_d - al.loops[1].p_d) / al.loops[0].p_d < 1e-4);
  CHECK(std::abs(al.loops[0].cost - al.loops[1].cost) / al.loops[0].cost < 1e-4);
}

TEST_CASE("solve_p3 optimum satisfies every constraint and is internally consistent") {
  const Topology topo = make_topo({10.0, 100.0, 60.0});
  Rng rng(9);
  const LoopBudget tb;
  const ResourceBudget rb;
  for (int trial = 0; trial < 10; ++trial) {
    ChannelRealization ch;
    for (int i = 0; i < 3; ++i) {
      ch.ul_gain_sq.push_back(1.5e-9 * rng.exponential());
      ch.dl_gain_sq.push_back(1.5e-9 * rng.exponential());
    }
    const Allocation al = solve_p3(identity_pairing(3), topo, ch, tb, rb);
    REQUIRE(al.feasible);
    CHECK(al.max_violation <= 1e-8);
    double sum_b = 0.0, sum_f = 0.0, sum_p = 0.0, sum_cost = 0.0;
    const auto loops = make_loop_models(identity_pairing(3), topo, ch, rb, false);
    for (int k = 0; k < 3; ++k) {
      const LoopAllocation& la = al.loops[k];
      sum_b += la.B;
      sum_f += la.f;
      sum_p += la.p_d;
      sum_cost += la.cost;
      CHECK(la.B > 0.0);
      CHECK(la.f > 0.0);
      CHECK(la.p_d > 0.0);
      CHECK(la.D_sc3 > topo.actuators[k].control.e);
      // The reported operating point must agree with the closed-form evaluation.
      const LoopEval ev = evaluate_loop(loops[k], tb, la.B, la.f, la.p_d);
      CHECK(la.D_u == doctest::Approx(ev.D_u).epsilon(1e-6));
      CHECK(la.D_d == doctest::Approx(ev.D_d).epsilon(1e-6));
      CHECK(la.D_sc3 == doctest::Approx(ev.D_sc3).epsilon(1e-6));
      CHECK(la.cost == doctest::Approx(ev.cost).epsilon(1e-6));
      // CNER is tight: no slack between D_sc3 and min(rho D_u, D_d).
      CHECK(la.D_sc3 ==
            doctest::Approx(std::min(loops[k].rho * la.D_u, la.D_d)).epsilon(1e-6));
    }
    CHECK(sum_b <= rb.B_max * (1.0 + 1e-8));
    CHECK(sum_f <= rb.f_max * (1.0 + 1e-8));
    CHECK(sum_p <= rb.p_d_max * (1.0 + 1e-8));
    CHECK(al.total_cost == doctest::Approx(sum_cost).epsilon(1e-9));
  }
}

TEST_CASE("solve_p3 cost is monotone in every budget") {
  const Topology topo = make_topo({10.0, 60.0});
  Rng rng(31);
  const LoopBudget tb;
  for (int trial = 0; trial < 50; ++trial) {
    ChannelRealization ch;
    for (int i = 0; i < 2; ++i) {
      ch.ul_gain_sq.push_back(1.5e-9 * rng.exponential());
      ch.dl_gain_sq.push_back(1.5e-9 * rng.exponential());
    }
    ResourceBudget rb;
    rb.B_max = rng.uniform(4e5, 2e6);
    rb.f_max = rng.uniform(2e8, 2e9);
    rb.p_d_max = rng.uniform(1.0, 8.0);
    const double base = solve_p3(identity_pairing(2), topo, ch, tb, rb).total_cost;
    ResourceBudget more_b = rb, more_f = rb, more_p = rb;
    more_b.B_max *= 1.5;
    more_f.f_max *= 1.5;
    more_p.p_d_max *= 1.5;
    CHECK(solve_p3(identity_pairing(2), topo, ch, tb, more_b).total_cost <=
          base * (1.0 + 1e-5));
    CHECK(solve_p3(identity_pairing(2), topo, ch, tb, more_f).total_cost <=
          base * (1.0 + 1e-5));
    CHECK(solve_p3(identity_pairing(2), topo, ch, tb, more_p).total_cost <=
          base * (1.0 + 1e-5));
  }
}

TEST_CASE("sensing cap bounds the UL rate") {
  Topology topo = make_topo({10.0, 60.0});
  for (auto& s : topo.sensors) s.sensing_rate = 8000.0;
  const ChannelRealization ch = fixed_channels(2);
  SolveOptions opts;
  opts.sensing_cap = true;
  const Allocation capped =
      solve_p3(identity_pairing(2), topo, ch, LoopBudget{}, ResourceBudget{}, opts);
  REQUIRE(capped.feasible);
  for (const auto& la : capped.loops) CHECK(la.D_u <= 8000.0 * (1.0 + 1e-6));
  const Allocation open = solve_p3(identity_pairing(2), topo, ch, LoopBudget{}, ResourceBudget{});
  CHECK(open.total_cost <= capped.total_cost * (1.0 + 1e-6));
}

TEST_CASE("evaluate_pairing returns the +inf sentinel on infeasibility") {
  const Topology topo = make_topo({10.0, 60.0});
  const ChannelRealization ch = fixed_channels(2);
  ResourceBudget rb;
  rb.B_max = 0.0;
  CHECK(evaluate_pairing(identity_pairing(2), topo, ch, LoopBudget{}, rb) ==
        kInfeasibleCost);
  CHECK(std::isfinite(
      evaluate_pairing(identity_pairing(2), topo, ch, LoopBudget{}, ResourceBudget{})));
}

TEST_CASE("max-min rate equalizes CNERs of identical loops") {
  const Topology topo = make_topo({40.0, 40.0});
  const ChannelRealization ch = fixed_channels(2);
  const Allocation al = solve_rate_objective(RateVariant::MaxMin, {15.0, 15.0},
                                             identity_pairing(2), topo, ch, LoopBudget{},
                                             ResourceBudget{});
  REQUIRE(al.feasible);
  CHECK(std::abs(al.loops[0].D_sc3 - al.loops[1].D_sc3) / al.loops[0].D_sc3 < 1e-4);
}

TEST_CASE("max-min margin rate equalizes stability margins") {
  const Topology topo = make_topo({10.0, 100.0});
  const ChannelRealization ch = fixed_channels(2);
  const Allocation al = solve_rate_objective(RateVariant::MaxMinMargin, {15.0, 15.0},
                                             identity_pairing(2), topo, ch, LoopBudget{},
                                             ResourceBudget{});
  REQUIRE(al.feasible);
  // Equal margins D - e mean the CNER gap reproduces the entropy gap of 90 bits.
  CHECK(al.loops[1].D_sc3 - al.loops[0].D_sc3 == doctest::Approx(90.0).epsilon(1e-3));
}

TEST_CASE("max-sum rate pins the weak loop at its margin constraint") {
  Topology topo = make_topo({10.0, 10.0});
  // Make both loops purely DL-limited so the sum objective trades DL power.
  for (auto& s : topo.sensors) s.rho = 1.0;
  ChannelRealization ch = fixed_channels(2, 1.5e-9, 1.5e-15);
  ch.dl_gain_sq[0] *= 0.05;  // loop 0 has a much weaker downlink
  const Allocation al = solve_rate_objective(RateVariant::MaxSum, {15.0, 15.0},
                                             identity_pairing(2), topo, ch, LoopBudget{},
                                             ResourceBudget{});
  REQUIRE(al.feasible);
  CHECK(al.loops[0].D_sc3 == doctest::Approx(10.0 + 15.0).epsilon(1e-3));
  CHECK(al.loops[1].D_sc3 > al.loops[0].D_sc3);
}

TEST_CASE("rate objectives throw when a margin cannot be met") {
  const Topology topo = make_topo({10.0, 60.0});
  const ChannelRealization ch = fixed_channels(2);
  ResourceBudget rb;
  rb.B_max = 1e3;  // far too little bandwidth for e + 15
  CHECK_THROWS_AS(solve_rate_objective(RateVariant::MaxMin, {15.0, 15.0},
                                       identity_pairing(2), topo, ch, LoopBudget{}, rb),
                  InfeasibleError);
}

TEST_CASE("decoupled allocation matches the joint one when CPU is abundant") {
  const Topology topo = make_topo({10.0, 60.0});
  const ChannelRealization ch = fixed_channels(2);
  ResourceBudget rb;
  rb.f_max = 1e14;  // compute never binds
  const Allocation joint = solve_p3(identity_pairing(2), topo, ch, LoopBudget{}, rb);
  const Allocation split =
      solve_decoupled_cca_da(identity_pairing(2), topo, ch, LoopBudget{}, rb);
  REQUIRE(split.feasible);
  CHECK(split.total_cost == doctest::Approx(joint.total_cost).epsilon(1e-3));
}

TEST_CASE("decoupled allocation never beats the joint optimum") {
  const Topology topo = make_topo({10.0, 100.0, 60.0});
  Rng rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    ChannelRealization ch;
    for (int i = 0; i < 3; ++i) {
      ch.ul_gain_sq.push_back(1.5e-9 * rng.exponential());
      ch.dl_gain_sq.push_back(1.5e-9 * rng.exponential());
    }
    ResourceBudget rb;
    rb.f_max = 8e8;  // scarce CPU: the decoupled scheme misallocates it
    const Allocation joint = solve_p3(identity_pairing(3), topo, ch, LoopBudget{}, rb);
    double split_cost = kInfeasibleCost;
    try {
      const Allocation split =
          solve_decoupled_cca_da(identity_pairing(3), topo, ch, LoopBudget{}, rb);
      if (split.feasible) split_cost = split.total_cost;
    } catch (const InfeasibleError&) {
      // A decoupled split that cannot stabilize every loop counts as worse.
    }
    CHECK(split_cost >= joint.total_cost * (1.0 - 1e-6));
  }
}

TEST_CASE("decoupled allocation handles a single loop") {
  const Topology topo = make_topo({60.0});
  const ChannelRealization ch = fixed_channels(1);
  const Allocation al =
      solve_decoupled_cca_da(identity_pairing(1), topo, ch, LoopBudget{}, ResourceBudget{});
  REQUIRE(al.feasible);
  const Allocation joint = solve_p3(identity_pairing(1), topo, ch, LoopBudget{}, ResourceBudget{});
  CHECK(al.total_cost == doctest::Approx(joint.total_cost).epsilon(1e-3));
}
