#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "sc3/baselines.hpp"
#include "sc3/rng.hpp"

using namespace sc3;

namespace {

Topology dense_topo(int S, int K, const std::vector<double>& entropies) {
  Topology topo;
  topo.eih_position = {2000.0, 2000.0};
  topo.eih_height = 300.0;
  for (int s = 0; s < S; ++s) {
    SensorTraits t;
    t.position = {600.0 + 100.0 * s, 600.0};
    t.range = 2000.0;
    t.p_u_max = 0.1;
    t.rho = 0.01;
    t.gamma = 60.0 + 40.0 * s;
    topo.sensors.push_back(t);
  }
  for (int k = 0; k < K; ++k) {
    ActuatorTraits a;
    a.position = {700.0 + 150.0 * k, 900.0};
    a.control = LoopCostParams{entropies[static_cast<std::size_t>(k)], 100, 0.01, 1.0, 1.0};
    topo.actuators.push_back(a);
  }
  topo.effective_sets = effective_sensor_sets(topo);
  return topo;
}

ChannelRealization random_channels(int S, int K, Rng& rng) {
  ChannelRealization ch;
  for (int s = 0; s < S; ++s) ch.ul_gain_sq.push_back(1.5e-9 * rng.exponential());
  for (int k = 0; k < K; ++k) ch.dl_gain_sq.push_back(1.5e-9 * rng.exponential());
  return ch;
}

double brute_force_best(const Eigen::MatrixXd& U,
                        const std::vector<std::vector<int>>& sets) {
  double best = -1.0;
  for (const Pairing& p : enumerate_pairings(sets)) {
    double u = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) u += U(p[k], static_cast<int>(k));
    best = std::max(best, u);
  }
  return best;
}

}  // namespace

TEST_CASE("utility: omega endpoints reproduce the pure schemes") {
  const std::vector<double> ul = {1e-9, 4e-9, 2e-9};
  const std::vector<double> gam = {100.0, 200.0, 50.0};
  const std::vector<double> ent = {10.0, 30.0};
  const std::vector<std::vector<int>> sets = {{0, 1, 2}, {0, 1, 2}};
  const UtilityMatrix comm = build_utility(UtilityScheme::CommFirst, 0.3, ul, gam, ent, sets);
  const UtilityMatrix comp = build_utility(UtilityScheme::CompFirst, 0.3, ul, gam, ent, sets);
  const UtilityMatrix cca1 = build_utility(UtilityScheme::Cca, 1.0, ul, gam, ent, sets);
  const UtilityMatrix cca0 = build_utility(UtilityScheme::Cca, 0.0, ul, gam, ent, sets);
  CHECK((cca1.U - comm.U).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((cca0.U - comp.U).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("utility: actuator priorities are normalized entropies") {
  const std::vector<double> ul = {2e-9, 2e-9};
  const std::vector<double> gam = {100.0, 100.0};
  const std::vector<double> ent = {10.0, 30.0};
  const std::vector<std::vector<int>> sets = {{0, 1}, {0, 1}};
  const UtilityMatrix um = build_utility(UtilityScheme::CommFirst, 0.3, ul, gam, ent, sets);
  // Identical sensors: the utility ratio between columns is the entropy ratio
  // 10/40 : 30/40 = 0.25 : 0.75.
  CHECK(um.U(0, 1) / um.U(0, 0) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(um.U(0, 0) == doctest::Approx(um.U(1, 0)).epsilon(1e-12));
}

TEST_CASE("utility: per-column sensor scores are affine in omega") {
  const std::vector<double> ul = {1e-9, 4e-9, 2e-9};
  const std::vector<double> gam = {100.0, 200.0, 50.0};
  const std::vector<double> ent = {10.0, 30.0};
  const std::vector<std::vector<int>> sets = {{0, 1, 2}, {1, 2}};
  const UtilityMatrix a = build_utility(UtilityScheme::Cca, 0.2, ul, gam, ent, sets);
  const UtilityMatrix b = build_utility(UtilityScheme::Cca, 0.8, ul, gam, ent, sets);
  const UtilityMatrix mid = build_utility(UtilityScheme::Cca, 0.5, ul, gam, ent, sets);
  for (int k = 0; k < 2; ++k)
    for (int s : sets[k])
      CHECK(mid.U(s, k) == doctest::Approx(0.5 * (a.U(s, k) + b.U(s, k))).epsilon(1e-12));
  CHECK(a.U(0, 1) == 0.0);  // outside the effective set
}

TEST_CASE("utility: an actuator with no usable sensor is reported by index") {
  const std::vector<double> ul = {0.0, 0.0};
  const std::vector<double> gam = {100.0, 100.0};
  const std::vector<double> ent = {10.0, 30.0};
  const std::vector<std::vector<int>> sets = {{0}, {1}};
  CHECK_THROWS_WITH_AS(build_utility(UtilityScheme::CommFirst, 0.3, ul, gam, ent, sets),
                       doctest::Contains("actuator 0"), InfeasibleError);
}

TEST_CASE("hungarian: hand-checked 2x2 instance") {
  UtilityMatrix um;
  um.U = Eigen::MatrixXd(2, 2);
  um.U << 0.6, 0.1, 0.3, 0.4;
  // 0.6 + 0.4 = 1.0 beats 0.1 + 0.3 = 0.4.
  CHECK(hungarian_match(um) == Pairing{0, 1});
}

TEST_CASE("hungarian: diagonal dominance yields the identity pairing") {
  UtilityMatrix um;
  um.U = Eigen::MatrixXd::Constant(4, 4, 0.05);
  for (int i = 0; i < 4; ++i) um.U(i, i) = 0.9;
  CHECK(hungarian_match(um) == Pairing{0, 1, 2, 3});
}

TEST_CASE("hungarian matches brute-force enumeration on random instances") {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const int S = 6, K = 3;
    std::vector<std::vector<int>> sets(K);
    Eigen::MatrixXd U = Eigen::MatrixXd::Zero(S, K);
    for (int k = 0; k < K; ++k)
      for (int s = 0; s < S; ++s)
        if (rng.uniform() < 0.7) {
          sets[k].push_back(s);
          U(s, k) = rng.uniform(0.01, 1.0);
        }
    bool ok = true;
    for (int k = 0; k < K; ++k) ok = ok && !sets[k].empty();
    if (!ok) continue;
    UtilityMatrix um;
    um.U = U;
    Pairing p;
    try {
      p = hungarian_match(um);
    } catch (const InfeasibleError&) {
      // No perfect matching exists; enumeration must agree.
      CHECK(enumerate_pairings(sets).empty());
      continue;
    }
    double util = 0.0;
    for (int k = 0; k < K; ++k) {
      CHECK(U(p[k], k) > 0.0);
      util += U(p[k], k);
    }
    CHECK(util == doctest::Approx(brute_force_best(U, sets)).epsilon(1e-9));
  }
}

TEST_CASE("pairing enumeration") {
  CHECK(enumerate_pairings({{1, 2}, {2, 3}}).size() == 3);  // (1,2)(1,3)(2,3)
  CHECK(enumerate_pairings({{0}, {1}, {2}}).size() == 1);
  std::vector<std::vector<int>> full(5);
  for (auto& s : full) s = {0, 1, 2, 3, 4};
  CHECK(enumerate_pairings(full).size() == 120);
  CHECK_THROWS_AS(enumerate_pairings(full, 100), DomainError);
}

TEST_CASE("exhaustive search") {
  Rng rng(3);
  SUBCASE("single pair") {
    const Topology topo = dense_topo(1, 1, {10.0});
    const ChannelRealization ch = random_channels(1, 1, rng);
    const auto [p, al] = exhaustive_search(topo, ch, LoopBudget{}, ResourceBudget{});
    CHECK(p == Pairing{0});
    CHECK(al.feasible);
    CHECK(al.total_cost ==
          doctest::Approx(evaluate_pairing(p, topo, ch, LoopBudget{}, ResourceBudget{}))
              .epsilon(1e-12));
  }
  SUBCASE("no feasible pairing returns a sentinel, not an error") {
    const Topology topo = dense_topo(2, 2, {10.0, 60.0});
    const ChannelRealization ch = random_channels(2, 2, rng);
    ResourceBudget rb;
    rb.B_max = 1e3;
    const auto [p, al] = exhaustive_search(topo, ch, LoopBudget{}, rb);
    CHECK_FALSE(al.feasible);
    CHECK(al.total_cost == kInfeasibleCost);
    CHECK(p.size() == 2);
  }
  SUBCASE("never beaten by any heuristic") {
    const Topology topo = dense_topo(5, 3, {10.0, 60.0, 40.0});
    for (int trial = 0; trial < 5; ++trial) {
      const ChannelRealization ch = random_channels(5, 3, rng);
      const auto [p, al] = exhaustive_search(topo, ch, LoopBudget{}, ResourceBudget{});
      REQUIRE(al.feasible);
      for (const char* scheme : {"comm_first", "comp_first", "cca", "cca_da", "qos"}) {
        const BaselineResult r =
            run_baseline(scheme, topo, ch, LoopBudget{}, ResourceBudget{});
        CHECK(al.total_cost <= r.total_cost * (1.0 + 1e-6));
      }
    }
  }
}

TEST_CASE("qos allocation splits budgets by entropy share") {
  const Topology topo = dense_topo(4, 4, {10.0, 100.0, 60.0, 40.0});
  Rng rng(8);
  const ChannelRealization ch = random_channels(4, 4, rng);
  const ResourceBudget rb;
  const Allocation al = qos_allocation({0, 1, 2, 3}, topo, ch, LoopBudget{}, rb);
  const double total = 10.0 + 100.0 + 60.0 + 40.0;
  const std::vector<double> shares = {10.0 / total, 100.0 / total, 60.0 / total,
                                      40.0 / total};
  for (int k = 0; k < 4; ++k) {
    CHECK(al.loops[k].B == doctest::Approx(shares[k] * rb.B_max).epsilon(1e-12));
    CHECK(al.loops[k].f == doctest::Approx(shares[k] * rb.f_max).epsilon(1e-12));
    CHECK(al.loops[k].p_d == doctest::Approx(shares[k] * rb.p_d_max).epsilon(1e-12));
  }
  // The optimized allocation for the same pairing can only be better.
  const Allocation opt = solve_p3({0, 1, 2, 3}, topo, ch, LoopBudget{}, rb);
  CHECK(al.total_cost >= opt.total_cost * (1.0 - 1e-9));

  // Equal entropies mean equal quarters.
  const Topology eq = dense_topo(4, 4, {40.0, 40.0, 40.0, 40.0});
  const Allocation al2 = qos_allocation({0, 1, 2, 3}, eq, ch, LoopBudget{}, rb);
  for (int k = 0; k < 4; ++k)
    CHECK(al2.loops[k].B == doctest::Approx(0.25 * rb.B_max).epsilon(1e-12));
}

TEST_CASE("qos allocation reports a sentinel when a loop cannot stabilize") {
  const Topology topo = dense_topo(2, 2, {10.0, 100.0});
  Rng rng(8);
  const ChannelRealization ch = random_channels(2, 2, rng);
  ResourceBudget rb;
  rb.f_max = 1e6;  // the fixed split starves both loops of CPU
  const Allocation al = qos_allocation({0, 1}, topo, ch, LoopBudget{}, rb);
  CHECK_FALSE(al.feasible);
  CHECK(al.total_cost == kInfeasibleCost);
}

TEST_CASE("run_baseline dispatch") {
  const Topology topo = dense_topo(4, 2, {10.0, 60.0});
  Rng rng(15);
  const ChannelRealization ch = random_channels(4, 2, rng);
  CHECK_THROWS_AS(run_baseline("no_such_scheme", topo, ch, LoopBudget{}, ResourceBudget{}),
                  ConfigError);
  CHECK_THROWS_AS(run_baseline("loac", topo, ch, LoopBudget{}, ResourceBudget{}),
                  ConfigError);  // needs a policy
  for (const char* scheme :
       {"comm_first", "comp_first", "cca", "cca_da", "qos", "exhaustive", "max_sum_rate",
        "max_min_rate", "max_min_margin_rate"}) {
    const BaselineResult r = run_baseline(scheme, topo, ch, LoopBudget{}, ResourceBudget{});
    CHECK(r.scheme == scheme);
    REQUIRE(r.pairing.size() == 2);
    CHECK(r.pairing[0] != r.pairing[1]);
    CHECK(r.feasible);
    CHECK(std::isfinite(r.total_cost));
    // Pairings stay inside the effective sets.
    for (int k = 0; k < 2; ++k) {
      const auto& set = topo.effective_sets[k];
      CHECK(std::find(set.begin(), set.end(), r.pairing[k]) != set.end());
    }
  }
}

TEST_CASE("rate-scheme infeasibility is a sentinel result, not an error") {
  const Topology topo = dense_topo(4, 2, {10.0, 60.0});
  Rng rng(15);
  const ChannelRealization ch = random_channels(4, 2, rng);
  ResourceBudget rb;
  rb.B_max = 2e5;  // too tight for the e + 15 margins
  rb.f_max = 1e8;
  const BaselineResult r = run_baseline("max_min_rate", topo, ch, LoopBudget{}, rb);
  CHECK_FALSE(r.feasible);
  CHECK(r.total_cost == kInfeasibleCost);
}

TEST_CASE("loac baseline with a freshly initialized policy is valid and no better than exhaustive") {
  const Topology topo = dense_topo(4, 2, {10.0, 60.0});
  const EnvParams env;
  Rng rng(23);
  const ChannelRealization ch = random_channels(4, 2, rng);
  const PairingPolicy policy =
      PairingPolicy::init(77, make_normalization(topo, env, 50.0, 500.0));
  BaselineParams params;
  params.policy = &policy;
  params.eval_seed = 5;
  const BaselineResult r = run_baseline("loac", topo, ch, LoopBudget{}, ResourceBudget{}, params);
  CHECK(r.feasible);
  const BaselineResult ex =
      run_baseline("exhaustive", topo, ch, LoopBudget{}, ResourceBudget{});
  CHECK(r.total_cost >= ex.total_cost * (1.0 - 1e-9));
  // Deterministic for a fixed evaluation seed.
  const BaselineResult r2 = run_baseline("loac", topo, ch, LoopBudget{}, ResourceBudget{}, params);
  CHECK(r2.pairing == r.pairing);
  CHECK(r2.total_cost == r.total_cost);
}
