#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "sc3/actor.hpp"
#include "sc3/baselines.hpp"

using namespace sc3;

namespace {

// S sensors / K actuators clustered so every sensor covers every actuator.
Topology dense_topo(int S, int K) {
  Topology topo;
  topo.eih_position = {2000.0, 2000.0};
  topo.eih_height = 300.0;
  const std::vector<double> entropies = {10.0, 60.0, 40.0, 25.0};
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
    a.control = LoopCostParams{entropies[static_cast<std::size_t>(k) % 4], 100, 0.01,
                               1.0, 1.0};
    topo.actuators.push_back(a);
  }
  topo.effective_sets = effective_sensor_sets(topo);
  return topo;
}

NormalizationRecord simple_norm() {
  NormalizationRecord rec;
  rec.sensor[0] = {ColumnScale::Log, 1e-12, 1e-8};
  rec.sensor[1] = {ColumnScale::Log, 50.0, 500.0};
  rec.actuator[0] = {ColumnScale::Log, 1e-12, 1e-8};
  rec.actuator[1] = {ColumnScale::Linear, 10.0, 100.0};
  return rec;
}

void zero_weights(PairingPolicy& p) {
  p.enc_sensor.W.setZero();
  p.enc_sensor.b.setZero();
  p.enc_actuator.W.setZero();
  p.enc_actuator.b.setZero();
  for (auto& layer : p.pairing) {
    layer.W.setZero();
    layer.b.setZero();
  }
}

TraitMatrices traits_for(const Topology& topo, const ChannelRealization& ch,
                         const NormalizationRecord& rec) {
  std::vector<double> gammas, entropies;
  for (const auto& s : topo.sensors) gammas.push_back(s.gamma);
  for (const auto& a : topo.actuators) entropies.push_back(a.control.e);
  return normalize_traits(ch.ul_gain_sq, gammas, ch.dl_gain_sq, entropies, rec);
}

}  // namespace

TEST_CASE("column normalization") {
  const ColumnNorm lin{ColumnScale::Linear, 10.0, 100.0};
  CHECK(apply_norm(lin, 10.0) == doctest::Approx(0.0));
  CHECK(apply_norm(lin, 100.0) == doctest::Approx(1.0));
  CHECK(apply_norm(lin, 55.0) == doctest::Approx(0.5));
  CHECK(apply_norm(lin, 5.0) == 0.0);    // clamped
  CHECK(apply_norm(lin, 200.0) == 1.0);  // clamped

  const ColumnNorm lg{ColumnScale::Log, 50.0, 500.0};
  CHECK(apply_norm(lg, std::sqrt(50.0 * 500.0)) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(apply_norm(lg, 50.0) == doctest::Approx(0.0));
  CHECK(apply_norm(lg, 500.0) == doctest::Approx(1.0));
  CHECK_THROWS_AS(apply_norm(lg, 0.0), DomainError);
  CHECK_THROWS_AS(apply_norm(lg, -1.0), DomainError);

  const ColumnNorm constant{ColumnScale::Linear, 7.0, 7.0};
  CHECK(apply_norm(constant, 7.0) == 0.5);
  CHECK(apply_norm(constant, 123.0) == 0.5);
}

TEST_CASE("scenario-derived normalization spans the trait ranges") {
  const Topology topo = dense_topo(4, 2);
  const EnvParams env;
  const NormalizationRecord rec = make_normalization(topo, env, 50.0, 500.0);
  CHECK(rec.sensor[1].scale == ColumnScale::Log);
  CHECK(rec.sensor[1].lo == 50.0);
  CHECK(rec.sensor[1].hi == 500.0);
  CHECK(rec.actuator[1].scale == ColumnScale::Linear);
  CHECK(rec.actuator[1].lo == 10.0);
  CHECK(rec.actuator[1].hi == 60.0);
  // Gain columns bracket the large-scale values with room for fading.
  std::vector<double> ul, dl;
  large_scale_gains(topo, env, ul, dl);
  const auto [ul_min, ul_max] = std::minmax_element(ul.begin(), ul.end());
  CHECK(rec.sensor[0].lo < *ul_min);
  CHECK(rec.sensor[0].hi > *ul_max);
  CHECK(rec.sensor[0].scale == ColumnScale::Log);
  // Typical realized gains land strictly inside the span.
  Rng rng(4);
  const ChannelRealization ch = realize_channels(topo, env, rng);
  for (double g : ch.ul_gain_sq) {
    const double v = apply_norm(rec.sensor[0], g);
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("forward pass: uniform scores under zero weights, masking, determinism") {
  const Topology topo = dense_topo(4, 2);
  PairingPolicy policy = PairingPolicy::init(3, simple_norm());
  ChannelRealization ch;
  ch.ul_gain_sq = {1e-9, 2e-9, 5e-10, 3e-9};
  ch.dl_gain_sq = {1e-9, 4e-9};
  const TraitMatrices traits = traits_for(topo, ch, policy.norm);

  const ForwardResult a = forward(policy, traits, topo.effective_sets);
  const ForwardResult b = forward(policy, traits, topo.effective_sets);
  CHECK(a.Y == b.Y);  // deterministic
  REQUIRE(a.Y.rows() == 4);
  REQUIRE(a.Y.cols() == 2);
  for (int k = 0; k < 2; ++k) {
    CHECK(a.Y.col(k).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(a.colsoft.col(k).sum() == doctest::Approx(1.0).epsilon(1e-12));
    for (int s = 0; s < 4; ++s) CHECK(a.Y(s, k) > 0.0);
  }

  zero_weights(policy);
  const ForwardResult u = forward(policy, traits, topo.effective_sets);
  for (int k = 0; k < 2; ++k)
    for (int s = 0; s < 4; ++s) {
      CHECK(u.colsoft(s, k) == doctest::Approx(0.25).epsilon(1e-12));
      CHECK(u.Y(s, k) == doctest::Approx(0.25).epsilon(1e-12));
    }

  // Masked sensors carry zero renormalized probability.
  Topology masked = topo;
  masked.effective_sets = {{0, 1, 2, 3}, {1, 3}};
  PairingPolicy p2 = PairingPolicy::init(3, simple_norm());
  const ForwardResult m = forward(p2, traits, masked.effective_sets);
  CHECK(m.Y(0, 1) == 0.0);
  CHECK(m.Y(2, 1) == 0.0);
  CHECK(m.Y.col(1).sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("sampler renormalizes over the compatible unselected sensors") {
  // Single actuator, effective set {0, 1} with raw scores (0.2, 0.3, 0.5):
  // the corrected distribution is (0.4, 0.6).
  Eigen::MatrixXd scores(3, 1);
  scores << 0.2, 0.3, 0.5;
  const std::vector<std::vector<int>> sets = {{0, 1}};
  Rng rng(99);
  int count0 = 0;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    const SampleResult sr = sample_pairings(scores, sets, 1, 10, rng);
    REQUIRE(sr.pairings.size() == 1);
    const int s = sr.pairings[0][0];
    REQUIRE((s == 0 || s == 1));
    if (s == 0) ++count0;
  }
  CHECK(std::abs(count0 / static_cast<double>(draws) - 0.4) < 0.01);
}

TEST_CASE("sampler and greedy decode respect forced matchings") {
  // Actuator 0 can only use sensor 0, so actuator 1 must take sensor 1.
  Eigen::MatrixXd scores(2, 2);
  scores << 0.9, 0.9, 0.1, 0.1;
  const std::vector<std::vector<int>> sets = {{0}, {0, 1}};
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const SampleResult sr = sample_pairings(scores, sets, 1, 50, rng);
    REQUIRE(sr.pairings.size() == 1);
    CHECK(sr.pairings[0] == Pairing{0, 1});
    CHECK(greedy_decode(scores, sets, rng) == Pairing{0, 1});
  }
  // Only one valid pairing exists, so asking for two falls short.
  const SampleResult sr = sample_pairings(scores, sets, 2, 50, rng);
  CHECK(sr.pairings.size() == 1);
  CHECK(sr.shortfall);
}

TEST_CASE("sampled pairings are distinct and valid") {
  const Topology topo = dense_topo(5, 3);
  Eigen::MatrixXd scores = Eigen::MatrixXd::Constant(5, 3, 0.2);
  Rng rng(17);
  const SampleResult sr = sample_pairings(scores, topo.effective_sets, 16, 100, rng);
  CHECK(sr.pairings.size() > 4);
  for (std::size_t i = 0; i < sr.pairings.size(); ++i) {
    const Pairing& p = sr.pairings[i];
    REQUIRE(p.size() == 3);
    CHECK(p[0] != p[1]);
    CHECK(p[0] != p[2]);
    CHECK(p[1] != p[2]);
    for (std::size_t j = i + 1; j < sr.pairings.size(); ++j) CHECK(p != sr.pairings[j]);
  }
}

TEST_CASE("replay buffer drops the oldest entry at capacity") {
  ReplayBuffer buf(3);
  for (int i = 0; i < 4; ++i) {
    Experience e;
    e.target = {i};
    buf.push(std::move(e));
  }
  CHECK(buf.size() == 3);
  CHECK(buf.at(0).target == Pairing{1});
  CHECK(buf.at(2).target == Pairing{3});
}

TEST_CASE("uniform policy loss equals the mean log effective-set size") {
  const Topology topo = dense_topo(4, 2);
  PairingPolicy policy = PairingPolicy::init(7, simple_norm());
  zero_weights(policy);
  ChannelRealization ch;
  ch.ul_gain_sq = {1e-9, 2e-9, 5e-10, 3e-9};
  ch.dl_gain_sq = {1e-9, 4e-9};
  Experience e{traits_for(topo, ch, policy.norm), {0, 1}};
  const std::vector<const Experience*> batch = {&e, &e};
  const double loss = policy_loss_and_grad(policy, batch, topo.effective_sets);
  CHECK(loss == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("training overfits a single target pairing") {
  const Topology topo = dense_topo(4, 2);
  PairingPolicy policy = PairingPolicy::init(11, simple_norm());
  ChannelRealization ch;
  ch.ul_gain_sq = {1e-9, 2e-9, 5e-10, 3e-9};
  ch.dl_gain_sq = {1e-9, 4e-9};
  Experience e{traits_for(topo, ch, policy.norm), {2, 0}};
  const std::vector<const Experience*> batch = {&e};
  double first = 0.0, last = 0.0;
  for (int step = 0; step < 100; ++step) {
    const double loss = train_step(policy, batch, topo.effective_sets, 1e-2);
    if (step == 0) first = loss;
    last = loss;
  }
  CHECK(last < 0.01);
  CHECK(last < 0.1 * first);
  Rng rng(1);
  CHECK(greedy_decode(forward(policy, e.traits, topo.effective_sets).colsoft,
                      topo.effective_sets, rng) == Pairing{2, 0});
}

TEST_CASE("analytic gradients match central differences") {
  const Topology topo = dense_topo(4, 2);
  PairingPolicy policy = PairingPolicy::init(13, simple_norm());
  ChannelRealization ch;
  ch.ul_gain_sq = {1e-9, 2e-9, 5e-10, 3e-9};
  ch.dl_gain_sq = {1e-9, 4e-9};
  Experience e1{traits_for(topo, ch, policy.norm), {2, 0}};
  ch.ul_gain_sq = {4e-9, 1e-9, 2e-9, 8e-10};
  Experience e2{traits_for(topo, ch, policy.norm), {1, 3}};
  const std::vector<const Experience*> batch = {&e1, &e2};

  policy.enc_sensor.zero_grad();
  policy.enc_actuator.zero_grad();
  for (auto& layer : policy.pairing) layer.zero_grad();
  policy_loss_and_grad(policy, batch, topo.effective_sets);

  std::vector<Linear*> layers = {&policy.enc_sensor, &policy.enc_actuator,
                                 &policy.pairing[0], &policy.pairing[1],
                                 &policy.pairing[2], &policy.pairing[3]};
  Rng rng(2);
  const double h = 1e-6;
  for (int probe = 0; probe < 24; ++probe) {
    Linear* layer = layers[probe % layers.size()];
    const int i = static_cast<int>(rng.uniform_int(layer->W.rows()));
    const int j = static_cast<int>(rng.uniform_int(layer->W.cols()));
    const double analytic = layer->gW(i, j);
    const double saved = layer->W(i, j);
    PairingPolicy scratch = policy;  // loss-only evaluations on a copy
    Linear* sl = nullptr;
    std::vector<Linear*> scopy = {&scratch.enc_sensor, &scratch.enc_actuator,
                                  &scratch.pairing[0], &scratch.pairing[1],
                                  &scratch.pairing[2], &scratch.pairing[3]};
    sl = scopy[probe % scopy.size()];
    sl->W(i, j) = saved + h;
    const double up = policy_loss_and_grad(scratch, batch, topo.effective_sets);
    sl->W(i, j) = saved - h;
    const double dn = policy_loss_and_grad(scratch, batch, topo.effective_sets);
    const double numeric = (up - dn) / (2.0 * h);
    const double scale = std::max({1e-6, std::abs(numeric), std::abs(analytic)});
    CHECK(std::abs(numeric - analytic) / scale < 1e-4);
  }
}

TEST_CASE("candidate and learning-rate schedules") {
  TrainConfig cfg;
  cfg.I_init = 32;
  cfg.I_halve_period = 512;
  cfg.I_min = 2;
  cfg.lr_init = 1e-3;
  cfg.lr_decay_period = 256;
  CHECK(candidates_at(cfg, 0) == 32);
  CHECK(candidates_at(cfg, 511) == 32);
  CHECK(candidates_at(cfg, 512) == 16);
  CHECK(candidates_at(cfg, 1024) == 8);
  CHECK(candidates_at(cfg, 100000) == 2);
  CHECK(lr_at(cfg, 0) == doctest::Approx(1e-3));
  CHECK(lr_at(cfg, 255) == doctest::Approx(1e-3));
  CHECK(lr_at(cfg, 256) == doctest::Approx(1e-3 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(lr_at(cfg, 1024) == doctest::Approx(1e-3 / 4.0).epsilon(1e-12));
}

TEST_CASE("training loop: determinism, checkpointing, resume") {
  const Topology topo = dense_topo(4, 2);
  const EnvParams env;
  const LoopBudget tb;
  const ResourceBudget rb;
  TrainConfig cfg;
  cfg.I_init = 4;
  cfg.I_halve_period = 512;
  cfg.I_min = 2;
  cfg.N_max = 50;
  cfg.epochs = 12;
  cfg.batch = 4;
  cfg.buffer_capacity = 16;
  const NormalizationRecord rec = make_normalization(topo, env, 50.0, 500.0);
  const std::uint64_t seed = 42;

  LoacState one = loac_init(rec, seed, cfg);
  const auto rec_one = loac_run(one, topo, env, tb, rb, cfg, seed, 12);
  REQUIRE(rec_one.size() == 12);

  LoacState two = loac_init(rec, seed, cfg);
  const auto head = loac_run(two, topo, env, tb, rb, cfg, seed, 6);
  const std::string ckpt = checkpoint_to_json(two, cfg, seed);

  LoacState restored;
  TrainConfig rcfg;
  std::uint64_t rseed = 0;
  checkpoint_from_json(ckpt, restored, rcfg, rseed);
  CHECK(rseed == seed);
  CHECK(restored.next_epoch == 6);
  CHECK(checkpoint_to_json(restored, rcfg, rseed) == ckpt);  // bit-exact round trip

  const auto tail = loac_run(restored, topo, env, tb, rb, rcfg, rseed, 12);
  REQUIRE(head.size() + tail.size() == rec_one.size());
  for (std::size_t i = 0; i < rec_one.size(); ++i) {
    const EpochRecord& r = i < 6 ? head[i] : tail[i - 6];
    CHECK(r.epoch == rec_one[i].epoch);
    CHECK(r.best == rec_one[i].best);
    CHECK(r.best_cost == rec_one[i].best_cost);
    const bool both_nan = std::isnan(r.loss) && std::isnan(rec_one[i].loss);
    CHECK((both_nan || r.loss == rec_one[i].loss));
  }
  // The resumed final state checkpoints identically to the uninterrupted one.
  CHECK(checkpoint_to_json(restored, cfg, seed) == checkpoint_to_json(one, cfg, seed));
}

TEST_CASE("saturated candidate count recovers the exhaustive optimum") {
  const Topology topo = dense_topo(4, 2);
  const EnvParams env;
  const LoopBudget tb;
  const ResourceBudget rb;
  TrainConfig cfg;
  cfg.I_init = 64;  // far more than the 12 valid pairings
  cfg.N_max = 5000;
  cfg.epochs = 2;
  cfg.batch = 64;  // never reached, so no updates perturb the policy
  cfg.buffer_capacity = 64;
  const std::uint64_t seed = 9;
  LoacState st = loac_init(make_normalization(topo, env, 50.0, 500.0), seed, cfg);
  const auto records = loac_run(st, topo, env, tb, rb, cfg, seed, 2);
  for (const EpochRecord& r : records) {
    Rng ch_rng = Rng::stream(seed, {streams::kChannel, static_cast<std::uint64_t>(r.epoch)});
    const ChannelRealization ch = realize_channels(topo, env, ch_rng);
    double best = std::numeric_limits<double>::infinity();
    for (const Pairing& p : enumerate_pairings(topo.effective_sets))
      best = std::min(best, evaluate_pairing(p, topo, ch, tb, rb));
    CHECK(r.best_cost == doctest::Approx(best).epsilon(1e-9));
  }
}
