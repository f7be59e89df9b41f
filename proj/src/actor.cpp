#include "sc3/actor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "json.hpp"

namespace sc3 {

double apply_norm(const ColumnNorm& c, double x) {
  double v = x, lo = c.lo, hi = c.hi;
  if (c.scale == ColumnScale::Log) {
    if (x <= 0.0) throw DomainError("apply_norm: nonpositive value in a log column");
    if (lo <= 0.0 || hi <= 0.0)
      throw DomainError("apply_norm: nonpositive bounds in a log column");
    v = std::log(x);
    lo = std::log(lo);
    hi = std::log(hi);
  }
  if (hi <= lo) return 0.5;  // constant column convention
  return std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
}

TraitMatrices normalize_traits(const std::vector<double>& ul_gain_sq,
                               const std::vector<double>& gammas,
                               const std::vector<double>& dl_gain_sq,
                               const std::vector<double>& entropies,
                               const NormalizationRecord& record) {
  if (ul_gain_sq.size() != gammas.size() || dl_gain_sq.size() != entropies.size())
    throw DomainError("normalize_traits: trait vector size mismatch");
  TraitMatrices out;
  const int S = static_cast<int>(ul_gain_sq.size());
  const int K = static_cast<int>(dl_gain_sq.size());
  out.X_sensor.resize(S, 2);
  out.X_actuator.resize(K, 2);
  for (int s = 0; s < S; ++s) {
    out.X_sensor(s, 0) = apply_norm(record.sensor[0], ul_gain_sq[s]);
    out.X_sensor(s, 1) = apply_norm(record.sensor[1], gammas[s]);
  }
  for (int k = 0; k < K; ++k) {
    out.X_actuator(k, 0) = apply_norm(record.actuator[0], dl_gain_sq[k]);
    out.X_actuator(k, 1) = apply_norm(record.actuator[1], entropies[k]);
  }
  return out;
}

NormalizationRecord make_normalization(const Topology& topo, const EnvParams& env,
                                       double gamma_lo, double gamma_hi) {
  std::vector<double> ul_beta, dl_beta;
  large_scale_gains(topo, env, ul_beta, dl_beta);
  const auto span = [](const std::vector<double>& v) {
    auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    // Widened so Rayleigh draws rarely clip: deep fades down 30 dB, peaks up 10 dB.
    return ColumnNorm{ColumnScale::Log, *lo * 1e-3, *hi * 10.0};
  };
  NormalizationRecord rec;
  rec.sensor[0] = span(ul_beta);
  rec.sensor[1] = ColumnNorm{ColumnScale::Log, gamma_lo, gamma_hi};
  rec.actuator[0] = span(dl_beta);
  double e_lo = topo.actuators.front().control.e, e_hi = e_lo;
  for (const auto& a : topo.actuators) {
    e_lo = std::min(e_lo, a.control.e);
    e_hi = std::max(e_hi, a.control.e);
  }
  rec.actuator[1] = ColumnNorm{ColumnScale::Linear, e_lo, e_hi};
  return rec;
}

PairingPolicy PairingPolicy::init(std::uint64_t weight_seed,
                                  const NormalizationRecord& norm) {
  PairingPolicy p;
  p.norm = norm;
  Rng rng = Rng::stream(weight_seed, {streams::kWeights});
  p.enc_sensor.init(kEncDim, 2, rng);
  p.enc_actuator.init(kEncDim, 2, rng);
  p.pairing[0].init(512, 2 * kEncDim, rng);
  p.pairing[1].init(256, 512, rng);
  p.pairing[2].init(128, 256, rng);
  p.pairing[3].init(1, 128, rng);
  return p;
}

namespace {

// Column softmax over the selected row subset (empty subset = all rows).
Eigen::VectorXd subset_softmax(const Eigen::MatrixXd& raw, int col,
                               const std::vector<int>& rows) {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(raw.rows());
  double mx = -std::numeric_limits<double>::infinity();
  for (int s : rows) mx = std::max(mx, raw(s, col));
  double total = 0.0;
  for (int s : rows) total += std::exp(raw(s, col) - mx);
  for (int s : rows) p(s) = std::exp(raw(s, col) - mx) / total;
  return p;
}

Eigen::MatrixXd run_network(const PairingPolicy& policy, const TraitMatrices& traits,
                            ForwardCache& c) {
  const int S = static_cast<int>(traits.X_sensor.rows());
  const int K = static_cast<int>(traits.X_actuator.rows());
  const double slope = policy.leaky_slope;
  c.Hs_pre = policy.enc_sensor.forward(traits.X_sensor);
  c.Hs = leaky_relu(c.Hs_pre, slope);
  c.Ha_pre = policy.enc_actuator.forward(traits.X_actuator);
  c.Ha = leaky_relu(c.Ha_pre, slope);

  const int D = PairingPolicy::kEncDim;
  c.M0.resize(S * K, 2 * D);
  for (int s = 0; s < S; ++s)
    for (int k = 0; k < K; ++k) {
      c.M0.row(s * K + k).head(D) = c.Hs.row(s);
      c.M0.row(s * K + k).tail(D) = c.Ha.row(k);
    }
  c.M1_pre = policy.pairing[0].forward(c.M0);
  c.M1 = leaky_relu(c.M1_pre, slope);
  c.M2_pre = policy.pairing[1].forward(c.M1);
  c.M2 = leaky_relu(c.M2_pre, slope);
  c.M3_pre = policy.pairing[2].forward(c.M2);
  c.M3 = leaky_relu(c.M3_pre, slope);
  const Eigen::MatrixXd head = policy.pairing[3].forward(c.M3);  // SK x 1

  Eigen::MatrixXd raw(S, K);
  for (int s = 0; s < S; ++s)
    for (int k = 0; k < K; ++k) raw(s, k) = head(s * K + k, 0);
  return raw;
}

}  // namespace

ForwardResult forward(const PairingPolicy& policy, const TraitMatrices& traits,
                      const std::vector<std::vector<int>>& effective_sets,
                      ForwardCache* cache) {
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  ForwardResult out;
  out.Y_raw = run_network(policy, traits, c);
  const int S = static_cast<int>(out.Y_raw.rows());
  const int K = static_cast<int>(out.Y_raw.cols());
  if (static_cast<int>(effective_sets.size()) != K)
    throw DomainError("forward: effective set count mismatch");
  out.colsoft.resize(S, K);
  out.Y.resize(S, K);
  std::vector<int> all(S);
  for (int s = 0; s < S; ++s) all[s] = s;
  for (int k = 0; k < K; ++k) {
    if (effective_sets[k].empty())
      throw DomainError("forward: fully masked column");
    out.colsoft.col(k) = subset_softmax(out.Y_raw, k, all);
    out.Y.col(k) = subset_softmax(out.Y_raw, k, effective_sets[k]);
  }
  return out;
}

SampleResult sample_pairings(const Eigen::MatrixXd& scores,
                             const std::vector<std::vector<int>>& effective_sets,
                             int num_solutions, int max_attempts, Rng& rng) {
  if (num_solutions < 1 || max_attempts < 1)
    throw DomainError("sample_pairings: I and N_max must be >= 1");
  const int S = static_cast<int>(scores.rows());
  const int K = static_cast<int>(effective_sets.size());
  SampleResult out;
  std::vector<int> order(K);
  std::vector<char> selected(S);
  for (int i = 0; i < num_solutions; ++i) {
    bool found = false;
    for (int attempt = 0; attempt < max_attempts && !found; ++attempt) {
      std::iota(order.begin(), order.end(), 0);
      for (int j = K - 1; j > 0; --j)
        std::swap(order[j], order[rng.uniform_int(static_cast<std::uint64_t>(j) + 1)]);
      std::fill(selected.begin(), selected.end(), 0);
      Pairing pairing(K, -1);
      bool valid = true;
      for (int k : order) {
        double total = 0.0;
        for (int s : effective_sets[k])
          if (!selected[s]) total += scores(s, k);
        if (total <= 0.0) {
          valid = false;
          break;
        }
        const double u = rng.uniform() * total;
        double acc = 0.0;
        int chosen = -1;
        for (int s : effective_sets[k]) {
          if (selected[s]) continue;
          acc += scores(s, k);
          chosen = s;
          if (u < acc) break;
        }
        selected[chosen] = 1;
        pairing[k] = chosen;
      }
      if (valid &&
          std::find(out.pairings.begin(), out.pairings.end(), pairing) ==
              out.pairings.end()) {
        out.pairings.push_back(std::move(pairing));
        found = true;
      }
    }
    if (!found) out.shortfall = true;
  }
  return out;
}

Pairing greedy_decode(const Eigen::MatrixXd& scores,
                      const std::vector<std::vector<int>>& effective_sets, Rng& rng) {
  const int S = static_cast<int>(scores.rows());
  const int K = static_cast<int>(effective_sets.size());
  auto attempt = [&](const std::vector<int>& order, Pairing& pairing) {
    std::vector<char> selected(S, 0);
    pairing.assign(K, -1);
    for (int k : order) {
      int best = -1;
      for (int s : effective_sets[k]) {
        if (selected[s]) continue;
        if (best < 0 || scores(s, k) > scores(best, k)) best = s;
      }
      if (best < 0) return false;
      selected[best] = 1;
      pairing[k] = best;
    }
    return true;
  };

  std::vector<int> order(K);
  std::iota(order.begin(), order.end(), 0);
  Pairing pairing;
  for (int retry = 0; retry < 16; ++retry) {
    for (int j = K - 1; j > 0; --j)
      std::swap(order[j], order[rng.uniform_int(static_cast<std::uint64_t>(j) + 1)]);
    if (attempt(order, pairing)) return pairing;
  }
  // Deterministic fallback: most-constrained actuator first.
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return effective_sets[a].size() < effective_sets[b].size();
  });
  if (attempt(order, pairing)) return pairing;
  throw InfeasibleError("greedy_decode: dead end");
}

void ReplayBuffer::push(Experience e) {
  if (items_.size() == capacity_) items_.pop_front();
  items_.push_back(std::move(e));
}

double policy_loss_and_grad(PairingPolicy& policy,
                            const std::vector<const Experience*>& batch,
                            const std::vector<std::vector<int>>& effective_sets) {
  if (batch.empty()) throw DomainError("policy_loss_and_grad: empty batch");
  const int K = static_cast<int>(effective_sets.size());
  const double slope = policy.leaky_slope;
  double loss = 0.0;
  const double weight = 1.0 / (static_cast<double>(batch.size()) * K);
  for (const Experience* exp : batch) {
    ForwardCache c;
    const Eigen::MatrixXd raw = run_network(policy, exp->traits, c);
    const int S = static_cast<int>(raw.rows());
    Eigen::MatrixXd draw = Eigen::MatrixXd::Zero(S, K);
    for (int k = 0; k < K; ++k) {
      const int target = exp->target.at(k);
      const auto& set = effective_sets[k];
      if (std::find(set.begin(), set.end(), target) == set.end())
        throw DomainError("policy_loss_and_grad: target pairs a masked sensor");
      const Eigen::VectorXd p = subset_softmax(raw, k, set);
      loss -= std::log(std::max(p(target), 1e-300)) * weight;
      for (int s : set) draw(s, k) = (p(s) - (s == target ? 1.0 : 0.0)) * weight;
    }
    // Backward pass.
    const int D = PairingPolicy::kEncDim;
    Eigen::MatrixXd dhead(S * K, 1);
    for (int s = 0; s < S; ++s)
      for (int k = 0; k < K; ++k) dhead(s * K + k, 0) = draw(s, k);
    Eigen::MatrixXd d = policy.pairing[3].backward(c.M3, dhead);
    d = leaky_relu_backward(c.M3_pre, d, slope);
    d = policy.pairing[2].backward(c.M2, d);
    d = leaky_relu_backward(c.M2_pre, d, slope);
    d = policy.pairing[1].backward(c.M1, d);
    d = leaky_relu_backward(c.M1_pre, d, slope);
    d = policy.pairing[0].backward(c.M0, d);  // SK x 256
    Eigen::MatrixXd dHs = Eigen::MatrixXd::Zero(S, D);
    Eigen::MatrixXd dHa = Eigen::MatrixXd::Zero(K, D);
    for (int s = 0; s < S; ++s)
      for (int k = 0; k < K; ++k) {
        dHs.row(s) += d.row(s * K + k).head(D);
        dHa.row(k) += d.row(s * K + k).tail(D);
      }
    policy.enc_sensor.backward(exp->traits.X_sensor,
                               leaky_relu_backward(c.Hs_pre, dHs, slope));
    policy.enc_actuator.backward(exp->traits.X_actuator,
                                 leaky_relu_backward(c.Ha_pre, dHa, slope));
  }
  return loss;
}

double train_step(PairingPolicy& policy, const std::vector<const Experience*>& batch,
                  const std::vector<std::vector<int>>& effective_sets, double lr) {
  policy.enc_sensor.zero_grad();
  policy.enc_actuator.zero_grad();
  for (auto& layer : policy.pairing) layer.zero_grad();
  const double loss = policy_loss_and_grad(policy, batch, effective_sets);
  ++policy.adam_t;
  adam_step(policy.enc_sensor, lr, policy.adam, policy.adam_t);
  adam_step(policy.enc_actuator, lr, policy.adam, policy.adam_t);
  for (auto& layer : policy.pairing) adam_step(layer, lr, policy.adam, policy.adam_t);
  return loss;
}

int candidates_at(const TrainConfig& cfg, int epoch) {
  const int halvings = epoch / cfg.I_halve_period;
  double I = cfg.I_init;
  for (int i = 0; i < halvings && I > cfg.I_min; ++i) I /= 2.0;
  return std::max(cfg.I_min, static_cast<int>(I));
}

double lr_at(const TrainConfig& cfg, int epoch) {
  return cfg.lr_init * std::pow(1.0 / std::numbers::sqrt2, epoch / cfg.lr_decay_period);
}

LoacState loac_init(const NormalizationRecord& norm, std::uint64_t seed,
                    const TrainConfig& cfg) {
  LoacState st{PairingPolicy::init(seed, norm),
               ReplayBuffer(static_cast<std::size_t>(cfg.buffer_capacity)), 0};
  return st;
}

std::vector<EpochRecord> loac_run(LoacState& state, const Topology& topo,
                                  const EnvParams& env, const LoopBudget& tb,
                                  const ResourceBudget& rb, const TrainConfig& cfg,
                                  std::uint64_t seed, int until_epoch,
                                  const SolveOptions& critic_opts) {
  std::vector<double> gammas, entropies;
  for (const auto& s : topo.sensors) gammas.push_back(s.gamma);
  for (const auto& a : topo.actuators) entropies.push_back(a.control.e);

  std::vector<EpochRecord> records;
  for (int epoch = state.next_epoch; epoch < until_epoch; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;

    Rng ch_rng = Rng::stream(seed, {streams::kChannel, static_cast<std::uint64_t>(epoch)});
    const ChannelRealization ch = realize_channels(topo, env, ch_rng);
    TraitMatrices traits = normalize_traits(ch.ul_gain_sq, gammas, ch.dl_gain_sq,
                                            entropies, state.policy.norm);
    const ForwardResult fw = forward(state.policy, traits, topo.effective_sets);

    Rng samp = Rng::stream(seed, {streams::kSampler, static_cast<std::uint64_t>(epoch)});
    const SampleResult sample =
        sample_pairings(fw.colsoft, topo.effective_sets, candidates_at(cfg, epoch),
                        cfg.N_max, samp);
    rec.shortfall = sample.shortfall;

    double best_cost = std::numeric_limits<double>::infinity();
    int best_i = -1;
    for (std::size_t i = 0; i < sample.pairings.size(); ++i) {
      const double cost =
          evaluate_pairing(sample.pairings[i], topo, ch, tb, rb, critic_opts);
      if (cost < best_cost) {
        best_cost = cost;
        best_i = static_cast<int>(i);
      }
    }
    rec.best_cost = best_cost;
    if (best_i >= 0 && std::isfinite(best_cost)) {
      rec.best = sample.pairings[best_i];
      state.buffer.push(Experience{std::move(traits), rec.best});
    }

    if (state.buffer.size() >= static_cast<std::size_t>(cfg.batch)) {
      Rng brng = Rng::stream(seed, {streams::kBatch, static_cast<std::uint64_t>(epoch)});
      std::vector<const Experience*> batch;
      batch.reserve(cfg.batch);
      for (int i = 0; i < cfg.batch; ++i)
        batch.push_back(&state.buffer.at(brng.uniform_int(state.buffer.size())));
      rec.loss = train_step(state.policy, batch, topo.effective_sets, lr_at(cfg, epoch));
    }
    records.push_back(std::move(rec));
    state.next_epoch = epoch + 1;
  }
  return records;
}

namespace {

using nlohmann::json;

json mat_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd mat_from_json(const json& j) {
  const auto rows = j.size();
  if (rows == 0) return {};
  Eigen::MatrixXd m(rows, j[0].size());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t c = 0; c < j[i].size(); ++c) m(i, c) = j[i][c].get<double>();
  return m;
}

json vec_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Eigen::VectorXd vec_from_json(const json& j) {
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(i) = j[i].get<double>();
  return v;
}

json layer_to_json(const Linear& l) {
  return json{{"W", mat_to_json(l.W)},   {"b", vec_to_json(l.b)},
              {"mW", mat_to_json(l.mW)}, {"vW", mat_to_json(l.vW)},
              {"mb", vec_to_json(l.mb)}, {"vb", vec_to_json(l.vb)}};
}

void layer_from_json(const json& j, Linear& l) {
  l.W = mat_from_json(j.at("W"));
  l.b = vec_from_json(j.at("b"));
  l.mW = mat_from_json(j.at("mW"));
  l.vW = mat_from_json(j.at("vW"));
  l.mb = vec_from_json(j.at("mb"));
  l.vb = vec_from_json(j.at("vb"));
  l.gW = Eigen::MatrixXd::Zero(l.W.rows(), l.W.cols());
  l.gb = Eigen::VectorXd::Zero(l.b.size());
}

json norm_to_json(const NormalizationRecord& r) {
  auto col = [](const ColumnNorm& c) {
    return json{{"scale", c.scale == ColumnScale::Log ? "log" : "linear"},
                {"lo", c.lo},
                {"hi", c.hi}};
  };
  return json{{"sensor", {col(r.sensor[0]), col(r.sensor[1])}},
              {"actuator", {col(r.actuator[0]), col(r.actuator[1])}}};
}

NormalizationRecord norm_from_json(const json& j) {
  auto col = [](const json& c) {
    return ColumnNorm{c.at("scale").get<std::string>() == "log" ? ColumnScale::Log
                                                                : ColumnScale::Linear,
                      c.at("lo").get<double>(), c.at("hi").get<double>()};
  };
  NormalizationRecord r;
  r.sensor = {col(j.at("sensor")[0]), col(j.at("sensor")[1])};
  r.actuator = {col(j.at("actuator")[0]), col(j.at("actuator")[1])};
  return r;
}

}  // namespace

std::string checkpoint_to_json(const LoacState& state, const TrainConfig& cfg,
                               std::uint64_t seed) {
  json j;
  j["version"] = 1;
  j["seed"] = seed;
  j["next_epoch"] = state.next_epoch;
  j["adam_t"] = state.policy.adam_t;
  j["norm"] = norm_to_json(state.policy.norm);
  j["train"] = {{"I_init", cfg.I_init},
                {"I_halve_period", cfg.I_halve_period},
                {"I_min", cfg.I_min},
                {"N_max", cfg.N_max},
                {"epochs", cfg.epochs},
                {"batch", cfg.batch},
                {"buffer_capacity", cfg.buffer_capacity},
                {"lr_init", cfg.lr_init},
                {"lr_decay_period", cfg.lr_decay_period}};
  j["layers"] = {{"enc_sensor", layer_to_json(state.policy.enc_sensor)},
                 {"enc_actuator", layer_to_json(state.policy.enc_actuator)},
                 {"pairing0", layer_to_json(state.policy.pairing[0])},
                 {"pairing1", layer_to_json(state.policy.pairing[1])},
                 {"pairing2", layer_to_json(state.policy.pairing[2])},
                 {"pairing3", layer_to_json(state.policy.pairing[3])}};
  json buf = json::array();
  for (std::size_t i = 0; i < state.buffer.size(); ++i) {
    const Experience& e = state.buffer.at(i);
    buf.push_back(json{{"xs", mat_to_json(e.traits.X_sensor)},
                       {"xa", mat_to_json(e.traits.X_actuator)},
                       {"target", e.target}});
  }
  j["buffer"] = std::move(buf);
  return j.dump();
}

void checkpoint_from_json(const std::string& text, LoacState& state, TrainConfig& cfg,
                          std::uint64_t& seed) {
  json j = json::parse(text);
  if (j.at("version").get<int>() != 1)
    throw ConfigError("checkpoint: unsupported version");
  seed = j.at("seed").get<std::uint64_t>();
  const json& t = j.at("train");
  cfg.I_init = t.at("I_init").get<int>();
  cfg.I_halve_period = t.at("I_halve_period").get<int>();
  cfg.I_min = t.at("I_min").get<int>();
  cfg.N_max = t.at("N_max").get<int>();
  cfg.epochs = t.at("epochs").get<int>();
  cfg.batch = t.at("batch").get<int>();
  cfg.buffer_capacity = t.at("buffer_capacity").get<int>();
  cfg.lr_init = t.at("lr_init").get<double>();
  cfg.lr_decay_period = t.at("lr_decay_period").get<int>();

  state.policy.norm = norm_from_json(j.at("norm"));
  state.policy.adam_t = j.at("adam_t").get<int>();
  state.next_epoch = j.at("next_epoch").get<int>();
  const json& layers = j.at("layers");
  layer_from_json(layers.at("enc_sensor"), state.policy.enc_sensor);
  layer_from_json(layers.at("enc_actuator"), state.policy.enc_actuator);
  layer_from_json(layers.at("pairing0"), state.policy.pairing[0]);
  layer_from_json(layers.at("pairing1"), state.policy.pairing[1]);
  layer_from_json(layers.at("pairing2"), state.policy.pairing[2]);
  layer_from_json(layers.at("pairing3"), state.policy.pairing[3]);

  state.buffer = ReplayBuffer(static_cast<std::size_t>(cfg.buffer_capacity));
  for (const auto& e : j.at("buffer")) {
    Experience exp;
    exp.traits.X_sensor = mat_from_json(e.at("xs"));
    exp.traits.X_actuator = mat_from_json(e.at("xa"));
    exp.target = e.at("target").get<Pairing>();
    state.buffer.push(std::move(exp));
  }
}

}  // namespace sc3
