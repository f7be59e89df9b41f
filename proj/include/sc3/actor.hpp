#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "sc3/channel.hpp"
#include "sc3/critic.hpp"
#include "sc3/nn.hpp"

namespace sc3 {

enum class ColumnScale { Log, Linear };

// Min-max scaling of one trait column; Log columns transform first.
struct ColumnNorm {
  ColumnScale scale = ColumnScale::Linear;
  double lo = 0.0;
  double hi = 1.0;
};

struct NormalizationRecord {
  std::array<ColumnNorm, 2> sensor;    // (UL gain squared, gamma)
  std::array<ColumnNorm, 2> actuator;  // (DL gain squared, intrinsic entropy)
};

// Maps x into [0, 1]; constant columns map to 0.5. Throws DomainError for
// nonpositive values in a Log column.
double apply_norm(const ColumnNorm& c, double x);

struct TraitMatrices {
  Eigen::MatrixXd X_sensor;    // S x 2
  Eigen::MatrixXd X_actuator;  // K x 2
};

TraitMatrices normalize_traits(const std::vector<double>& ul_gain_sq,
                               const std::vector<double>& gammas,
                               const std::vector<double>& dl_gain_sq,
                               const std::vector<double>& entropies,
                               const NormalizationRecord& record);

// Normalization statistics frozen from scenario trait ranges: gains span
// the large-scale values widened for fading, gamma spans its configured
// range, entropy spans its scenario values.
NormalizationRecord make_normalization(const Topology& topo, const EnvParams& env,
                                       double gamma_lo, double gamma_hi);

// Trait encoders (2 -> 128) and pairing network (256 -> 512 -> 256 -> 128 -> 1),
// leaky-rectifier activations with slope 0.1.
struct PairingPolicy {
  Linear enc_sensor;
  Linear enc_actuator;
  std::array<Linear, 4> pairing;
  double leaky_slope = 0.1;
  NormalizationRecord norm;
  AdamParams adam;
  int adam_t = 0;

  static constexpr int kEncDim = 128;

  static PairingPolicy init(std::uint64_t weight_seed, const NormalizationRecord& norm);
};

struct ForwardCache {
  Eigen::MatrixXd Hs_pre, Hs, Ha_pre, Ha;
  Eigen::MatrixXd M0, M1_pre, M1, M2_pre, M2, M3_pre, M3;
};

struct ForwardResult {
  Eigen::MatrixXd Y_raw;    // S x K unnormalized scores
  Eigen::MatrixXd Y;        // masked, renormalized column probabilities
  Eigen::MatrixXd colsoft;  // pre-mask column softmax (sampler scores)
};

ForwardResult forward(const PairingPolicy& policy, const TraitMatrices& traits,
                      const std::vector<std::vector<int>>& effective_sets,
                      ForwardCache* cache = nullptr);

struct SampleResult {
  std::vector<Pairing> pairings;  // distinct, valid
  bool shortfall = false;         // fewer than I found within the attempt budget
};

// Stochastic pairing generation: shuffled actuator order, sequential
// sampling from the corrected distribution over unselected compatible
// sensors, duplicates discarded.
SampleResult sample_pairings(const Eigen::MatrixXd& scores,
                             const std::vector<std::vector<int>>& effective_sets,
                             int num_solutions, int max_attempts, Rng& rng);

// Deterministic decode: per shuffled actuator order, the highest-probability
// unselected compatible sensor.
Pairing greedy_decode(const Eigen::MatrixXd& scores,
                      const std::vector<std::vector<int>>& effective_sets, Rng& rng);

struct Experience {
  TraitMatrices traits;
  Pairing target;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 1280) : capacity_(capacity) {}
  void push(Experience e);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Experience& at(std::size_t i) const { return items_[i]; }

 private:
  std::size_t capacity_;
  std::deque<Experience> items_;
};

// Mean per-actuator cross-entropy of the masked column distributions
// against the one-hot targets; accumulates gradients into the policy.
double policy_loss_and_grad(PairingPolicy& policy,
                            const std::vector<const Experience*>& batch,
                            const std::vector<std::vector<int>>& effective_sets);

// One gradient step on a mini-batch; returns the pre-update loss.
double train_step(PairingPolicy& policy, const std::vector<const Experience*>& batch,
                  const std::vector<std::vector<int>>& effective_sets, double lr);

struct TrainConfig {
  int I_init = 32;
  int I_halve_period = 512;
  int I_min = 2;
  int N_max = 100;
  int epochs = 4800;
  int batch = 128;
  int buffer_capacity = 1280;
  double lr_init = 1e-3;
  int lr_decay_period = 256;
};

int candidates_at(const TrainConfig& cfg, int epoch);
double lr_at(const TrainConfig& cfg, int epoch);

struct EpochRecord {
  int epoch = 0;
  double loss = std::numeric_limits<double>::quiet_NaN();  // NaN before updates start
  double best_cost = 0.0;
  Pairing best;
  bool shortfall = false;
};

// Mutable training state; checkpointable, resumable mid-run.
struct LoacState {
  PairingPolicy policy;
  ReplayBuffer buffer;
  int next_epoch = 0;
};

LoacState loac_init(const NormalizationRecord& norm, std::uint64_t seed,
                    const TrainConfig& cfg);

// Runs epochs [state.next_epoch, until_epoch). Streams are derived from
// (seed, epoch), so interrupted and uninterrupted runs agree exactly.
std::vector<EpochRecord> loac_run(LoacState& state, const Topology& topo,
                                  const EnvParams& env, const LoopBudget& tb,
                                  const ResourceBudget& rb, const TrainConfig& cfg,
                                  std::uint64_t seed, int until_epoch,
                                  const SolveOptions& critic_opts = {});

// Versioned checkpoint container (JSON); round-trips bit-exactly.
std::string checkpoint_to_json(const LoacState& state, const TrainConfig& cfg,
                               std::uint64_t seed);
void checkpoint_from_json(const std::string& text, LoacState& state, TrainConfig& cfg,
                          std::uint64_t& seed);

}  // namespace sc3
