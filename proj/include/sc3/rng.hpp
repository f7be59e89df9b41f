#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace sc3 {

// Counter-based seeded generator built on splitmix64 key mixing and
// xoshiro256++ state advance. Distributions are hand-rolled from the raw
// uniform stream so realizations are identical on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& word : state_) word = splitmix64(x);
  }

  // Derives an independent stream from a master seed and a key path,
  // e.g. Rng::stream(master, {kChannelStream, epoch, node}).
  static Rng stream(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
    std::uint64_t h = master ^ 0x9e3779b97f4a7c15ULL;
    for (std::uint64_t p : path) {
      std::uint64_t x = p + 0x632be59bd9b4e019ULL;
      h = (h ^ splitmix64(x)) * 0xff51afd7ed558ccdULL;
      h ^= h >> 33;
    }
    return Rng(h);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n) {
    // Rejection sampling to stay unbiased.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % n;
  }

  // Standard normal via Box-Muller (two fresh uniforms per call).
  double gaussian() {
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Exponential(1).
  double exponential() {
    double u;
    do {
      u = uniform();
    } while (u <= 0.0);
    return -std::log(u);
  }

 private:
  static std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  static std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

  std::uint64_t state_[4];
};

// Stream ids used across the project. Kept in one place so experiment
// reproducibility does not depend on call ordering.
namespace streams {
inline constexpr std::uint64_t kTopology = 1;
inline constexpr std::uint64_t kChannel = 2;
inline constexpr std::uint64_t kSampler = 3;
inline constexpr std::uint64_t kBatch = 4;
inline constexpr std::uint64_t kWeights = 5;
inline constexpr std::uint64_t kTraits = 6;
inline constexpr std::uint64_t kEval = 7;
}  // namespace streams

}  // namespace sc3
