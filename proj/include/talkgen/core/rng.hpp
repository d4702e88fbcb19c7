#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>

#include "talkgen/core/tensor.hpp"

namespace talkgen {

// Deterministic generator with explicit state so checkpoints can resume
// bit-exactly. Distributions are implemented here rather than taken from
// <random>, whose outputs are implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) { reseed(seed); }

  void reseed(uint64_t seed) {
    // splitmix64 expansion of the seed into xoshiro256** state
    uint64_t z = seed;
    for (auto& s : state_) {
      z += 0x9e3779b97f4a7c15ULL;
      uint64_t x = z;
      x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
      x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
      s = x ^ (x >> 31);
    }
    has_cached_normal_ = false;
  }

  uint64_t next_u64() {
    auto rotl = [](uint64_t x, int k) { return (x << k) | (x >> (64 - k)); };
    const uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1)
  double uniform() { return (double)(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Integer in [0, n)
  uint64_t below(uint64_t n) { return next_u64() % n; }

  double normal() {
    if (has_cached_normal_) {
      has_cached_normal_ = false;
      return cached_normal_;
    }
    double u1 = 0.0, u2;
    while (u1 == 0.0) u1 = uniform();
    u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    cached_normal_ = r * std::sin(a);
    has_cached_normal_ = true;
    return r * std::cos(a);
  }

  template <typename S>
  void fill_uniform(Tensor<S>& t, double lo, double hi) {
    for (Index i = 0; i < t.size(); ++i) t[i] = (S)uniform(lo, hi);
  }
  template <typename S>
  void fill_normal(Tensor<S>& t, double mean, double stddev) {
    for (Index i = 0; i < t.size(); ++i) t[i] = (S)(mean + stddev * normal());
  }

  std::array<uint64_t, 6> serialize() const {
    return {state_[0], state_[1], state_[2], state_[3],
            has_cached_normal_ ? 1ULL : 0ULL,
            std::bit_cast<uint64_t>(cached_normal_)};
  }
  void deserialize(const std::array<uint64_t, 6>& s) {
    state_ = {s[0], s[1], s[2], s[3]};
    has_cached_normal_ = s[4] != 0;
    cached_normal_ = std::bit_cast<double>(s[5]);
  }

 private:
  std::array<uint64_t, 4> state_{};
  bool has_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

}  // namespace talkgen
