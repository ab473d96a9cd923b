#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

#include "omni/core/hash.hpp"

namespace omni {

// Deterministic splitmix64 generator. The entire state is one u64 so it can
// be stored in a checkpoint and restored for bit-exact resume; std::mt19937
// is avoided because its 2.5 KB state and distribution helpers are not
// serialization-stable across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : state_(seed) {}

  uint64_t state() const { return state_; }
  void set_state(uint64_t s) { state_ = s; }

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n); rejection sampling keeps it unbiased.
  uint64_t next_below(uint64_t n) {
    if (n == 0) return 0;
    uint64_t limit = ~uint64_t{0} - (~uint64_t{0} % n + 1) % n;
    uint64_t v = next_u64();
    while (v > limit) v = next_u64();
    return v % n;
  }

  // Standard normal via Box-Muller (cosine branch only, so one draw consumes
  // exactly two u64s and the state stays trivially serializable).
  double next_normal() {
    double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  bool next_bool() { return (next_u64() & 1) != 0; }

 private:
  uint64_t state_;
};

// Derives an independent stream from (seed, purpose, index). Generation of
// every dataset item, parameter init and sampler draw goes through a derived
// stream, which is what makes outputs independent of evaluation order.
inline Rng derive_rng(uint64_t seed, std::string_view purpose, uint64_t index = 0) {
  uint64_t h = fnv1a_u64(seed);
  h = fnv1a(purpose, h);
  h = fnv1a_u64(index, h);
  return Rng(h);
}

}  // namespace omni
