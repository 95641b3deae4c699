// Copyright 2026 the pmilm authors
// SPDX-License-Identifier: Apache-2.0
//
// Seedable, splittable random stream. The engine is std::mt19937_64 (its
// output sequence is pinned by the standard), and all draw helpers are
// hand-rolled from raw 64-bit words so results are bit-identical across
// standard-library implementations. split(i) derives an independent child
// stream from the parent's seed material, not from its draw position.

#pragma once

#include <cstdint>
#include <random>

namespace pmilm {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(splitmix64(seed)) {}

  // Child stream i; deterministic function of (seed, i) only.
  Rng split(std::uint64_t i) const {
    return Rng(splitmix64(seed_ ^ splitmix64(i + 0x632be59bd9b4e019ull)));
  }

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  // Uniform in [0, n). Lemire multiply-shift; tiny bias is irrelevant here
  // and the mapping is fully deterministic.
  std::uint64_t next_below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
};

}  // namespace pmilm
