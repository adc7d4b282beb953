// sparsecomm — gradient sparsification toolkit
// Copyright (c) 2026 The sparsecomm Authors
// SPDX-License-Identifier: MIT
//
// Reference random number generator. Everything stochastic in the library
// (random selection, sampling, synthetic data, shuffling) flows through this
// one generator so that runs replay bit-identically across machines given
// the same seeds. No operation ever seeds itself from time.

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace sparsecomm {

// SplitMix64 (Vigna's public-domain mixer): a 64-bit counter generator.
// next_u64() advances the state by the golden-ratio constant and applies a
// murmur-style finalizer. Chosen because its output sequence is a pure
// function of (seed, call index) — trivially reproducible and splittable.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

  // The finalizer used both per-draw and for deriving substream seeds.
  [[nodiscard]] static constexpr std::uint64_t finalize(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t next_u64() {
    state_ += kGolden;
    return finalize(state_);
  }

  // Deterministic stream-splitting rule: the (a, b) substream of a seed is
  // seeded by two chained finalizer applications. Used as
  // substream(global_seed, worker_id + 1, 0) for per-worker streams,
  // substream(global_seed, 0, epoch) for shuffles, and
  // substream(seed, trial + 1, 0) for Monte Carlo trials.
  [[nodiscard]] static SplitMix64 substream(std::uint64_t seed, std::uint64_t a,
                                            std::uint64_t b) {
    std::uint64_t s = finalize(seed + kGolden * (a + 1));
    s = finalize(s + kGolden * (b + 1));
    return SplitMix64(s);
  }

  // Uniform integer in [0, n), n >= 1, by rejection: draws are discarded
  // while they fall beyond the largest multiple of n below 2^64, so the
  // result is exactly uniform. Consumes a variable but seed-deterministic
  // number of draws.
  std::uint64_t next_below(std::uint64_t n) {
    const std::uint64_t limit = (0xFFFFFFFFFFFFFFFFull / n) * n;
    std::uint64_t x = next_u64();
    while (x >= limit) {
      x = next_u64();
    }
    return x % n;
  }

  // Uniform double in [0, 1) with 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform double in (0, 1): redraws the (probability 2^-53) exact zero.
  double next_double_open() {
    double u = next_double();
    while (u == 0.0) {
      u = next_double();
    }
    return u;
  }

  // Standard normal via Box–Muller. Each pair of uniforms yields two
  // normals; the second is cached, so consecutive calls consume uniforms in
  // a fixed, replayable pattern.
  double next_gaussian() {
    if (has_cache_) {
      has_cache_ = false;
      return cache_;
    }
    const double u1 = next_double_open();
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    cache_ = r * std::sin(theta);
    has_cache_ = true;
    return r * std::cos(theta);
  }

  // Standard Laplace (location 0, scale 1; variance 2) via inverse CDF.
  double next_laplace() {
    const double u = next_double_open();
    if (u < 0.5) {
      return std::log(2.0 * u);
    }
    return -std::log(2.0 * (1.0 - u));
  }

 private:
  std::uint64_t state_;
  double cache_ = 0.0;
  bool has_cache_ = false;
};

using Rng = SplitMix64;

}  // namespace sparsecomm
