#pragma once

#include <cstdint>
#include <string_view>

namespace rws {

/*
 * Counter-based generator: the i-th output of a stream with key k is
 * splitmix64_mix(k + (i + 1) * 0x9E3779B97F4A7C15). Streams are split by
 * deriving a new key from (seed, tag, index), so every random draw in the
 * toolkit is a pure function of its declared seed.
 */
std::uint64_t splitmix64_mix(std::uint64_t z);
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0);

class Rng {
 public:
  explicit Rng(std::uint64_t key) : key_(key) {}

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  // Standard normal via Box-Muller (one output per call).
  double normal();
  // Knuth's multiplication method for small means, normal approximation above 64.
  std::uint64_t poisson(double mean);

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace rws
