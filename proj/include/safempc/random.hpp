#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace safempc {

using Rng = std::mt19937_64;

// Stream derivation: every consumer of randomness gets its own generator
// seeded from (master seed, tag, indices) through FNV-1a over the tag and a
// splitmix64 finalizer over each index. Streams never share state, so the
// order in which rollouts execute cannot change what they draw.
std::uint64_t splitmix64(std::uint64_t x);

std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                          std::initializer_list<std::uint64_t> indices = {});

inline Rng make_rng(std::uint64_t master, std::string_view tag,
                    std::initializer_list<std::uint64_t> indices = {}) {
  return Rng(derive_seed(master, tag, indices));
}

// Uniform on the open interval (0, 1); never returns an endpoint.
double uniform_open(Rng& rng);

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double gaussian(Rng& rng, double mean, double stddev) {
  return std::normal_distribution<double>(mean, stddev)(rng);
}

}  // namespace safempc
