#pragma once

#include <cstdint>
#include <random>

namespace kgpath {

// Every stochastic operation takes an explicit generator so runs replay
// bit-for-bit from a seed.
using Rng = std::mt19937_64;

// SplitMix64 finalizer; mixes a base seed with a stream index into an
// independent seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace kgpath
