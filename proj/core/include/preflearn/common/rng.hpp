#pragma once

#include <cstdint>
#include <random>

namespace preflearn {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for a sub-stream identified by a path of indices, e.g.
/// derive_seed(seed, step, prompt, rollout). Independent of evaluation order.
template <typename... Ids>
constexpr std::uint64_t derive_seed(std::uint64_t seed, Ids... ids) noexcept {
  std::uint64_t h = mix_seed(seed);
  ((h = mix_seed(h ^ mix_seed(static_cast<std::uint64_t>(ids) + 0x632be59bd9b4e019ULL))), ...);
  return h;
}

/// Uniform double in [0, 1) from 53 random bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace preflearn
