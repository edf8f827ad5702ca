#pragma once

#include <cstdint>
#include <random>

namespace magnav {

/// Mixes several seed words into one stream seed (splitmix64 finalizer).
/// Used to derive independent per-trial / per-config RNG streams.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
  auto mix = [](std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  };
  return mix(mix(mix(a) ^ b) ^ c);
}

using Rng = std::mt19937_64;

}  // namespace magnav
