#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace dastack {

using Rng = std::mt19937_64;

/// Derives a child seed from a root seed and a stream name, so every
/// stochastic component (data draw, each base learner, the meta learner)
/// is individually reproducible from one root seed. FNV-1a over the name
/// followed by a splitmix64 finalizer; stable across runs and platforms.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view stream) {
  std::uint64_t h = 1469598103934665603ull;
  for (char c : stream) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  std::uint64_t x = h ^ (root + 0x9e3779b97f4a7c15ull);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebull;
  x ^= x >> 31;
  return x;
}

inline Rng make_rng(std::uint64_t root, std::string_view stream) {
  return Rng(derive_seed(root, stream));
}

}  // namespace dastack
