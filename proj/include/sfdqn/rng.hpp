#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace sfdqn {

using Rng = std::mt19937_64;

/// Mixes a root seed with a stream name so independent consumers (env, train, eval, ...)
/// get decorrelated generators. Changing one stream never perturbs another.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view stream, std::uint64_t index = 0) {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (char c : stream) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  std::uint64_t z = root ^ h ^ (index * 0x9e3779b97f4a7c15ull);
  // splitmix64 finalizer
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline Rng make_rng(std::uint64_t root, std::string_view stream, std::uint64_t index = 0) {
  return Rng(derive_seed(root, stream, index));
}

}  // namespace sfdqn
