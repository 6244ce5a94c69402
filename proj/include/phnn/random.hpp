#pragma once

#include <cstdint>
#include <random>

namespace phnn {

using Rng = std::mt19937_64;

/// Independent stream seed for item `index` under a master seed (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Stream index ranges: training trajectories use [0, n_traj), held-out sets start here.
inline constexpr std::uint64_t validation_streams = std::uint64_t{1} << 20;
inline constexpr std::uint64_t evaluation_streams = std::uint64_t{1} << 21;

inline Rng stream(std::uint64_t master, std::uint64_t index) { return Rng(derive_seed(master, index)); }

}  // namespace phnn
