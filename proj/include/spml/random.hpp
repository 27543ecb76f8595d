#pragma once

#include <cstdint>
#include <random>

namespace spml {

using Rng = std::mt19937_64;

// Mixes a base seed with a stream id so independent consumers (weight init,
// shuffling, data generation, corruption) never share a random sequence.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace stream {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kShuffle = 2;
inline constexpr std::uint64_t kData = 3;
inline constexpr std::uint64_t kSplit = 4;
inline constexpr std::uint64_t kCorrupt = 5;
}  // namespace stream

}  // namespace spml
