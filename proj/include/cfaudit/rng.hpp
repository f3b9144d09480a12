#pragma once

#include <cstdint>
#include <random>

namespace cfaudit {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; decorrelates nearby seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Independent stream for (seed, stream id), e.g. one per tree.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix_seed(mix_seed(seed) ^ mix_seed(stream + 0x632BE59BD9B4E019ULL));
}

// Stream ids of the pipeline's model fits.
namespace streams {
inline constexpr std::uint64_t kOutcome = 1;
inline constexpr std::uint64_t kTreatment = 2;
inline constexpr std::uint64_t kOutcomeTreated = 3;
inline constexpr std::uint64_t kOutcomeControl = 4;
inline constexpr std::uint64_t kCausal = 5;
inline constexpr std::uint64_t kPermutation = 6;
inline constexpr std::uint64_t kBackground = 7;
inline constexpr std::uint64_t kRashomon = 8;
}  // namespace streams

}  // namespace cfaudit
