#pragma once

#include <cstdint>
#include <random>

namespace seamless {

using Engine = std::mt19937_64;

// Counter-based seed derivation: every stream is a pure function of
// (parent seed, tag), so any component can be replayed in isolation.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t tag) {
  return splitmix64(parent ^ splitmix64(tag + 0x632be59bd9b4e019ULL));
}

inline Engine make_engine(std::uint64_t parent, std::uint64_t tag) {
  return Engine(derive_seed(parent, tag));
}

// Substream tags used inside one replicate.
namespace stream {
inline constexpr std::uint64_t kCovariates1 = 1;
inline constexpr std::uint64_t kOutcomes1 = 2;
inline constexpr std::uint64_t kRandomizer1 = 3;
inline constexpr std::uint64_t kBootstrap1 = 4;
inline constexpr std::uint64_t kCovariates2 = 11;
inline constexpr std::uint64_t kOutcomes2 = 12;
inline constexpr std::uint64_t kRandomizer2 = 13;
inline constexpr std::uint64_t kBootstrap2 = 14;
}  // namespace stream

/// Uniform draw on [0, 1) using the top 53 bits; identical across platforms.
inline double uniform01(Engine& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n), n > 0, by Lemire's multiply-and-reject method.
inline std::uint64_t uniform_index(Engine& rng, std::uint64_t n) {
  unsigned __int128 m = static_cast<unsigned __int128>(rng()) * n;
  auto low = static_cast<std::uint64_t>(m);
  if (low < n) {
    const std::uint64_t threshold = (0 - n) % n;
    while (low < threshold) {
      m = static_cast<unsigned __int128>(rng()) * n;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

}  // namespace seamless
