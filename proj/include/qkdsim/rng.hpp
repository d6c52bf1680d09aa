#pragma once

#include <cstdint>
#include <random>

namespace qkdsim {

/// Random stream used by every sampling operation. Streams are passed explicitly;
/// nothing in the library holds global random state.
using Rng = std::mt19937_64;

/// Independent stream for sub-task `index` of a run seeded with `seed`.
inline Rng make_stream(std::uint64_t seed, std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

/// Stateless 64-bit mix (splitmix64 finalizer) for per-item decisions that must not depend
/// on iteration order.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline double uniform01(Rng& rng) { return std::generate_canonical<double, 53>(rng); }

}  // namespace qkdsim
