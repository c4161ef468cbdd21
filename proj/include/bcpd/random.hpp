#pragma once

// Seeded randomness and thread-count-independent parallel loops.

#include <cstdint>
#include <functional>
#include <random>

namespace bcpd {

using Rng = std::mt19937_64;

/// One splitmix64 step: advances state and returns the mixed output.
std::uint64_t splitmix64(std::uint64_t& state) noexcept;

/// Seed for an independent stream: splitmix64 applied to seed ^ golden-ratio-scaled stream index.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

/// 0 means one worker per hardware thread.
unsigned resolve_threads(unsigned requested) noexcept;

/// Calls body(i) for i in [0, count) on up to `threads` workers. The first exception is rethrown.
void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& body);

}  // namespace bcpd
