#pragma once

#include <cstdint>
#include <random>

namespace asynclong {

// SplitMix64 finalizer; the stream-derivation mixer.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

using Rng = std::mt19937_64;

// Independent reproducible stream for (base_seed, index): the engine is
// seeded with splitmix64(base_seed XOR splitmix64(index)), so streams are
// order-independent and a parallel run draws the same numbers as a serial
// one.
inline Rng make_stream(std::uint64_t base_seed, std::uint64_t index) {
  return Rng(splitmix64(base_seed ^ splitmix64(index)));
}

}  // namespace asynclong
