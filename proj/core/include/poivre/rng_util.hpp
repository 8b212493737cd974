#pragma once

#include <cstdint>

namespace poivre {

/// splitmix64-style mixing of two seeds into one; used everywhere a derived
/// deterministic stream is needed.
inline uint64_t hash_mix(uint64_t a, uint64_t b) {
  uint64_t x = a + 0x9E3779B97F4A7C15ull * (b + 1);
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ull;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBull;
  x ^= x >> 31;
  return x;
}

}  // namespace poivre
