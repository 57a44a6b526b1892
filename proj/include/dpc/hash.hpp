#pragma once

/**
 * FNV-1a 64-bit hashing and a small deterministic RNG.
 *
 * Everything here is fixed-width integer arithmetic so digests and random
 * streams are bit-identical across platforms and standard libraries.
 */

#include <cstdint>
#include <cstddef>
#include <span>
#include <string_view>

namespace dpc {

inline constexpr uint64_t kFnvOffsetBasis = 14695981039346656037ULL;
inline constexpr uint64_t kFnvPrime = 1099511628211ULL;

constexpr uint64_t fnv1a64_step(uint64_t h, uint8_t byte) {
  return (h ^ byte) * kFnvPrime;
}

constexpr uint64_t fnv1a64(std::span<const uint8_t> bytes, uint64_t h = kFnvOffsetBasis) {
  for (uint8_t b : bytes) h = fnv1a64_step(h, b);
  return h;
}

inline uint64_t fnv1a64(std::string_view s, uint64_t h = kFnvOffsetBasis) {
  for (char c : s) h = fnv1a64_step(h, static_cast<uint8_t>(c));
  return h;
}

/// Folds one little-endian u32 into a running FNV-1a chain.
constexpr uint64_t fnv1a64_u32le(uint64_t h, uint32_t v) {
  h = fnv1a64_step(h, static_cast<uint8_t>(v));
  h = fnv1a64_step(h, static_cast<uint8_t>(v >> 8));
  h = fnv1a64_step(h, static_cast<uint8_t>(v >> 16));
  h = fnv1a64_step(h, static_cast<uint8_t>(v >> 24));
  return h;
}

/// Folds one little-endian u64 into a running FNV-1a chain.
constexpr uint64_t fnv1a64_u64le(uint64_t h, uint64_t v) {
  h = fnv1a64_u32le(h, static_cast<uint32_t>(v));
  h = fnv1a64_u32le(h, static_cast<uint32_t>(v >> 32));
  return h;
}

/// SplitMix64 mix function; a bijection on u64, handy for distinct seeded keys.
constexpr uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/**
 * Deterministic RNG used wherever reproducibility matters. std::uniform_*
 * distributions are not bit-stable across standard libraries, so bounded
 * draws go through plain modulo here.
 */
class SplitMix {
 public:
  explicit SplitMix(uint64_t seed) : state_(seed) {}

  uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform-ish draw in [0, n). Modulo bias is irrelevant at our scales.
  uint64_t bounded(uint64_t n) { return n ? next() % n : 0; }

  /// Uniform double in [0, 1).
  double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  uint64_t state_;
};

/// Mixes a label into a seed to derive independent substreams.
inline uint64_t substream(uint64_t seed, uint64_t tag) {
  return splitmix64(seed ^ splitmix64(tag));
}

}  // namespace dpc
