#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace pollenstack::rng {

// Counter-based deterministic random streams.
//
// finalize(z): z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//              z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//              return z ^ (z >> 31)
// mix(z)     = finalize(z + 0x9E3779B97F4A7C15)
//
// A stream is keyed by a tuple of 64-bit words, folded into one state:
//
//   state = 0
//   for w in key: state = mix(state ^ w)
//
// Draws then follow the SplitMix64 sequence from that state:
//   next(): state += 0x9E3779B97F4A7C15; return finalize(state)
// Text keys (sample ids) enter as their 64-bit FNV-1a hash. A unit variate
// is (next() >> 11) * 2^-53. Everything is fixed-width integer arithmetic, so
// the same key produces the same draws on every platform and in any language.

std::uint64_t finalize(std::uint64_t z) noexcept;
std::uint64_t mix(std::uint64_t z) noexcept;

std::uint64_t hash_text(std::string_view text) noexcept;

class CounterStream {
 public:
  CounterStream(std::initializer_list<std::uint64_t> key) noexcept;

  std::uint64_t next_u64() noexcept;
  // Uniform in [0, 1).
  double next_unit() noexcept;
  // Uniform integer in [0, bound); bound must be > 0.
  std::uint64_t next_below(std::uint64_t bound) noexcept;

 private:
  std::uint64_t state_ = 0;
};

// Domain tags separate streams that share a user seed.
inline constexpr std::uint64_t kTagAugment = 0x4155474dULL;  // "AUGM"
inline constexpr std::uint64_t kTagSplit = 0x53504c54ULL;    // "SPLT"
inline constexpr std::uint64_t kTagShuffle = 0x5348464cULL;  // "SHFL"

}  // namespace pollenstack::rng
