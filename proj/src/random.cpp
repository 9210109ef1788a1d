#include "pollenstack/random.hpp"

namespace pollenstack::rng {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t finalize(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t mix(std::uint64_t z) noexcept { return finalize(z + kGolden); }

std::uint64_t hash_text(std::string_view text) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

CounterStream::CounterStream(std::initializer_list<std::uint64_t> key) noexcept {
  for (std::uint64_t word : key) state_ = mix(state_ ^ word);
}

std::uint64_t CounterStream::next_u64() noexcept {
  state_ += kGolden;
  return finalize(state_);
}

double CounterStream::next_unit() noexcept {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t CounterStream::next_below(std::uint64_t bound) noexcept {
  auto draw = static_cast<std::uint64_t>(next_unit() * static_cast<double>(bound));
  return draw < bound ? draw : bound - 1;
}

}  // namespace pollenstack::rng
