#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace coordscan {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ull;
  }
  return h;
}

// Child seed for an independent stream; depends only on the parent seed and
// the stream labels, never on scheduling order.
inline constexpr std::uint64_t derive_seed(std::uint64_t seed,
                                           std::initializer_list<std::uint64_t> labels) {
  std::uint64_t h = splitmix64(seed);
  for (auto l : labels) h = splitmix64(h ^ splitmix64(l));
  return h;
}

}  // namespace coordscan
