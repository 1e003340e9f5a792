#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace hte {

using Rng = std::mt19937_64;

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view bytes,
                                std::uint64_t hash = 0xcbf29ce484222325ULL) {
  for (const char c : bytes) {
    hash ^= static_cast<unsigned char>(c);
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

/// Named seed derivation: every random sub-computation draws from
/// (root seed, component label, index), so any one of them can be
/// reproduced in isolation.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view label,
                                    std::uint64_t index = 0) {
  return mix64(mix64(root ^ fnv1a64(label)) + index);
}

inline Rng make_rng(std::uint64_t root, std::string_view label,
                    std::uint64_t index = 0) {
  return Rng(derive_seed(root, label, index));
}

}  // namespace hte
