#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

#include "dire/tensor.hpp"

namespace dire {

using Rng = std::mt19937_64;

// splitmix64 finalizer; mixes a parent seed with stream/index words so that
// per-image seeds do not depend on the order images are processed in.
inline std::uint64_t mix_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> words) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  std::uint64_t h = mix(seed);
  for (std::uint64_t w : words) h = mix(h ^ w);
  return h;
}

/// FNV-1a 64 of a string, for folding names into seeds.
inline std::uint64_t tag_hash(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline ImageTensor standard_normal(Shape shape, Rng& rng) {
  ImageTensor out(shape);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  for (float& v : out.values()) v = normal(rng);
  return out;
}

}  // namespace dire
