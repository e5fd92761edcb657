#pragma once

#include "elicit/common.hpp"

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace elicit {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Child seed for a (base, key...) path; stable across runs and platforms.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t s = splitmix64(base);
  for (auto k : keys) s = splitmix64(s ^ splitmix64(k + 0x632be59bd9b4e019ULL));
  return s;
}

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline Vec standard_normal(Rng& rng, Eigen::Index d) {
  std::normal_distribution<double> n01;
  Vec v(d);
  for (Eigen::Index i = 0; i < d; ++i) v[i] = n01(rng);
  return v;
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

}  // namespace elicit
