#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "puray/geometry.hpp"

namespace puray {

// splitmix64 step; used to derive independent purpose-specific seeds from one
// run seed so adding a consumer never shifts another consumer's stream.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t salt_of(std::string_view tag) {
  // FNV-1a
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  Rng(std::uint64_t seed, std::string_view purpose) : gen_(mix_seed(seed, salt_of(purpose))) {}

  double uniform() { return uni_(gen_); }                       // [0,1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() { return normal_(gen_); }
  bool coin_flip() { return (gen_() >> 63) != 0; }
  std::uint64_t next_u64() { return gen_(); }
  // [0, n)
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(std::uniform_int_distribution<std::uint64_t>(0, n - 1)(gen_));
  }
  Vec3 normal3() {
    double a = normal(), b = normal(), c = normal();
    return {a, b, c};
  }
  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
  std::uniform_real_distribution<double> uni_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace puray
