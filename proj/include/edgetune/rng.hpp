#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

#include "edgetune/common.hpp"

namespace edgetune {

// Counter-based deterministic generator: value i of a named stream depends
// only on (seed, stream name, i), never on draw order. All weight
// initialization and data generation routes through this so a single 64-bit
// seed pins every random number in the artifact.
class CounterRng {
 public:
  explicit CounterRng(u64 seed, std::string_view stream = "")
      : key_(seed ^ fnv1a(stream)) {}

  u64 bits(u64 counter) const { return splitmix(key_ + 0x9e3779b97f4a7c15ull * (counter + 1)); }

  // uniform in [0, 1)
  double uniform(u64 counter) const {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  // uniform in (0, 1]; safe as a log() argument
  double uniform_pos(u64 counter) const {
    return (static_cast<double>(bits(counter) >> 11) + 1.0) * 0x1.0p-53;
  }

  // standard normal via Box-Muller on counters (2c, 2c+1)
  double normal(u64 counter) const {
    double u1 = uniform_pos(2 * counter);
    double u2 = uniform(2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // normal truncated to [-2, 2] sigma, deterministic bounded rejection
  double trunc_normal(u64 counter) const {
    for (u64 attempt = 0; attempt < 16; ++attempt) {
      double n = normal(counter * 16 + attempt + 1);
      if (std::fabs(n) <= 2.0) return n;
    }
    return 0.0;
  }

  u64 uniform_int(u64 counter, u64 upper) const {  // in [0, upper)
    return upper ? bits(counter) % upper : 0;
  }

  static u64 fnv1a(std::string_view s) {
    u64 h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
    return h;
  }

  static u64 splitmix(u64 x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

 private:
  u64 key_;
};

}  // namespace edgetune
