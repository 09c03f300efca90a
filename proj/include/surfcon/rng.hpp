#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace surfcon {

/// Counter-based generator built on the SplitMix64 finalizer.
///
///   mix(z)         : z += 0x9E3779B97F4A7C15;
///                    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9;
///                    z = (z ^ (z >> 27)) * 0x94D049BB133111EB;
///                    return z ^ (z >> 31)
///   key(seed)      = mix(seed)
///   split(k, s)    = mix(k ^ mix(s + 0xD1B54A32D192ED03))
///   bits(k, c)     = mix(k ^ mix(c))
///   uniform(k, c)  = ((bits(k, c) >> 11) + 0.5) * 2^-53        in (0,1)
///   normal(k, c)   = sqrt(-2 ln uniform(k, 2c)) * cos(2 pi uniform(k, 2c+1))
///
/// Every draw is a pure function of (key, counter), so per-pixel streams can
/// be generated in any order or in parallel with identical results.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : key_(mix(seed)) {}

  static constexpr std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Independent child stream.
  CounterRng split(std::uint64_t stream) const {
    CounterRng child(0);
    child.key_ = mix(key_ ^ mix(stream + 0xD1B54A32D192ED03ULL));
    return child;
  }

  std::uint64_t bits(std::uint64_t counter) const { return mix(key_ ^ mix(counter)); }

  double uniform(std::uint64_t counter) const {
    return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal(std::uint64_t counter) const {
    const double u1 = uniform(2 * counter);
    const double u2 = uniform(2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
};

}  // namespace surfcon
