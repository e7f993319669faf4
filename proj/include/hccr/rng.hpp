#ifndef HCCR_RNG_HPP
#define HCCR_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace hccr {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Deterministic random stream: mt19937_64 (algorithm pinned by the C++
/// standard) with explicit bit mappings, so identical seeds give identical
/// sequences across platforms. Distribution classes from <random> are
/// deliberately not used; their output is implementation-defined.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  /// Independent child stream; children with distinct tags do not overlap.
  RngStream fork(std::uint64_t tag) const {
    return RngStream(splitmix64(seed_ ^ splitmix64(tag)));
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0,1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0,n). Rejection sampling, exact.
  std::int64_t uniform_int(std::int64_t n) {
    const auto un = static_cast<std::uint64_t>(n);
    const std::uint64_t threshold = (0 - un) % un;  // 2^64 mod n
    for (;;) {
      const std::uint64_t x = next_u64();
      if (x >= threshold) return static_cast<std::int64_t>(x % un);
    }
  }

  /// Standard normal via Box-Muller; consumes exactly two uniforms per call.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0,1], keeps log finite
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

 private:
  static constexpr double kPi = 3.14159265358979323846;
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace hccr

#endif
