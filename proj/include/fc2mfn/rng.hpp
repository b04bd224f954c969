// Counter-based seeded PRNG used everywhere determinism is promised
// (dataset generation, weight init, shuffling). SplitMix64 with the
// standard constants; uniforms via 53-bit mantissa scaling, normals via
// Box-Muller. All formulas are explicit so other implementations can
// reproduce identical streams.
#pragma once

#include <cmath>
#include <cstdint>

namespace fc2mfn {

class SplitMix64 {
 public:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;

  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Independent stream for item `index` of a seeded collection.
  static std::uint64_t derive(std::uint64_t master, std::uint64_t index) {
    return mix(master + (index + 1) * kGamma);
  }

  std::uint64_t next() { return mix(state_ += kGamma); }

  // [0, 1)
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform angle in (-pi, pi].
  double uniform_angle() { return M_PI - uniform01() * 2.0 * M_PI; }

  std::uint64_t below(std::uint64_t n) { return next() % n; }

  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    // u1 in (0, 1] keeps the log finite.
    const double u1 = (static_cast<double>(next() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * M_PI * u2;
    cached_ = r * std::sin(t);
    have_cached_ = true;
    return r * std::cos(t);
  }

 private:
  std::uint64_t state_;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace fc2mfn
