#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace modalrecon {

/// The only randomness source of the library: std::mt19937_64 (the 64-bit
/// Mersenne Twister, whose output stream is fixed by the C++ standard).
/// uniform() uses the top 53 bits of one draw; normal() is Box-Muller on two
/// uniforms, caching the second variate. Both are exactly reproducible across
/// platforms, unlike the std distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace modalrecon
