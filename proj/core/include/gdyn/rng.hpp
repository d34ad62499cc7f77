#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace gdyn {

/// Seeded random stream. Distributions are derived from the raw engine
/// output by hand so that identical seeds give bitwise-identical draws on
/// any platform.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  /// Uniform in [0, 1).
  double uniform() { return double(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard Gumbel(0, 1) draw.
  double gumbel() {
    double u = uniform();
    if (u <= 0.0) u = 0x1.0p-53;
    return -std::log(-std::log(u));
  }

  /// Box-Muller normal; one value per call, no cached state.
  double normal() {
    double u1 = uniform(), u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  int uniform_int(int n) { return int(eng_() % uint64_t(n)); }

 private:
  std::mt19937_64 eng_;
};

}  // namespace gdyn
