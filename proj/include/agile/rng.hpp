#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace agile {

// mt19937_64 output is specified bit for bit by the standard; the mappings below
// avoid std distributions, whose sequences vary across library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // [0, 1)
  double u01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * u01(); }

  // [0, n)
  std::uint64_t uniform_index(std::uint64_t n) { return n ? eng_() % n : 0; }

  bool bernoulli(double p) { return u01() < p; }

  // Box-Muller, one draw per call; the spare is kept.
  double normal(double mean, double stddev) {
    if (has_spare_) {
      has_spare_ = false;
      return mean + stddev * spare_;
    }
    double u1 = 0.0;
    do {
      u1 = u01();
    } while (u1 <= 0.0);
    double u2 = u01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.28318530717958647692 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return mean + stddev * r * std::cos(a);
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace agile
