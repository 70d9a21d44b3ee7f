#pragma once

// Seeded random streams. Every source of randomness in the library flows
// through Rng so runs are reproducible bit-for-bit: mt19937_64 is fully
// specified by the standard and we avoid std::*_distribution, whose output
// is implementation-defined.

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace gearlab {

inline std::uint64_t hash_mix(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_str(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL; // FNV-1a
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // uniform in [0, 1)
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  std::uint64_t uniform_int(std::uint64_t n) {
    // rejection sampling to avoid modulo bias
    std::uint64_t lim = std::numeric_limits<std::uint64_t>::max() - (std::numeric_limits<std::uint64_t>::max() % n);
    std::uint64_t x;
    do {
      x = gen_();
    } while (x >= lim);
    return x % n;
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    have_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

  std::uint64_t raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Named substream derivation: (seed, "era", epoch, sample) etc. Streams with
// distinct names or indices are independent for practical purposes.
inline Rng substream(std::uint64_t seed, std::string_view name,
                     std::uint64_t a = 0, std::uint64_t b = 0) {
  std::uint64_t h = hash_mix(seed ^ hash_str(name));
  h = hash_mix(h ^ hash_mix(a + 0x517cc1b727220a95ULL));
  h = hash_mix(h ^ hash_mix(b + 0x2545f4914f6cdd1dULL));
  return Rng(h);
}

}  // namespace gearlab
