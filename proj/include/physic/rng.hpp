#pragma once

/// Deterministic random number generation. All randomized components
/// (RANSAC sampling, fixture synthesis) draw through this wrapper so that
/// results are bit-stable across platforms and standard libraries:
/// std::uniform_real_distribution and friends are implementation-defined,
/// so they are deliberately not used.

#include <cmath>
#include <cstdint>
#include <random>

namespace physic {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), gen_(splitmix64(seed)) {}

  uint64_t next_u64() { return gen_(); }

  /// Uniform double in [0, 1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be > 0.
  int uniform_int(int n) { return int(next_u64() % uint64_t(n)); }

  /// Standard normal via Box-Muller.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  /// Derive an independent, reproducible stream (e.g. one per RANSAC
  /// iteration) so iteration results do not depend on evaluation order.
  Rng fork(uint64_t stream) const {
    return Rng(splitmix64(seed_ ^ splitmix64(stream + 0x5851f42d4c957f2dULL)));
  }

 private:
  uint64_t seed_ = 0;
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace physic
