#pragma once

#include <cmath>
#include <cstdint>

namespace dualtkg {

// Splittable counter-based PRNG (splitmix64 core). Every stochastic
// operation takes one of these explicitly; there is no global generator.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  std::int64_t uniform_int(std::int64_t n) {
    return static_cast<std::int64_t>(next_u64() % static_cast<std::uint64_t>(n));
  }

  // Box-Muller; one fresh draw per call so streams stay position-independent.
  double normal() {
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Child generator consuming one draw from the parent stream.
  Rng split() { return Rng(next_u64()); }

  // Derive an independent stream without advancing this generator.
  Rng fork(std::uint64_t stream) const {
    Rng child(state_ ^ (0x632be59bd9b4e019ULL * (stream + 1)));
    child.next_u64();
    return child;
  }

 private:
  std::uint64_t state_;
};

}  // namespace dualtkg
