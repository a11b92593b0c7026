#pragma once

#include <cmath>
#include <cstdint>

namespace lit {

// SplitMix64 based generator. We roll our own so that streams are
// bit-identical across platforms and standard library versions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller (deterministic, no cached spare).
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Derive an independent stream for a labeled sub-task.
  Rng fork(std::uint64_t salt) const {
    Rng r(state_ ^ (salt * 0xD6E8FEB86659FD93ull + 0xA5A5A5A5A5A5A5A5ull));
    r.next_u64();
    return r;
  }

 private:
  std::uint64_t state_;
};

}  // namespace lit
