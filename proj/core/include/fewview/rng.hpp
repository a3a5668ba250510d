#pragma once

#include <cstdint>
#include <random>

namespace fewview {

// Deterministic RNG wrapper. The std:: distributions are not pinned down by
// the standard, so every draw here is defined explicitly on top of the
// mt19937_64 bit stream; two runs with the same seed produce the same values
// on any platform.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53 random mantissa bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  float uniform_float() { return static_cast<float>(uniform()); }

  // Uniform integer in [0, n). Modulo bias is < n / 2^64, irrelevant here.
  uint64_t uniform_index(uint64_t n) { return gen_() % n; }

  double uniform_in(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Derive an independent stream, e.g. one per pipeline stage. Advances
  // this generator by one draw.
  Rng fork(uint64_t salt) {
    return Rng(next_u64() ^ (salt * 0x9e3779b97f4a7c15ULL));
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace fewview
