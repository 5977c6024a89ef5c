#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace relx {

// Deterministic random source. All randomness in the toolkit flows through
// this wrapper so that a fixed seed reproduces every draw bit for bit; the
// stdlib distribution objects are avoided on purpose because their output is
// implementation defined.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform double in [lo, hi) built from the top 53 bits of one draw.
  double uniform(double lo, double hi) {
    double u = static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    return lo + u * (hi - lo);
  }

  // Unbiased integer in [0, n) via rejection sampling.
  uint64_t below(uint64_t n) {
    if (n <= 1) return 0;
    uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return x % n;
  }

  bool bernoulli(double p) { return uniform(0.0, 1.0) < p; }

  // Fisher-Yates, fixed order independent of stdlib internals.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace relx
